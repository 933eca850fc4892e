//! Answer decomposition: document-answer alignment validation, granular
//! aspect extraction with screening, and conversational ordering.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::gateway::{vars, Gateway, Vars};

/// One seed query with its gold answer, reasoning annotation, and candidate
/// documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub query: String,
    pub gold_answer: String,
    #[serde(default)]
    pub overall_reasoning: String,
    pub domain: String,
    pub documents: Vec<Document>,
}

impl SourceRecord {
    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() {
            return Err(Error::Precondition("source query is empty".into()));
        }
        if self.gold_answer.trim().is_empty() {
            return Err(Error::Precondition("source gold answer is empty".into()));
        }
        if self.documents.is_empty() {
            return Err(Error::Precondition("source has no documents".into()));
        }
        Ok(())
    }
}

/// Outcome of the document-answer alignment check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub key_claims: Vec<String>,
    pub supported_claims: Vec<String>,
    pub unsupported_claims: Vec<String>,
    /// |supported| / |key_claims|, recomputed locally.
    pub coverage_percentage: f64,
    pub is_sufficient: bool,
}

/// The ten aspect categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectType {
    Detail,
    Step,
    Implication,
    Distinction,
    Definition,
    Mechanism,
    Example,
    Comparison,
    History,
    Application,
}

impl AspectType {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AspectType::Detail => "detail",
            AspectType::Step => "step",
            AspectType::Implication => "implication",
            AspectType::Distinction => "distinction",
            AspectType::Definition => "definition",
            AspectType::Mechanism => "mechanism",
            AspectType::Example => "example",
            AspectType::Comparison => "comparison",
            AspectType::History => "history",
            AspectType::Application => "application",
        }
    }
}

/// A granular component of the gold answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aspect {
    pub aspect_name: String,
    pub aspect_type: AspectType,
    /// Verbatim substring of the gold answer (whitespace-normalized check).
    pub excerpt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub order_index: usize,
}

/// Screening decision for one candidate aspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScreenVerdict {
    Accept,
    Reject { reason: String, transient: bool },
}

impl ScreenVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ScreenVerdict::Accept)
    }
}

/// Aspects accepted by one extraction round plus per-candidate rejections.
#[derive(Debug, Clone, Default)]
pub struct ExtractionOutcome {
    pub aspects: Vec<Aspect>,
    pub rejected: Vec<(String, String)>,
}

/// Render a document list for prompt interpolation.
pub fn render_documents<'a, I>(documents: I) -> String
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut out = String::new();
    for doc in documents {
        out.push_str(&format!("[{}] {}\n", doc.doc_id, doc.text));
    }
    if out.is_empty() {
        out.push_str("(none)\n");
    }
    out
}

/// Collapse whitespace runs and trim.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Check document-answer alignment. Records with an empty document list get
/// coverage 0 and `is_sufficient = false` without a model call; otherwise the
/// claim lists come from the model and coverage is recomputed locally.
pub fn validate_alignment(source: &SourceRecord, llm: &Gateway) -> Result<AlignmentReport> {
    if source.documents.is_empty() {
        return Ok(AlignmentReport {
            key_claims: Vec::new(),
            supported_claims: Vec::new(),
            unsupported_claims: Vec::new(),
            coverage_percentage: 0.0,
            is_sufficient: false,
        });
    }
    source.validate()?;
    let response = llm.complete_structured(
        "alignment_validation",
        &vars([
            ("gold_answer", source.gold_answer.clone()),
            ("documents", render_documents(&source.documents)),
        ]),
    )?;
    let key_claims = string_list(&response.parsed["key_claims"]);
    let reported_supported = string_list(&response.parsed["supported_claims"]);
    // Keep claim sets consistent: supported/unsupported partition key_claims.
    let supported_claims: Vec<String> = key_claims
        .iter()
        .filter(|c| reported_supported.contains(c))
        .cloned()
        .collect();
    let unsupported_claims: Vec<String> = key_claims
        .iter()
        .filter(|c| !supported_claims.contains(c))
        .cloned()
        .collect();
    let coverage_percentage = if key_claims.is_empty() {
        0.0
    } else {
        supported_claims.len() as f64 / key_claims.len() as f64
    };
    Ok(AlignmentReport {
        key_claims,
        supported_claims,
        unsupported_claims,
        coverage_percentage,
        is_sufficient: response.parsed["is_sufficient"].as_bool().unwrap_or(false),
    })
}

fn string_list(value: &Value) -> Vec<String> {
    value
        .as_array()
        .map(|arr| {
            arr.iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

fn render_existing(existing: &[Aspect]) -> String {
    if existing.is_empty() {
        return "(none)".to_string();
    }
    existing
        .iter()
        .map(|a| format!("- [{}] {}: {}", a.aspect_type.as_str(), a.aspect_name, a.excerpt))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Extract up to `batch` new aspects, screening each candidate for verbatim
/// excerpts, overlap with existing aspects, and suitability. Callers iterate
/// until the target count is reached or a round yields nothing new.
pub fn extract_aspects(
    source: &SourceRecord,
    existing: &[Aspect],
    batch: usize,
    llm: &Gateway,
) -> Result<ExtractionOutcome> {
    source.validate()?;
    if batch == 0 {
        return Err(Error::Precondition("extraction batch must be >= 1".into()));
    }
    let response = llm.complete_structured(
        "aspect_extraction",
        &vars([
            ("num_aspects", batch.to_string()),
            ("query", source.query.clone()),
            ("reasoning", source.overall_reasoning.clone()),
            ("gold_answer", source.gold_answer.clone()),
            ("existing_aspects", render_existing(existing)),
        ]),
    )?;

    let normalized_answer = normalize_ws(&source.gold_answer);
    let mut outcome = ExtractionOutcome::default();
    let mut accepted: Vec<Aspect> = existing.to_vec();
    let empty = Vec::new();
    let candidates = response.parsed["aspects"].as_array().unwrap_or(&empty);
    for candidate in candidates {
        if outcome.aspects.len() >= batch {
            break;
        }
        let name = candidate["aspect_name"].as_str().unwrap_or("").to_string();
        let excerpt = candidate["excerpt"].as_str().unwrap_or("").to_string();
        let Some(aspect_type) = candidate["aspect_type"]
            .as_str()
            .and_then(AspectType::parse)
        else {
            outcome.rejected.push((name, "invalid aspect_type".into()));
            continue;
        };
        if !normalized_answer.contains(&normalize_ws(&excerpt)) || excerpt.trim().is_empty() {
            outcome
                .rejected
                .push((name, "excerpt not found verbatim in gold answer".into()));
            continue;
        }
        let aspect = Aspect {
            aspect_name: name.clone(),
            aspect_type,
            excerpt,
            coverage: candidate.get("coverage").and_then(Value::as_f64),
            order_index: accepted.len(),
        };
        match screen_aspect(&aspect, &accepted, llm)? {
            ScreenVerdict::Accept => {
                accepted.push(aspect.clone());
                outcome.aspects.push(aspect);
            }
            ScreenVerdict::Reject { reason, .. } => outcome.rejected.push((name, reason)),
        }
    }
    Ok(outcome)
}

/// Reject a candidate that overlaps an existing aspect or is classified
/// meta / insufficient; accept otherwise.
pub fn screen_aspect(
    candidate: &Aspect,
    existing: &[Aspect],
    llm: &Gateway,
) -> Result<ScreenVerdict> {
    if !existing.is_empty() {
        let overlap = llm.complete_structured(
            "aspect_overlap",
            &vars([
                ("aspect_name", candidate.aspect_name.clone()),
                ("aspect_type", candidate.aspect_type.as_str().to_string()),
                ("excerpt", candidate.excerpt.clone()),
                ("existing_aspects_text", render_existing(existing)),
            ]),
        );
        match overlap {
            Ok(resp) => {
                if resp.parsed["has_overlap"].as_bool() == Some(true) {
                    let overlap_type = resp.parsed["overlap_type"]
                        .as_str()
                        .unwrap_or("overlap")
                        .to_string();
                    return Ok(ScreenVerdict::Reject {
                        reason: overlap_type,
                        transient: false,
                    });
                }
            }
            Err(e) if e.is_transient() => {
                return Ok(ScreenVerdict::Reject {
                    reason: format!("gateway failure: {e}"),
                    transient: true,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let suitability = llm.complete_structured(
        "aspect_suitability",
        &vars([
            ("aspect_name", candidate.aspect_name.clone()),
            ("aspect_type", candidate.aspect_type.as_str().to_string()),
            ("excerpt", candidate.excerpt.clone()),
        ]),
    );
    match suitability {
        Ok(resp) => {
            let category = resp.parsed["aspect_category"].as_str().unwrap_or("substantive");
            if matches!(category, "meta" | "insufficient") {
                Ok(ScreenVerdict::Reject {
                    reason: category.to_string(),
                    transient: false,
                })
            } else {
                Ok(ScreenVerdict::Accept)
            }
        }
        Err(e) if e.is_transient() => Ok(ScreenVerdict::Reject {
            reason: format!("gateway failure: {e}"),
            transient: true,
        }),
        Err(e) => Err(e),
    }
}

/// Order aspects for conversational flow. Invalid permutations from the model
/// are retried once, then the input order is kept.
pub fn order_aspects(aspects: &[Aspect], strategy_note: &str, llm: &Gateway) -> Result<Vec<usize>> {
    if aspects.is_empty() {
        return Err(Error::Precondition("no aspects to order".into()));
    }
    if aspects.len() == 1 {
        return Ok(vec![0]);
    }
    let summaries = aspects
        .iter()
        .map(|a| format!("[{}] {}", a.aspect_type.as_str(), a.aspect_name))
        .collect::<Vec<_>>()
        .join("\n");
    let call_vars: Vars = vars([
        ("conversation_strategy", strategy_note.to_string()),
        ("aspect_summaries", summaries),
    ]);
    for _ in 0..2 {
        let response = llm.complete_structured("aspect_ordering", &call_vars)?;
        let indices: Vec<usize> = response.parsed["ordered_indices"]
            .as_array()
            .map(|arr| {
                arr.iter()
                    .filter_map(|v| v.as_u64().map(|n| n as usize))
                    .collect()
            })
            .unwrap_or_default();
        if is_permutation(&indices, aspects.len()) {
            return Ok(indices);
        }
    }
    Ok((0..aspects.len()).collect())
}

fn is_permutation(indices: &[usize], n: usize) -> bool {
    if indices.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

//! Automatic conversation-quality assessment: four scored dimensions,
//! turn-level dependency and question-pattern classification, label
//! distribution entropy, and human-alignment reporting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Document;
use crate::decompose::render_documents;
use crate::error::{Error, Result};
use crate::gateway::{template, vars, Gateway, Vars};
use crate::turns::{Conversation, Turn};

/// The four audit dimensions with per-dimension evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditScore {
    pub naturalness: u8,
    pub turn_coherence: u8,
    pub question_quality: u8,
    pub groundedness: u8,
    /// Evidence quotes per dimension; may be empty only at score 5.
    pub evidence: BTreeMap<String, Vec<String>>,
    /// True when a dimension failed after its retry and carries a default.
    #[serde(default)]
    pub partial: bool,
}

impl AuditScore {
    pub fn dimensions(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("naturalness".to_string(), self.naturalness as f64),
            ("turn_coherence".to_string(), self.turn_coherence as f64),
            ("question_quality".to_string(), self.question_quality as f64),
            ("groundedness".to_string(), self.groundedness as f64),
        ])
    }
}

/// The six ways a turn can depend on prior dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyType {
    Coreference,
    Ellipsis,
    Substitution,
    Continuation,
    TopicShift,
    SelfContained,
}

impl DependencyType {
    pub const ALL: [DependencyType; 6] = [
        DependencyType::Coreference,
        DependencyType::Ellipsis,
        DependencyType::Substitution,
        DependencyType::Continuation,
        DependencyType::TopicShift,
        DependencyType::SelfContained,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DependencyType::Coreference => "coreference",
            DependencyType::Ellipsis => "ellipsis",
            DependencyType::Substitution => "substitution",
            DependencyType::Continuation => "continuation",
            DependencyType::TopicShift => "topic_shift",
            DependencyType::SelfContained => "self_contained",
        }
    }
}

/// Dependency label with quoted evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependencyLabel {
    pub label: DependencyType,
    pub evidence: String,
}

/// The nine question patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionPattern {
    Why,
    How,
    What,
    Compare,
    WhatIf,
    Confirm,
    MoreDetail,
    Example,
    Effect,
}

impl QuestionPattern {
    pub const ALL: [QuestionPattern; 9] = [
        QuestionPattern::Why,
        QuestionPattern::How,
        QuestionPattern::What,
        QuestionPattern::Compare,
        QuestionPattern::WhatIf,
        QuestionPattern::Confirm,
        QuestionPattern::MoreDetail,
        QuestionPattern::Example,
        QuestionPattern::Effect,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionPattern::Why => "why",
            QuestionPattern::How => "how",
            QuestionPattern::What => "what",
            QuestionPattern::Compare => "compare",
            QuestionPattern::WhatIf => "what_if",
            QuestionPattern::Confirm => "confirm",
            QuestionPattern::MoreDetail => "more_detail",
            QuestionPattern::Example => "example",
            QuestionPattern::Effect => "effect",
        }
    }
}

/// Question-pattern label with quoted evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternLabel {
    pub label: QuestionPattern,
    pub evidence: String,
}

fn render_conversation(conversation: &Conversation) -> String {
    conversation
        .turns
        .iter()
        .map(|t| format!("Q{}: {}\nA{}: {}", t.turn_index, t.conversational_query, t.turn_index, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Score one dimension; returns `(score, evidence)` or `None` after the
/// retry budget is spent or evidence is missing below score 5.
fn audit_dimension(
    template_id: &str,
    call_vars: &Vars,
    evidence_fields: &[&str],
    llm: &Gateway,
) -> Option<(u8, Vec<String>)> {
    let response = llm.complete_structured(template_id, call_vars).ok()?;
    let score = response.parsed["score"].as_i64()? as u8;
    let mut evidence: Vec<String> = Vec::new();
    for field in evidence_fields {
        if let Some(items) = response.parsed[*field].as_array() {
            evidence.extend(items.iter().filter_map(|v| v.as_str().map(str::to_string)));
        }
    }
    // Evidence lists may be empty only for a perfect score.
    if score < 5 && evidence.is_empty() {
        return None;
    }
    Some((score, evidence))
}

/// Audit one conversation on the four quality dimensions, one independent
/// prompt call per dimension. A dimension failing after its retry leaves the
/// audit marked partial with a conservative score of 1.
pub fn audit_conversation(
    conversation: &Conversation,
    documents: &[Document],
    llm: &Gateway,
) -> Result<AuditScore> {
    conversation.validate()?;
    let rendered = render_conversation(conversation);
    let questions = conversation
        .turns
        .iter()
        .map(|t| format!("{}. {}", t.turn_index, t.conversational_query))
        .collect::<Vec<_>>()
        .join("\n");
    let answers = conversation
        .turns
        .iter()
        .map(|t| format!("{}. {}", t.turn_index, t.answer))
        .collect::<Vec<_>>()
        .join("\n");

    let calls: [(&str, Vars, &[&str]); 4] = [
        (
            "audit_naturalness",
            vars([("conversation", rendered.clone())]),
            &["natural_phrases", "unnatural_phrases"],
        ),
        (
            "audit_coherence",
            vars([("conversation", rendered.clone())]),
            &["good_connections", "weak_connections", "unclear_references"],
        ),
        (
            "audit_question_quality",
            vars([
                ("original_query", conversation.source_ref.clone()),
                ("questions", questions),
            ]),
            &["aspects_covered", "repeated_questions", "weak_questions"],
        ),
        (
            "audit_groundedness",
            vars([
                ("documents", render_documents(documents)),
                ("answers", answers),
            ]),
            &["supported_claims", "unsupported_claims", "made_up_content"],
        ),
    ];

    let mut scores = [5u8; 4];
    let mut evidence = BTreeMap::new();
    let mut partial = false;
    let names = ["naturalness", "turn_coherence", "question_quality", "groundedness"];
    for (i, (template_id, call_vars, fields)) in calls.iter().enumerate() {
        match audit_dimension(template_id, call_vars, fields, llm) {
            Some((score, quotes)) => {
                scores[i] = score;
                evidence.insert(names[i].to_string(), quotes);
            }
            None => {
                scores[i] = 1;
                evidence.insert(names[i].to_string(), vec!["(dimension failed)".to_string()]);
                partial = true;
            }
        }
    }
    Ok(AuditScore {
        naturalness: scores[0],
        turn_coherence: scores[1],
        question_quality: scores[2],
        groundedness: scores[3],
        evidence,
        partial,
    })
}

/// Classify how a turn's question depends on prior context. An empty prior
/// context is self-contained by definition and skips the model call.
pub fn classify_dependency(
    turn: &Turn,
    prior_context: &str,
    llm: &Gateway,
) -> Result<DependencyLabel> {
    if prior_context.trim().is_empty() {
        return Ok(DependencyLabel {
            label: DependencyType::SelfContained,
            evidence: "first turn has no prior context".to_string(),
        });
    }
    for attempt in 0..2 {
        let mut call_vars = vars([
            ("prior_context", prior_context.to_string()),
            ("current_question", turn.conversational_query.clone()),
        ]);
        if attempt > 0 {
            call_vars.insert(
                "current_question".into(),
                format!("{}\n(Pick exactly one of the six labels.)", turn.conversational_query),
            );
        }
        let response = llm.complete_structured("dependency_classification", &call_vars)?;
        if let Some(label) = response.parsed["dependency_type"]
            .as_str()
            .and_then(DependencyType::parse)
        {
            return Ok(DependencyLabel {
                label,
                evidence: response.parsed["evidence"].as_str().unwrap_or("").to_string(),
            });
        }
    }
    Err(Error::InvalidInput(
        "dependency label outside the six-type enum after retry".into(),
    ))
}

/// Classify what kind of answer a question seeks.
pub fn classify_question_pattern(question: &str, llm: &Gateway) -> Result<PatternLabel> {
    if question.trim().is_empty() {
        return Err(Error::Precondition("question is empty".into()));
    }
    for attempt in 0..2 {
        let mut call_vars = vars([("question", question.to_string())]);
        if attempt > 0 {
            call_vars.insert(
                "question".into(),
                format!("{question}\n(Pick exactly one of the nine patterns.)"),
            );
        }
        let response = llm.complete_structured("question_pattern_classification", &call_vars)?;
        if let Some(label) = response.parsed["question_pattern"]
            .as_str()
            .and_then(QuestionPattern::parse)
        {
            return Ok(PatternLabel {
                label,
                evidence: response.parsed["evidence"].as_str().unwrap_or("").to_string(),
            });
        }
    }
    Err(Error::InvalidInput(
        "question pattern outside the nine-type enum after retry".into(),
    ))
}

/// Shannon entropy of `counts` over `k` categories, normalized by `ln k`.
///
/// Zero counts contribute nothing; `k` may exceed the populated bucket count
/// (zero padding). All-zero counts are an error.
pub fn normalized_entropy(counts: &[u64], k: usize) -> Result<f64> {
    if k < counts.len() {
        return Err(Error::Precondition(format!(
            "category count {k} below bucket count {}",
            counts.len()
        )));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Precondition("all counts are zero".into()));
    }
    if k == 1 {
        return Ok(0.0);
    }
    let mut entropy = 0.0;
    for &count in counts {
        if count == 0 {
            continue;
        }
        let p = count as f64 / total as f64;
        entropy -= p * p.ln();
    }
    Ok(entropy / (k as f64).ln())
}

/// Per-dimension delta between automatic and human means, with a pass flag
/// per dimension at the given threshold.
#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReportRow {
    pub dimension: String,
    pub llm_mean: f64,
    pub human_mean: f64,
    pub delta: f64,
    pub within_threshold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HumanAlignmentReport {
    pub rows: Vec<AlignmentReportRow>,
    pub threshold: f64,
    pub pass: bool,
}

/// Compare automatic dimension means against human means; pass iff every
/// |delta| stays within the threshold. Key sets must match.
pub fn human_alignment_report(
    llm_means: &BTreeMap<String, f64>,
    human_means: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<HumanAlignmentReport> {
    if llm_means.keys().ne(human_means.keys()) {
        return Err(Error::Precondition(
            "dimension keys differ between automatic and human means".into(),
        ));
    }
    let rows: Vec<AlignmentReportRow> = llm_means
        .iter()
        .map(|(dimension, &llm_mean)| {
            let human_mean = human_means[dimension];
            let delta = llm_mean - human_mean;
            AlignmentReportRow {
                dimension: dimension.clone(),
                llm_mean,
                human_mean,
                delta,
                within_threshold: delta.abs() <= threshold,
            }
        })
        .collect();
    Ok(HumanAlignmentReport {
        pass: rows.iter().all(|r| r.within_threshold),
        rows,
        threshold,
    })
}

/// Distribution of labels with normalized entropy, for report tables.
#[derive(Debug, Clone, Serialize)]
pub struct LabelDistribution {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub normalized_entropy: f64,
}

/// Tally dependency labels over a dataset; the six types partition the turn
/// set.
pub fn dependency_distribution(labels: &[DependencyLabel]) -> Result<LabelDistribution> {
    let mut counts: BTreeMap<String, u64> = DependencyType::ALL
        .iter()
        .map(|t| (t.as_str().to_string(), 0))
        .collect();
    for label in labels {
        *counts.get_mut(label.label.as_str()).unwrap() += 1;
    }
    let values: Vec<u64> = counts.values().copied().collect();
    Ok(LabelDistribution {
        total: values.iter().sum(),
        normalized_entropy: normalized_entropy(&values, DependencyType::ALL.len())?,
        counts,
    })
}

/// Tally question patterns over a dataset.
pub fn pattern_distribution(labels: &[PatternLabel]) -> Result<LabelDistribution> {
    let mut counts: BTreeMap<String, u64> = QuestionPattern::ALL
        .iter()
        .map(|t| (t.as_str().to_string(), 0))
        .collect();
    for label in labels {
        *counts.get_mut(label.label.as_str()).unwrap() += 1;
    }
    let values: Vec<u64> = counts.values().copied().collect();
    Ok(LabelDistribution {
        total: values.iter().sum(),
        normalized_entropy: normalized_entropy(&values, QuestionPattern::ALL.len())?,
        counts,
    })
}

/// The audit templates must enumerate exactly the labels of the two enums.
pub fn enum_consistency_check() -> bool {
    template::DEPENDENCY_TYPES
        .iter()
        .all(|s| DependencyType::parse(s).is_some())
        && template::QUESTION_PATTERNS
            .iter()
            .all(|s| QuestionPattern::parse(s).is_some())
}

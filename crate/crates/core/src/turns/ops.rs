//! Per-turn generation operations.

use serde_json::Value;

use super::{render_history, DocScore, RetrievalReasoning};
use crate::corpus::Document;
use crate::decompose::{normalize_ws, render_documents, Aspect};
use crate::error::{Error, Result};
use crate::facts::FactReport;
use crate::gateway::schema::{FieldKind, FieldSpec, Schema};
use crate::gateway::{vars, Gateway, PromptTemplate};

/// Generated sub-question with model confidence.
#[derive(Debug, Clone)]
pub struct SubQuestion {
    pub sub_question: String,
    pub confidence: f64,
}

/// Scores for one candidate set plus clamp/missing-entry warnings.
#[derive(Debug, Clone, Default)]
pub struct ScoreOutcome {
    pub scores: Vec<DocScore>,
    pub warnings: Vec<String>,
}

/// Turn-diversity verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiversityVerdict {
    AddsValue(String),
    Repetitive,
}

fn render_facts(report: &FactReport) -> String {
    let lines: Vec<String> = report
        .supported_facts()
        .map(|f| format!("- {}", f.fact))
        .collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

fn render_lines(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items
            .iter()
            .map(|s| format!("- {s}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Generate a focused sub-question for a surviving aspect.
///
/// A question duplicating one in `prior_subqs` triggers a single retry with
/// the duplicate added to the prompt's previous-question list; `Ok(None)`
/// means still duplicate, and the caller skips the aspect.
pub fn generate_subquestion(
    aspect: &Aspect,
    facts: &FactReport,
    prior_subqs: &[String],
    overall_reasoning: &str,
    query: &str,
    llm: &Gateway,
) -> Result<Option<SubQuestion>> {
    if !facts.survives {
        return Err(Error::Precondition(format!(
            "aspect `{}` has no verified facts",
            aspect.aspect_name
        )));
    }
    let mut known: Vec<String> = prior_subqs.to_vec();
    for _ in 0..2 {
        let response = llm.complete_structured(
            "subquestion_generation",
            &vars([
                ("query", query.to_string()),
                ("overall_reasoning", overall_reasoning.to_string()),
                ("aspect_name", aspect.aspect_name.clone()),
                ("aspect_type", aspect.aspect_type.as_str().to_string()),
                ("semantic_facts", render_facts(facts)),
                ("previous_subquestions", render_lines(&known)),
            ]),
        )?;
        let question = response.parsed["sub_question"]
            .as_str()
            .unwrap_or("")
            .trim()
            .to_string();
        if question.is_empty() {
            return Ok(None);
        }
        let duplicate = prior_subqs
            .iter()
            .any(|p| normalize_ws(p).eq_ignore_ascii_case(&normalize_ws(&question)));
        if !duplicate {
            return Ok(Some(SubQuestion {
                confidence: response.parsed["confidence"].as_f64().unwrap_or(0.0),
                sub_question: question,
            }));
        }
        known.push(question);
    }
    Ok(None)
}

/// Score every candidate document against the sub-question.
///
/// Components outside `[0, 10]` are clamped with a warning; candidates the
/// model skipped get zero scores with a warning. The model's own final score
/// is discarded and recomputed locally.
pub fn score_documents(
    sub_question: &str,
    reasoning: &str,
    facts: &FactReport,
    candidates: &[Document],
    llm: &Gateway,
) -> Result<ScoreOutcome> {
    if candidates.is_empty() {
        return Err(Error::Precondition("no candidate documents to score".into()));
    }
    let response = llm.complete_structured(
        "document_scoring",
        &vars([
            ("sub_question", sub_question.to_string()),
            ("retrieval_reasoning", reasoning.to_string()),
            ("semantic_facts", render_facts(facts)),
            ("candidate_docs", render_documents(candidates)),
        ]),
    )?;

    let mut outcome = ScoreOutcome::default();
    let empty = Vec::new();
    let entries = response.parsed["document_scores"].as_array().unwrap_or(&empty);
    for candidate in candidates {
        let entry = entries
            .iter()
            .find(|e| e["doc_id"].as_str() == Some(candidate.doc_id.as_str()));
        let Some(entry) = entry else {
            outcome
                .warnings
                .push(format!("no score returned for `{}`; defaulting to 0", candidate.doc_id));
            outcome.scores.push(DocScore::new(&candidate.doc_id, 0, 0, 0, 0));
            continue;
        };
        let mut component = |key: &str| -> u8 {
            let raw = entry[key].as_i64().unwrap_or(0);
            if !(0..=10).contains(&raw) {
                outcome.warnings.push(format!(
                    "`{}` {key} = {raw} outside [0, 10]; clamped",
                    candidate.doc_id
                ));
            }
            raw.clamp(0, 10) as u8
        };
        let support = component("support_score");
        let completeness = component("completeness_score");
        let clarity = component("clarity_score");
        let misleading = component("misleading_score");
        let mut score = DocScore::new(&candidate.doc_id, support, completeness, clarity, misleading);
        score.rationale = entry["reasoning"].as_str().unwrap_or("").to_string();
        outcome.scores.push(score);
    }
    Ok(outcome)
}

/// Ids of documents scoring at or above the threshold, descending by score
/// with ascending doc_id on ties. Empty selection signals an aspect skip.
pub fn select_documents(scores: &[DocScore], threshold: f64) -> Result<Vec<String>> {
    if scores.is_empty() {
        return Err(Error::Precondition("no scores to select from".into()));
    }
    let mut selected: Vec<&DocScore> = scores.iter().filter(|s| s.final_score >= threshold).collect();
    selected.sort_by(|a, b| {
        b.final_score
            .partial_cmp(&a.final_score)
            .unwrap()
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    Ok(selected.into_iter().map(|s| s.doc_id.clone()).collect())
}

fn first_word(text: &str) -> String {
    text.split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Naturalized query plus warnings (fallbacks, repeated openers).
#[derive(Debug, Clone)]
pub struct NaturalizeOutcome {
    pub query: String,
    pub warnings: Vec<String>,
}

/// Turn a technical sub-question into a conversational query.
///
/// Turn 1 uses the standalone opening template; later turns use the follow-up
/// template with full history. Reusing a prior opener word triggers one retry.
/// Gateway failures fall back to the raw sub-question with a warning.
pub fn naturalize_query(
    sub_question: &str,
    history: &[(String, String)],
    turn_index: usize,
    prior_openers: &[String],
    topic: &str,
    llm: &Gateway,
) -> Result<NaturalizeOutcome> {
    if turn_index < 1 {
        return Err(Error::Precondition("turn_index must be >= 1".into()));
    }
    if (turn_index == 1) != history.is_empty() {
        return Err(Error::Precondition(
            "history must be empty exactly when turn_index is 1".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut starters = prior_openers.join(", ");
    for retry in 0..2 {
        let response = if turn_index == 1 {
            llm.complete_structured(
                "opening_query",
                &vars([
                    ("original_query", topic.to_string()),
                    ("sub_question", sub_question.to_string()),
                ]),
            )
        } else {
            llm.complete_structured(
                "followup_query",
                &vars([
                    ("original_query", topic.to_string()),
                    ("history", render_history(history)),
                    ("sub_question", sub_question.to_string()),
                    ("previous_starters", if starters.is_empty() { "(none)".to_string() } else { starters.clone() }),
                ]),
            )
        };
        match response {
            Ok(resp) => {
                let query = resp.parsed["conversational_query"]
                    .as_str()
                    .unwrap_or("")
                    .trim()
                    .to_string();
                if query.is_empty() {
                    warnings.push("empty conversational query; using raw sub-question".into());
                    return Ok(NaturalizeOutcome {
                        query: sub_question.to_string(),
                        warnings,
                    });
                }
                let opener = first_word(&query);
                let repeated = !opener.is_empty()
                    && prior_openers.iter().any(|p| first_word(p) == opener || p.to_lowercase() == opener);
                if repeated && retry == 0 {
                    starters = format!("{starters}, {opener} (just repeated, avoid it)");
                    continue;
                }
                if repeated {
                    warnings.push(format!("opener `{opener}` repeated after retry"));
                }
                return Ok(NaturalizeOutcome { query, warnings });
            }
            Err(e) => {
                warnings.push(format!("naturalization failed ({e}); using raw sub-question"));
                return Ok(NaturalizeOutcome {
                    query: sub_question.to_string(),
                    warnings,
                });
            }
        }
    }
    unreachable!("loop always returns");
}

const META_TOKENS: &[&str] = &["document", "documents", "source", "sources", "passage", "passages"];

fn has_meta_reference(answer: &str) -> bool {
    let lower = answer.to_lowercase();
    if lower.contains("the text") || lower.contains("provided text") {
        return true;
    }
    use unicode_segmentation::UnicodeSegmentation;
    lower.unicode_words().any(|w| META_TOKENS.contains(&w))
}

/// Generate a 2-4 sentence grounded answer from the selected documents.
///
/// Answers mentioning documents or sources are rejected by a lexical filter
/// and retried once; `Ok(None)` means the meta-reference persisted and the
/// turn is dropped.
pub fn generate_grounded_answer(
    query: &str,
    history: &[(String, String)],
    selected_documents: &[Document],
    llm: &Gateway,
) -> Result<Option<String>> {
    if selected_documents.is_empty() {
        return Err(Error::Precondition("no selected documents to answer from".into()));
    }
    let mut effective_query = query.to_string();
    for _ in 0..2 {
        let response = llm.complete_structured(
            "grounded_answer",
            &vars([
                ("history", render_history(history)),
                ("query", effective_query.clone()),
                ("documents", render_documents(selected_documents)),
            ]),
        )?;
        let answer = response.parsed["answer"].as_str().unwrap_or("").trim().to_string();
        if answer.is_empty() {
            return Ok(None);
        }
        if !has_meta_reference(&answer) {
            return Ok(Some(answer));
        }
        effective_query = format!("{query}\n(Answer in your own words, without mentioning any documents or sources.)");
    }
    Ok(None)
}

/// Check whether a new answer adds value over the conversation so far.
pub fn check_turn_diversity(
    new_answer: &str,
    history: &[(String, String)],
    llm: &Gateway,
) -> Result<DiversityVerdict> {
    if history.is_empty() {
        return Err(Error::Precondition(
            "diversity check requires non-empty history; first turns pass vacuously".into(),
        ));
    }
    let response = llm.complete_structured(
        "turn_diversity",
        &vars([
            ("previous_content", render_history(history)),
            ("new_answer", new_answer.to_string()),
        ]),
    )?;
    let adds_value = response.parsed["adds_value"].as_bool().unwrap_or(false);
    let value_type = response.parsed["value_type"].as_str().unwrap_or("repetitive");
    if adds_value && value_type != "repetitive" {
        Ok(DiversityVerdict::AddsValue(value_type.to_string()))
    } else {
        Ok(DiversityVerdict::Repetitive)
    }
}

/// Module-local annotation prompt (the retrieval-reasoning schema has no
/// published prompt).
const ANNOTATION_TEMPLATE: PromptTemplate = PromptTemplate {
    template_id: "retrieval_reasoning_annotation",
    body: "Describe the retrieval reasoning for this conversational turn.\n\n\
           SUB-QUESTION: {sub_question}\n\n\
           SELECTED DOCUMENTS:\n{documents}\n\n\
           State the information target (what a relevant document must contain), \
           the relevance signals (terms or concepts that mark a document as useful), \
           and the irrelevance signals (nearby content that does NOT help).\n\n\
           Return JSON:\n{\n  \"target\": \"...\",\n  \"relevance_signals\": [\"...\"],\n  \"irrelevance_signals\": [\"...\"]\n}",
    expected_schema: Schema {
        fields: &[
            FieldSpec::required("target", FieldKind::Text),
            FieldSpec::required("relevance_signals", FieldKind::TextList),
            FieldSpec::required("irrelevance_signals", FieldKind::TextList),
        ],
    },
};

/// Annotation plus a flag warning when relevance signals stayed empty after
/// the retry.
#[derive(Debug, Clone)]
pub struct AnnotationOutcome {
    pub reasoning: RetrievalReasoning,
    pub flagged: bool,
}

/// Annotate the information target and relevance/irrelevance signals for a
/// turn. Empty relevance signals trigger one retry, then flag the turn.
pub fn annotate_retrieval_reasoning(
    sub_question: &str,
    selected_documents: &[Document],
    llm: &Gateway,
) -> Result<AnnotationOutcome> {
    if selected_documents.is_empty() {
        return Err(Error::Precondition("no selected documents to annotate".into()));
    }
    let mut effective_subq = sub_question.to_string();
    let mut last = RetrievalReasoning::default();
    for _ in 0..2 {
        let response = llm.complete_structured_with(
            &ANNOTATION_TEMPLATE,
            &vars([
                ("sub_question", effective_subq.clone()),
                ("documents", render_documents(selected_documents)),
            ]),
        )?;
        last = RetrievalReasoning {
            target: response.parsed["target"].as_str().unwrap_or("").to_string(),
            relevance_signals: string_list(&response.parsed["relevance_signals"]),
            irrelevance_signals: string_list(&response.parsed["irrelevance_signals"]),
        };
        if !last.relevance_signals.is_empty() {
            return Ok(AnnotationOutcome {
                reasoning: last,
                flagged: false,
            });
        }
        effective_subq = format!("{sub_question}\n(List at least one relevance signal.)");
    }
    Ok(AnnotationOutcome {
        reasoning: last,
        flagged: true,
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

//! Conversation assembly and the full per-source synthesis pipeline.

use serde::{Deserialize, Serialize};

use super::ops::{
    annotate_retrieval_reasoning, check_turn_diversity, generate_grounded_answer,
    generate_subquestion, naturalize_query, score_documents, select_documents, DiversityVerdict,
};
use super::{Conversation, Turn, MAX_TURNS, MIN_TURNS};
use crate::corpus::Document;
use crate::decompose::{
    extract_aspects, order_aspects, validate_alignment, Aspect,
};
use crate::error::{Error, Result};
use crate::facts::{extract_and_verify_facts, support_summary, FactReport, SupportSummary};
use crate::gateway::Gateway;
use crate::par;

/// Knobs for synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Target number of aspects to decompose per source.
    pub aspects_per_record: usize,
    /// Document selection threshold on the weighted score.
    pub selection_threshold: f64,
    /// Note passed to aspect ordering.
    pub conversation_strategy: String,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            aspects_per_record: 6,
            selection_threshold: 5.0,
            conversation_strategy:
                "Build from foundational definitions toward mechanisms, examples, and implications."
                    .to_string(),
        }
    }
}

/// Machine-readable rejection reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    TooLong,
    ValidationFailed,
}

/// A conversation that failed assembly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    pub reason: RejectionReason,
    pub detail: String,
}

/// Result of assembling one conversation.
#[derive(Debug, Clone)]
pub enum AssembleOutcome {
    Built(Conversation),
    Rejected(Rejection),
}

impl AssembleOutcome {
    pub fn built(&self) -> Option<&Conversation> {
        match self {
            AssembleOutcome::Built(c) => Some(c),
            AssembleOutcome::Rejected(_) => None,
        }
    }
}

/// Build a conversation from ordered aspects and their fact reports.
///
/// Non-surviving aspects are skipped; each surviving aspect flows through
/// sub-question generation, document scoring/selection, naturalization,
/// grounded answering, the diversity gate, and reasoning annotation. The
/// result is rejected when fewer than [`MIN_TURNS`] or more than
/// [`MAX_TURNS`] turns come out, or when a conversation-level invariant
/// fails.
pub fn assemble_conversation(
    source: &crate::decompose::SourceRecord,
    ordered_aspects: &[Aspect],
    fact_reports: &[FactReport],
    llm: &Gateway,
    options: &SynthesisOptions,
) -> Result<(AssembleOutcome, Vec<String>)> {
    let mut warnings: Vec<String> = Vec::new();
    let mut turns: Vec<Turn> = Vec::new();
    let mut history: Vec<(String, String)> = Vec::new();
    let mut prior_subqs: Vec<String> = Vec::new();
    let mut prior_openers: Vec<String> = Vec::new();

    for aspect in ordered_aspects {
        let Some(report) = fact_reports.iter().find(|r| r.aspect_ref == aspect.order_index)
        else {
            warnings.push(format!("aspect `{}` has no fact report; skipped", aspect.aspect_name));
            continue;
        };
        if !report.survives {
            continue;
        }
        if turns.len() == MAX_TURNS {
            return Ok((
                AssembleOutcome::Rejected(Rejection {
                    reason: RejectionReason::TooLong,
                    detail: format!("more than {MAX_TURNS} surviving aspects produce turns"),
                }),
                warnings,
            ));
        }

        let subq = match generate_subquestion(
            aspect,
            report,
            &prior_subqs,
            &source.overall_reasoning,
            &source.query,
            llm,
        ) {
            Ok(Some(s)) => s,
            Ok(None) => {
                warnings.push(format!(
                    "aspect `{}`: sub-question duplicated a prior turn; skipped",
                    aspect.aspect_name
                ));
                continue;
            }
            Err(e) if e.is_transient() => {
                warnings.push(format!("aspect `{}`: {e}; skipped", aspect.aspect_name));
                continue;
            }
            Err(e) => return Err(e),
        };

        let scored = score_documents(
            &subq.sub_question,
            &source.overall_reasoning,
            report,
            &source.documents,
            llm,
        )?;
        warnings.extend(scored.warnings);
        let selected_ids = select_documents(&scored.scores, options.selection_threshold)?;
        if selected_ids.is_empty() {
            warnings.push(format!(
                "aspect `{}`: no document above threshold {}; skipped",
                aspect.aspect_name, options.selection_threshold
            ));
            continue;
        }
        let selected_docs: Vec<Document> = selected_ids
            .iter()
            .map(|id| source.documents.iter().find(|d| &d.doc_id == id).unwrap().clone())
            .collect();
        let mut selected_scores: Vec<super::DocScore> = selected_ids
            .iter()
            .map(|id| scored.scores.iter().find(|s| &s.doc_id == id).unwrap().clone())
            .collect();
        selected_scores.sort_by(|a, b| {
            b.final_score
                .partial_cmp(&a.final_score)
                .unwrap()
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });

        let turn_index = turns.len() + 1;
        let naturalized = naturalize_query(
            &subq.sub_question,
            &history,
            turn_index,
            &prior_openers,
            &source.query,
            llm,
        )?;
        warnings.extend(naturalized.warnings);

        let answer = match generate_grounded_answer(&naturalized.query, &history, &selected_docs, llm)? {
            Some(a) => a,
            None => {
                warnings.push(format!(
                    "aspect `{}`: answer kept meta-references; turn dropped",
                    aspect.aspect_name
                ));
                continue;
            }
        };

        if !history.is_empty() {
            match check_turn_diversity(&answer, &history, llm)? {
                DiversityVerdict::AddsValue(_) => {}
                DiversityVerdict::Repetitive => {
                    warnings.push(format!(
                        "aspect `{}`: repetitive answer; turn dropped",
                        aspect.aspect_name
                    ));
                    continue;
                }
            }
        }

        let annotation = annotate_retrieval_reasoning(&subq.sub_question, &selected_docs, llm)?;
        if annotation.flagged {
            warnings.push(format!(
                "aspect `{}`: empty relevance signals after retry",
                aspect.aspect_name
            ));
        }

        prior_openers.push(
            naturalized
                .query
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string(),
        );
        prior_subqs.push(subq.sub_question.clone());
        history.push((naturalized.query.clone(), answer.clone()));
        turns.push(Turn {
            turn_index,
            sub_question: subq.sub_question,
            conversational_query: naturalized.query,
            answer,
            selected_docs: selected_scores,
            retrieval_reasoning: annotation.reasoning,
            aspect_ref: aspect.order_index,
        });
    }

    if turns.len() < MIN_TURNS {
        return Ok((
            AssembleOutcome::Rejected(Rejection {
                reason: RejectionReason::TooShort,
                detail: format!("only {} turns survived (minimum {MIN_TURNS})", turns.len()),
            }),
            warnings,
        ));
    }

    let conversation = Conversation {
        conv_id: source.id.clone(),
        domain: source.domain.clone(),
        source_ref: source.id.clone(),
        aspect_count: ordered_aspects.len(),
        turns,
    };
    if let Err(e) = conversation.validate() {
        return Ok((
            AssembleOutcome::Rejected(Rejection {
                reason: RejectionReason::ValidationFailed,
                detail: e.to_string(),
            }),
            warnings,
        ));
    }
    Ok((AssembleOutcome::Built(conversation), warnings))
}

/// Outcome of the full pipeline for one source record.
#[derive(Debug, Clone)]
pub enum SourceOutcome {
    Conversation {
        conversation: Conversation,
        summary: SupportSummary,
        warnings: Vec<String>,
    },
    /// Dropped before turn generation (insufficient alignment, no aspects).
    Skipped { detail: String },
    Rejected { rejection: Rejection, warnings: Vec<String> },
}

/// Run the whole synthesis pipeline for one source: alignment gate,
/// iterative aspect extraction, per-aspect fact verification (parallel),
/// conversational ordering, and assembly.
pub fn synthesize_conversation(
    source: &crate::decompose::SourceRecord,
    llm: &Gateway,
    options: &SynthesisOptions,
) -> Result<SourceOutcome> {
    source.validate()?;
    let alignment = match validate_alignment(source, llm) {
        Ok(a) => a,
        Err(Error::SchemaValidation { reason, .. }) => {
            return Ok(SourceOutcome::Skipped {
                detail: format!("alignment validation unusable: {reason}"),
            })
        }
        Err(e) => return Err(e),
    };
    if !alignment.is_sufficient {
        return Ok(SourceOutcome::Skipped {
            detail: format!(
                "insufficient document-answer alignment (coverage {:.2})",
                alignment.coverage_percentage
            ),
        });
    }

    let mut aspects: Vec<Aspect> = Vec::new();
    loop {
        let remaining = options.aspects_per_record.saturating_sub(aspects.len());
        if remaining == 0 {
            break;
        }
        let outcome = extract_aspects(source, &aspects, remaining, llm)?;
        if outcome.aspects.is_empty() {
            break;
        }
        aspects.extend(outcome.aspects);
    }
    if aspects.is_empty() {
        return Ok(SourceOutcome::Skipped {
            detail: "no aspects extracted".into(),
        });
    }

    let reports: Vec<FactReport> = par::map_collect(aspects.clone(), |aspect| {
        extract_and_verify_facts(&aspect, &source.documents, llm)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let summary = support_summary(&reports)?;

    let order = order_aspects(&aspects, &options.conversation_strategy, llm)?;
    let ordered: Vec<Aspect> = order.into_iter().map(|i| aspects[i].clone()).collect();

    let (outcome, warnings) = assemble_conversation(source, &ordered, &reports, llm, options)?;
    Ok(match outcome {
        AssembleOutcome::Built(conversation) => SourceOutcome::Conversation {
            conversation,
            summary,
            warnings,
        },
        AssembleOutcome::Rejected(rejection) => SourceOutcome::Rejected { rejection, warnings },
    })
}

/// Synthesize all sources, in parallel, preserving input order.
pub fn synthesize_all(
    sources: &[crate::decompose::SourceRecord],
    llm: &Gateway,
    options: &SynthesisOptions,
) -> Vec<(String, Result<SourceOutcome>)> {
    par::map_collect(sources.to_vec(), |source| {
        let outcome = synthesize_conversation(&source, llm, options);
        (source.id.clone(), outcome)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{AspectType, SourceRecord};
    use crate::facts::AtomicFact;
    use crate::gateway::MockProvider;
    use serde_json::json;

    fn aspect(name: &str, idx: usize) -> Aspect {
        Aspect {
            aspect_name: name.into(),
            aspect_type: AspectType::Mechanism,
            excerpt: format!("{name} excerpt"),
            coverage: None,
            order_index: idx,
        }
    }

    fn report(idx: usize, survives: bool) -> FactReport {
        FactReport {
            aspect_ref: idx,
            extracted: vec![AtomicFact {
                fact: format!("fact {idx}"),
                is_supported: survives,
                supporting_doc_id: survives.then(|| "d1".to_string()),
                reason: String::new(),
            }],
            supported_count: usize::from(survives),
            total_count: 1,
            survives,
            transient_failure: false,
        }
    }

    fn source(n_docs: usize) -> SourceRecord {
        SourceRecord {
            id: "c1".into(),
            query: "Why does this happen?".into(),
            gold_answer: "Because of several mechanisms.".into(),
            overall_reasoning: "Needs mechanism documents.".into(),
            domain: "biology".into(),
            documents: (1..=n_docs)
                .map(|i| Document::new(format!("d{i}"), format!("Document {i} content.")))
                .collect(),
        }
    }

    /// Add rules producing a distinct, valid turn for every aspect. Earlier
    /// rules on `mock` keep priority over these.
    fn add_turn_rules(mut mock: MockProvider, n: usize) -> MockProvider {
        mock = mock
            .respond(
                "document_scoring",
                json!({"document_scores": [
                    {"doc_id": "d1", "support_score": 8, "completeness_score": 7,
                     "clarity_score": 7, "misleading_score": 0}
                ]}),
            )
            .respond(
                "turn_diversity",
                json!({"adds_value": true, "value_type": "new_facts"}),
            )
            .respond(
                "retrieval_reasoning_annotation",
                json!({"target": "t", "relevance_signals": ["signal"], "irrelevance_signals": []}),
            );
        for i in 0..n {
            mock = mock
                .rule(
                    "subquestion_generation",
                    "aspect_name",
                    &format!("a{i:02}"),
                    json!({"sub_question": format!("Sub-question {i:02}?"), "confidence": 0.9}),
                )
                .rule(
                    "opening_query",
                    "sub_question",
                    &format!("Sub-question {i:02}?"),
                    json!({"conversational_query": format!("Opening question {i:02}?")}),
                )
                .rule(
                    "followup_query",
                    "sub_question",
                    &format!("Sub-question {i:02}?"),
                    json!({"conversational_query": format!("And then question {i:02}?")}),
                )
                .rule(
                    "grounded_answer",
                    "query",
                    &format!("question {i:02}?"),
                    json!({"answer": format!("Grounded answer {i:02}.")}),
                );
        }
        mock
    }

    fn turn_mock(n: usize) -> MockProvider {
        add_turn_rules(MockProvider::new(), n)
    }

    #[test]
    fn surviving_aspects_become_contiguous_turns() {
        let aspects: Vec<Aspect> = (0..4).map(|i| aspect(&format!("a{i:02}"), i)).collect();
        // Aspect 2 fails verification.
        let reports: Vec<FactReport> =
            (0..4).map(|i| report(i, i != 2)).collect();
        let (outcome, _warnings) = assemble_conversation(
            &source(1),
            &aspects,
            &reports,
            &Gateway::with_mock(turn_mock(4)),
            &SynthesisOptions::default(),
        )
        .unwrap();
        let conv = outcome.built().expect("conversation built");
        assert_eq!(conv.turns.len(), 3);
        assert_eq!(
            conv.turns.iter().map(|t| t.turn_index).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(
            conv.turns.iter().map(|t| t.aspect_ref).collect::<Vec<_>>(),
            vec![0, 1, 3]
        );
        conv.validate().unwrap();
    }

    #[test]
    fn two_surviving_aspects_reject_too_short() {
        let aspects: Vec<Aspect> = (0..4).map(|i| aspect(&format!("a{i:02}"), i)).collect();
        let reports: Vec<FactReport> = (0..4).map(|i| report(i, i < 2)).collect();
        let (outcome, _) = assemble_conversation(
            &source(1),
            &aspects,
            &reports,
            &Gateway::with_mock(turn_mock(4)),
            &SynthesisOptions::default(),
        )
        .unwrap();
        match outcome {
            AssembleOutcome::Rejected(r) => assert_eq!(r.reason, RejectionReason::TooShort),
            AssembleOutcome::Built(_) => panic!("expected rejection"),
        }
    }

    #[test]
    fn more_than_max_turns_rejects_too_long() {
        let n = MAX_TURNS + 2;
        let aspects: Vec<Aspect> = (0..n).map(|i| aspect(&format!("a{i:02}"), i)).collect();
        let reports: Vec<FactReport> = (0..n).map(|i| report(i, true)).collect();
        let (outcome, _) = assemble_conversation(
            &source(1),
            &aspects,
            &reports,
            &Gateway::with_mock(turn_mock(n)),
            &SynthesisOptions::default(),
        )
        .unwrap();
        match outcome {
            AssembleOutcome::Rejected(r) => assert_eq!(r.reason, RejectionReason::TooLong),
            AssembleOutcome::Built(_) => panic!("expected rejection"),
        }
    }

    #[test]
    fn empty_selection_skips_the_aspect() {
        let aspects: Vec<Aspect> = (0..4).map(|i| aspect(&format!("a{i:02}"), i)).collect();
        let reports: Vec<FactReport> = (0..4).map(|i| report(i, true)).collect();
        // Aspect a1's scoring call returns sub-threshold scores.
        let mock = MockProvider::new().rule(
            "document_scoring",
            "sub_question",
            "Sub-question 01?",
            json!({"document_scores": [
                {"doc_id": "d1", "support_score": 2, "completeness_score": 1,
                 "clarity_score": 2, "misleading_score": 5}
            ]}),
        );
        let mock = add_turn_rules(mock, 4);
        let (outcome, warnings) = assemble_conversation(
            &source(1),
            &aspects,
            &reports,
            &Gateway::with_mock(mock),
            &SynthesisOptions::default(),
        )
        .unwrap();
        let conv = outcome.built().expect("conversation built");
        assert_eq!(conv.turns.len(), 3);
        assert!(conv.turns.iter().all(|t| t.aspect_ref != 1));
        assert!(warnings.iter().any(|w| w.contains("no document above threshold")));
    }

    #[test]
    fn later_queries_carry_full_history() {
        let aspects: Vec<Aspect> = (0..3).map(|i| aspect(&format!("a{i:02}"), i)).collect();
        let reports: Vec<FactReport> = (0..3).map(|i| report(i, true)).collect();
        let mock = MockProvider::new()
            .rule_when(
                "followup_query",
                &[("sub_question", "Sub-question 01?"), ("history", "Grounded answer 00.")],
                json!({"conversational_query": "History was present, right?"}),
            )
            .rule(
                "grounded_answer",
                "query",
                "History was present",
                json!({"answer": "Yes, it was."}),
            );
        let mock = add_turn_rules(mock, 3);
        let (outcome, _) = assemble_conversation(
            &source(1),
            &aspects,
            &reports,
            &Gateway::with_mock(mock),
            &SynthesisOptions::default(),
        )
        .unwrap();
        let conv = outcome.built().unwrap();
        assert_eq!(conv.turns[1].conversational_query, "History was present, right?");
    }
}

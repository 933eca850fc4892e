//! Turn generation: document scoring and selection, query naturalization,
//! grounded answers, diversity gating, retrieval-reasoning annotation, and
//! conversation assembly.

mod assemble;
mod ops;

pub use assemble::{
    synthesize_all, synthesize_conversation, AssembleOutcome, Rejection, RejectionReason,
    SourceOutcome, SynthesisOptions,
};
pub use ops::{
    annotate_retrieval_reasoning, check_turn_diversity, generate_grounded_answer,
    generate_subquestion, naturalize_query, score_documents, select_documents, DiversityVerdict,
    ScoreOutcome, SubQuestion,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted document score. `final_score` is always recomputed locally from
/// the four components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    #[serde(rename = "S_s")]
    pub support_score: u8,
    #[serde(rename = "S_c")]
    pub completeness_score: u8,
    #[serde(rename = "S_l")]
    pub clarity_score: u8,
    #[serde(rename = "S_m")]
    pub misleading_score: u8,
    pub final_score: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

impl DocScore {
    pub fn new(
        doc_id: impl Into<String>,
        support: u8,
        completeness: u8,
        clarity: u8,
        misleading: u8,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            support_score: support,
            completeness_score: completeness,
            clarity_score: clarity,
            misleading_score: misleading,
            final_score: final_score(support, completeness, clarity, misleading),
            rationale: String::new(),
        }
    }
}

/// `0.5*S_s + 0.3*S_c + 0.15*S_l - 0.05*S_m`, components in `[0, 10]`,
/// range `[-0.5, 9.5]`.
pub fn final_score(support: u8, completeness: u8, clarity: u8, misleading: u8) -> f64 {
    0.5 * support as f64 + 0.3 * completeness as f64 + 0.15 * clarity as f64
        - 0.05 * misleading as f64
}

/// Per-turn annotation of what relevant documents contain and which signals
/// mark them as useful.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReasoning {
    pub target: String,
    pub relevance_signals: Vec<String>,
    pub irrelevance_signals: Vec<String>,
}

/// One generated conversational turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based, contiguous within a conversation.
    pub turn_index: usize,
    pub sub_question: String,
    pub conversational_query: String,
    pub answer: String,
    /// Documents above the selection threshold, descending by score.
    pub selected_docs: Vec<DocScore>,
    pub retrieval_reasoning: RetrievalReasoning,
    /// Order index of the aspect this turn was generated from.
    pub aspect_ref: usize,
}

/// Bounds on conversation length.
pub const MIN_TURNS: usize = 3;
pub const MAX_TURNS: usize = 12;

/// A grounded multi-turn dialogue.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conversation {
    pub conv_id: String,
    pub domain: String,
    #[serde(default)]
    pub source_ref: String,
    /// Total aspects decomposed from the source (>= number of turns).
    #[serde(default)]
    pub aspect_count: usize,
    pub turns: Vec<Turn>,
}

impl Conversation {
    /// Check the structural invariants: length bounds, contiguous 1-based
    /// turn indexes, non-empty answers, every turn with a selected document,
    /// distinct queries, injective aspect mapping.
    pub fn validate(&self) -> Result<()> {
        if self.turns.len() < MIN_TURNS || self.turns.len() > MAX_TURNS {
            return Err(Error::InvalidInput(format!(
                "conversation {} has {} turns, outside [{MIN_TURNS}, {MAX_TURNS}]",
                self.conv_id,
                self.turns.len()
            )));
        }
        let mut queries = std::collections::HashSet::new();
        let mut aspects = std::collections::HashSet::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.turn_index != i + 1 {
                return Err(Error::InvalidInput(format!(
                    "conversation {}: turn index {} at position {}",
                    self.conv_id,
                    turn.turn_index,
                    i + 1
                )));
            }
            if turn.answer.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "conversation {} turn {}: empty answer",
                    self.conv_id, turn.turn_index
                )));
            }
            if turn.selected_docs.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "conversation {} turn {}: no selected documents",
                    self.conv_id, turn.turn_index
                )));
            }
            if !queries.insert(crate::decompose::normalize_ws(&turn.conversational_query)) {
                return Err(Error::InvalidInput(format!(
                    "conversation {} turn {}: duplicate query",
                    self.conv_id, turn.turn_index
                )));
            }
            if !aspects.insert(turn.aspect_ref) {
                return Err(Error::InvalidInput(format!(
                    "conversation {} turn {}: aspect {} already used",
                    self.conv_id, turn.turn_index, turn.aspect_ref
                )));
            }
        }
        Ok(())
    }

    /// Query id of one turn, as used in qrels and run files.
    pub fn query_id(&self, turn_index: usize) -> String {
        turn_query_id(&self.conv_id, turn_index)
    }
}

/// `<conv_id>_t<turn_index>`, the query key shared by qrels and run files.
pub fn turn_query_id(conv_id: &str, turn_index: usize) -> String {
    format!("{conv_id}_t{turn_index}")
}

/// Render history as alternating `Q:`/`A:` lines.
pub fn render_history(history: &[(String, String)]) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    history
        .iter()
        .map(|(q, a)| format!("Q: {q}\nA: {a}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_score_reproduces_reference_rows() {
        // (8,7,7,0) -> 7.15, (6,5,6,0) -> 5.40, (4,3,5,0) -> 3.65
        assert!((final_score(8, 7, 7, 0) - 7.15).abs() < 1e-9);
        assert!((final_score(6, 5, 6, 0) - 5.40).abs() < 1e-9);
        assert!((final_score(4, 3, 5, 0) - 3.65).abs() < 1e-9);
    }

    #[test]
    fn final_score_bounds() {
        assert!((final_score(0, 0, 0, 10) - (-0.50)).abs() < 1e-12);
        assert!((final_score(10, 10, 10, 0) - 9.50).abs() < 1e-12);
    }

    #[test]
    fn final_score_matches_exact_rational_arithmetic() {
        // Exact route: (10*S_s + 6*S_c + 3*S_l - S_m) / 20 with integer
        // numerator, correctly rounded by the single division.
        for ss in 0..=10u8 {
            for sc in 0..=10u8 {
                for sl in (0..=10u8).step_by(2) {
                    for sm in (0..=10u8).step_by(5) {
                        let direct = final_score(ss, sc, sl, sm);
                        let numerator =
                            10 * ss as i64 + 6 * sc as i64 + 3 * sl as i64 - sm as i64;
                        let rational = numerator as f64 / 20.0;
                        assert!(
                            (direct - rational).abs() < 1e-12,
                            "({ss},{sc},{sl},{sm}): {direct} vs {rational}"
                        );
                    }
                }
            }
        }
    }

    fn tiny_turn(i: usize, aspect: usize, query: &str) -> Turn {
        Turn {
            turn_index: i,
            sub_question: format!("sq{i}"),
            conversational_query: query.to_string(),
            answer: "An answer.".into(),
            selected_docs: vec![DocScore::new("d1", 8, 7, 7, 0)],
            retrieval_reasoning: RetrievalReasoning::default(),
            aspect_ref: aspect,
        }
    }

    #[test]
    fn validate_catches_gapped_turn_indexes() {
        let conv = Conversation {
            conv_id: "c1".into(),
            domain: "d".into(),
            source_ref: "s".into(),
            aspect_count: 3,
            turns: vec![tiny_turn(1, 0, "a"), tiny_turn(3, 1, "b"), tiny_turn(4, 2, "c")],
        };
        assert!(conv.validate().is_err());
    }

    #[test]
    fn validate_rejects_duplicate_aspect_refs() {
        let conv = Conversation {
            conv_id: "c1".into(),
            domain: "d".into(),
            source_ref: "s".into(),
            aspect_count: 3,
            turns: vec![tiny_turn(1, 0, "a"), tiny_turn(2, 0, "b"), tiny_turn(3, 2, "c")],
        };
        assert!(conv.validate().is_err());
    }

    #[test]
    fn doc_score_serializes_with_component_keys() {
        let score = DocScore::new("d9", 8, 7, 7, 0);
        let json = serde_json::to_value(&score).unwrap();
        assert_eq!(json["S_s"], 8);
        assert_eq!(json["S_c"], 7);
        assert_eq!(json["S_l"], 7);
        assert_eq!(json["S_m"], 0);
        assert!((json["final_score"].as_f64().unwrap() - 7.15).abs() < 1e-9);
    }
}

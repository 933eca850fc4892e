//! Query processing strategies for multi-turn retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{vars, Gateway};
use crate::turns::{Conversation, Turn};

/// The five query construction strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Raw current query.
    Baseline,
    /// Model-generated self-contained rewrite.
    Rewrite,
    /// Raw query with a generated search rationale appended (even at turn 1).
    Reasoning,
    /// Full prior history prepended to the raw query.
    History,
    /// History plus rationale.
    HistoryReasoning,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Baseline,
        Strategy::Rewrite,
        Strategy::Reasoning,
        Strategy::History,
        Strategy::HistoryReasoning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Rewrite => "rewrite",
            Strategy::Reasoning => "reasoning",
            Strategy::History => "history",
            Strategy::HistoryReasoning => "history_reasoning",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "rewrite" => Ok(Strategy::Rewrite),
            "reasoning" => Ok(Strategy::Reasoning),
            "history" => Ok(Strategy::History),
            "history_reasoning" | "history+reasoning" => Ok(Strategy::HistoryReasoning),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }

    /// True when query construction needs a model call.
    pub fn needs_gateway(&self) -> bool {
        matches!(
            self,
            Strategy::Rewrite | Strategy::Reasoning | Strategy::HistoryReasoning
        )
    }
}

/// Retrieval input built from a turn under one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyQuery {
    pub strategy: Strategy,
    pub query_text: String,
    pub conv_id: String,
    pub turn_index: usize,
}

impl StrategyQuery {
    pub fn query_id(&self) -> String {
        crate::turns::turn_query_id(&self.conv_id, self.turn_index)
    }
}

/// Raw-text prompt for self-contained rewrites. Mock fixtures typically make
/// this a pass-through of `{query}`.
const REWRITE_PROMPT: &str = "Rewrite the current question as one fully self-contained \
search query. Resolve every pronoun and implicit reference using the conversation.\n\n\
CONVERSATION:\n{history}\n\nCURRENT QUESTION: {query}\n\n\
Reply with the rewritten query only.";

/// Raw-text prompt for the search rationale appended by reasoning strategies.
const RATIONALE_PROMPT: &str = "State in one or two sentences what information a relevant \
document must contain to answer the question, and which terms or concepts signal relevance.\n\n\
CONVERSATION:\n{history}\n\nQUESTION: {query}\n\nReply with the rationale only.";

fn history_block(conversation: &Conversation, turn_index: usize) -> String {
    conversation
        .turns
        .iter()
        .filter(|t| t.turn_index < turn_index)
        .map(|t| format!("Q: {}\nA: {}", t.conversational_query, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

fn rationale(turn: &Turn, history: &str, llm: Option<&Gateway>) -> Result<String> {
    let llm = llm.ok_or_else(|| {
        Error::Precondition("reasoning strategies require a gateway".into())
    })?;
    let text = llm.complete_text(
        "search_rationale",
        RATIONALE_PROMPT,
        &vars([
            ("history", if history.is_empty() { "(none)".into() } else { history.to_string() }),
            ("query", turn.conversational_query.clone()),
        ]),
    )?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(Error::Provider("empty search rationale".into()));
    }
    Ok(text)
}

/// Build the retrieval query for one turn under a strategy.
///
/// At turn 1 the history text is empty, so the history strategy is byte-equal
/// to baseline while reasoning strategies still append a rationale.
pub fn build_strategy_query(
    turn: &Turn,
    conversation: &Conversation,
    strategy: Strategy,
    llm: Option<&Gateway>,
) -> Result<StrategyQuery> {
    if !conversation.turns.iter().any(|t| t.turn_index == turn.turn_index) {
        return Err(Error::Precondition(format!(
            "turn {} does not belong to conversation {}",
            turn.turn_index, conversation.conv_id
        )));
    }
    let raw = turn.conversational_query.clone();
    let history = history_block(conversation, turn.turn_index);
    let with_history = |raw: &str| -> String {
        if history.is_empty() {
            raw.to_string()
        } else {
            format!("{history}\n{raw}")
        }
    };

    let query_text = match strategy {
        Strategy::Baseline => raw,
        Strategy::History => with_history(&raw),
        Strategy::Rewrite => {
            let llm = llm.ok_or_else(|| {
                Error::Precondition("rewrite strategy requires a gateway".into())
            })?;
            let rewritten = llm.complete_text(
                "query_rewrite",
                REWRITE_PROMPT,
                &vars([
                    ("history", if history.is_empty() { "(none)".into() } else { history.clone() }),
                    ("query", raw.clone()),
                ]),
            )?;
            let rewritten = rewritten.trim().to_string();
            if rewritten.is_empty() {
                raw
            } else {
                rewritten
            }
        }
        Strategy::Reasoning => {
            let rationale = rationale(turn, &history, llm)?;
            format!("{raw}\n{rationale}")
        }
        Strategy::HistoryReasoning => {
            let rationale = rationale(turn, &history, llm)?;
            format!("{}\n{rationale}", with_history(&raw))
        }
    };
    Ok(StrategyQuery {
        strategy,
        query_text,
        conv_id: conversation.conv_id.clone(),
        turn_index: turn.turn_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockProvider;
    use crate::turns::{DocScore, RetrievalReasoning};

    fn conversation() -> Conversation {
        let turn = |i: usize, q: &str, a: &str| Turn {
            turn_index: i,
            sub_question: format!("sq{i}"),
            conversational_query: q.to_string(),
            answer: a.to_string(),
            selected_docs: vec![DocScore::new("d1", 8, 7, 7, 0)],
            retrieval_reasoning: RetrievalReasoning {
                target: "t".into(),
                relevance_signals: vec!["s".into()],
                irrelevance_signals: vec![],
            },
            aspect_ref: i - 1,
        };
        Conversation {
            conv_id: "c1".into(),
            domain: "biology".into(),
            source_ref: "c1".into(),
            aspect_count: 3,
            turns: vec![
                turn(1, "Why don't we live longer?", "Because selection weakens."),
                turn(2, "Is that why bad genes stick around?", "Yes, they accumulate."),
                turn(3, "What about helpful-then-harmful genes?", "That is pleiotropy."),
            ],
        }
    }

    fn mock_gateway() -> Gateway {
        Gateway::with_mock(
            MockProvider::new()
                .respond_template("query_rewrite", "{query}")
                .respond_template("search_rationale", "Documents must explain {query}"),
        )
    }

    #[test]
    fn history_at_turn_one_is_byte_equal_to_baseline() {
        let conv = conversation();
        let baseline =
            build_strategy_query(&conv.turns[0], &conv, Strategy::Baseline, None).unwrap();
        let history =
            build_strategy_query(&conv.turns[0], &conv, Strategy::History, None).unwrap();
        assert_eq!(baseline.query_text, history.query_text);
    }

    #[test]
    fn reasoning_at_turn_one_is_a_strict_superstring() {
        let conv = conversation();
        let gw = mock_gateway();
        let baseline =
            build_strategy_query(&conv.turns[0], &conv, Strategy::Baseline, None).unwrap();
        let reasoning =
            build_strategy_query(&conv.turns[0], &conv, Strategy::Reasoning, Some(&gw)).unwrap();
        assert!(reasoning.query_text.contains(&baseline.query_text));
        assert!(reasoning.query_text.len() > baseline.query_text.len());
    }

    #[test]
    fn history_at_turn_three_embeds_prior_turns_verbatim_in_order() {
        let conv = conversation();
        let q = build_strategy_query(&conv.turns[2], &conv, Strategy::History, None).unwrap();
        let text = &q.query_text;
        let p1 = text.find("Why don't we live longer?").unwrap();
        let p2 = text.find("Because selection weakens.").unwrap();
        let p3 = text.find("Is that why bad genes stick around?").unwrap();
        let p4 = text.find("Yes, they accumulate.").unwrap();
        let p5 = text.find("What about helpful-then-harmful genes?").unwrap();
        assert!(p1 < p2 && p2 < p3 && p3 < p4 && p4 < p5);
        assert!(text.ends_with("What about helpful-then-harmful genes?"));
    }

    #[test]
    fn rewrite_passes_through_under_the_default_mock() {
        let conv = conversation();
        let gw = mock_gateway();
        let q = build_strategy_query(&conv.turns[1], &conv, Strategy::Rewrite, Some(&gw)).unwrap();
        assert_eq!(q.query_text, "Is that why bad genes stick around?");
    }

    #[test]
    fn model_strategies_without_gateway_are_errors() {
        let conv = conversation();
        for strategy in [Strategy::Rewrite, Strategy::Reasoning, Strategy::HistoryReasoning] {
            assert!(build_strategy_query(&conv.turns[0], &conv, strategy, None).is_err());
        }
    }

    #[test]
    fn history_reasoning_layers_both() {
        let conv = conversation();
        let gw = mock_gateway();
        let q = build_strategy_query(
            &conv.turns[1],
            &conv,
            Strategy::HistoryReasoning,
            Some(&gw),
        )
        .unwrap();
        assert!(q.query_text.contains("Why don't we live longer?"));
        assert!(q.query_text.contains("Is that why bad genes stick around?"));
        assert!(q.query_text.contains("Documents must explain"));
    }

    #[test]
    fn foreign_turn_is_a_precondition_error() {
        let conv = conversation();
        let mut foreign = conv.turns[0].clone();
        foreign.turn_index = 9;
        assert!(build_strategy_query(&foreign, &conv, Strategy::Baseline, None).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.as_str()).unwrap(), s);
        }
    }
}

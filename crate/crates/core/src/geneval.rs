//! Grounded-generation evaluation: context construction per retrieval mode,
//! judge scoring, and lexical metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Qrels};
use crate::error::{Error, Result};
use crate::gateway::schema::{FieldKind, FieldSpec, Schema};
use crate::gateway::{vars, Gateway, PromptTemplate};
use crate::retrieval::RunResult;
use crate::turns::{render_history, Conversation};

/// How passages reach the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Gold passages from the qrels.
    Oracle,
    /// Top-k passages of a retrieval run.
    Retrieved,
    /// No passages; parametric knowledge only.
    NoRetrieval,
}

impl RetrievalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RetrievalMode::Oracle => "oracle",
            RetrievalMode::Retrieved => "retrieved",
            RetrievalMode::NoRetrieval => "no_retrieval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(RetrievalMode::Oracle),
            "retrieved" => Ok(RetrievalMode::Retrieved),
            "no_retrieval" => Ok(RetrievalMode::NoRetrieval),
            other => Err(Error::Config(format!("unknown retrieval mode `{other}`"))),
        }
    }
}

/// Everything a generator sees for one turn.
#[derive(Debug, Clone)]
pub struct GenerationContext {
    pub mode: RetrievalMode,
    pub question: String,
    pub history: Vec<(String, String)>,
    /// Empty exactly in no-retrieval mode.
    pub passages: Vec<Document>,
    pub k: usize,
}

/// Build the generation context for one turn under a mode.
///
/// Oracle takes the gold qrels documents; retrieved takes exactly the run's
/// top-k; no-retrieval takes nothing.
pub fn build_context(
    turn_index: usize,
    conversation: &Conversation,
    mode: RetrievalMode,
    run_result: Option<&RunResult>,
    qrels: &Qrels,
    corpus: &Corpus,
    k: usize,
) -> Result<GenerationContext> {
    let turn = conversation
        .turns
        .iter()
        .find(|t| t.turn_index == turn_index)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "turn {turn_index} not in conversation {}",
                conversation.conv_id
            ))
        })?;
    let query_id = conversation.query_id(turn_index);
    let passages = match mode {
        RetrievalMode::NoRetrieval => Vec::new(),
        RetrievalMode::Oracle => {
            let judgments = qrels
                .get(&query_id)
                .ok_or_else(|| Error::Precondition(format!("no qrels entry for {query_id}")))?;
            judgments
                .iter()
                .filter(|(_, &grade)| grade > 0)
                .map(|(doc_id, _)| {
                    corpus.get(doc_id).cloned().ok_or_else(|| {
                        Error::InvalidInput(format!("qrels doc {doc_id} not in corpus"))
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        RetrievalMode::Retrieved => {
            let run = run_result.ok_or_else(|| {
                Error::Precondition("retrieved mode requires a run result".into())
            })?;
            let ranking = run.rankings.get(&query_id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "run {} does not cover query {query_id}",
                    run.retriever_id
                ))
            })?;
            ranking
                .iter()
                .take(k)
                .filter_map(|(doc_id, _)| corpus.get(doc_id).cloned())
                .collect()
        }
    };
    let history: Vec<(String, String)> = conversation
        .turns
        .iter()
        .filter(|t| t.turn_index < turn_index)
        .map(|t| (t.conversational_query.clone(), t.answer.clone()))
        .collect();
    Ok(GenerationContext {
        mode,
        question: turn.conversational_query.clone(),
        history,
        passages,
        k,
    })
}

/// Build the generator prompt for a context. The generator service contract
/// is `{prompt} -> {text}`, reached through the shared provider trait.
pub fn generation_prompt(context: &GenerationContext) -> String {
    let mut prompt = String::new();
    if !context.history.is_empty() {
        prompt.push_str("Conversation so far:\n");
        prompt.push_str(&render_history(&context.history));
        prompt.push_str("\n\n");
    }
    if context.passages.is_empty() {
        prompt.push_str("Answer from your own knowledge.\n\n");
    } else {
        prompt.push_str("Passages:\n");
        for doc in &context.passages {
            prompt.push_str(&format!("[{}] {}\n", doc.doc_id, doc.text));
        }
        prompt.push_str("\nAnswer using the passages above.\n\n");
    }
    prompt.push_str(&format!("Question: {}\nAnswer:", context.question));
    prompt
}

/// The five judge dimensions, 1-5 raw, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub correctness: u8,
    pub completeness: u8,
    pub relevance: u8,
    pub coherence: u8,
    /// Absent exactly in no-retrieval mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<u8>,
    pub normalized: BTreeMap<String, f64>,
}

impl JudgeScore {
    /// Mean of the normalized scores over present dimensions.
    pub fn average(&self) -> f64 {
        let sum: f64 = self.normalized.values().sum();
        sum / self.normalized.len() as f64
    }
}

pub const JUDGE_DIMENSIONS: &[&str] = &[
    "correctness",
    "completeness",
    "relevance",
    "coherence",
    "faithfulness",
];

/// Judge prompt enumerating the five dimension rubrics.
const JUDGE_TEMPLATE: PromptTemplate = PromptTemplate {
    template_id: "answer_judge",
    body: "Score the generated answer on a 1-5 scale per dimension.\n\n\
           QUESTION: {question}\n\n\
           CONVERSATION HISTORY:\n{history}\n\n\
           PASSAGES:\n{passages}\n\n\
           REFERENCE ANSWER:\n{reference_answer}\n\n\
           GENERATED ANSWER:\n{generated_answer}\n\n\
           DIMENSIONS:\n\
           - correctness: factual accuracy of the answer against the reference and passages\n\
           - completeness: coverage of every part of the question\n\
           - relevance: focus on what was asked, no off-topic content\n\
           - coherence: fluent, logically organized prose that fits the conversation\n\
           - faithfulness: grounding in the provided passages (score null when no passages are given)\n\n\
           Return JSON:\n{\n  \"correctness\": 1-5,\n  \"completeness\": 1-5,\n  \"relevance\": 1-5,\n  \"coherence\": 1-5,\n  \"faithfulness\": 1-5 or null,\n  \"justification\": \"one sentence\"\n}",
    expected_schema: Schema {
        fields: &[
            FieldSpec::required("correctness", FieldKind::Integer { min: Some(1), max: Some(5) }),
            FieldSpec::required("completeness", FieldKind::Integer { min: Some(1), max: Some(5) }),
            FieldSpec::required("relevance", FieldKind::Integer { min: Some(1), max: Some(5) }),
            FieldSpec::required("coherence", FieldKind::Integer { min: Some(1), max: Some(5) }),
            FieldSpec::required("faithfulness", FieldKind::NullableInteger { min: Some(1), max: Some(5) }),
            FieldSpec::optional("justification", FieldKind::Text),
        ],
    },
};

/// Score a generated answer on the judge dimensions.
///
/// Faithfulness is kept only for oracle/retrieved modes; raw scores outside
/// 1-5 fail schema validation, consume the retry, and then drop the record
/// (`Ok(None)`).
pub fn judge_answer(
    context: &GenerationContext,
    generated_answer: &str,
    reference_answer: &str,
    judge_llm: &Gateway,
) -> Result<Option<JudgeScore>> {
    if generated_answer.trim().is_empty() {
        return Err(Error::Precondition("generated answer is empty".into()));
    }
    let response = judge_llm.complete_structured_with(
        &JUDGE_TEMPLATE,
        &vars([
            ("question", context.question.clone()),
            ("history", render_history(&context.history)),
            (
                "passages",
                if context.passages.is_empty() {
                    "(none)".to_string()
                } else {
                    crate::decompose::render_documents(&context.passages)
                },
            ),
            ("reference_answer", reference_answer.to_string()),
            ("generated_answer", generated_answer.to_string()),
        ]),
    );
    let response = match response {
        Ok(r) => r,
        Err(Error::SchemaValidation { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let dim = |name: &str| response.parsed[name].as_i64().unwrap_or(1) as u8;
    let faithfulness = match context.mode {
        RetrievalMode::NoRetrieval => None,
        _ => response.parsed["faithfulness"].as_i64().map(|v| v as u8),
    };
    let mut normalized = BTreeMap::new();
    let mut put = |name: &str, raw: u8| {
        normalized.insert(name.to_string(), (raw as f64 - 1.0) / 4.0);
    };
    put("correctness", dim("correctness"));
    put("completeness", dim("completeness"));
    put("relevance", dim("relevance"));
    put("coherence", dim("coherence"));
    if let Some(f) = faithfulness {
        put("faithfulness", f);
    }
    Ok(Some(JudgeScore {
        correctness: dim("correctness"),
        completeness: dim("completeness"),
        relevance: dim("relevance"),
        coherence: dim("coherence"),
        faithfulness,
        normalized,
    }))
}

/// ROUGE-L precision/recall/F1 over lowercase unicode words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Longest-common-subsequence length between two token sequences.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            current[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(current[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut current);
        current.fill(0);
    }
    prev[b.len()]
}

/// LCS-based ROUGE-L. F1 is the harmonic mean of precision and recall.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<RougeL> {
    let ref_tokens = crate::retrieval::tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(Error::Precondition("empty reference".into()));
    }
    let cand_tokens = crate::retrieval::tokenize(candidate);
    if cand_tokens.is_empty() {
        return Ok(RougeL {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let lcs = lcs_len(&cand_tokens, &ref_tokens) as f64;
    let precision = lcs / cand_tokens.len() as f64;
    let recall = lcs / ref_tokens.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RougeL {
        precision,
        recall,
        f1,
    })
}

/// Product-moment correlation. Errors on length mismatch, n < 2, or zero
/// variance on either side.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Precondition("length mismatch".into()));
    }
    if xs.len() < 2 {
        return Err(Error::Precondition("need at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Precondition("zero variance".into()));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// One generation-evaluation record, as serialized to the output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub conv_id: String,
    pub turn_index: usize,
    pub mode: RetrievalMode,
    pub generator_tag: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_scores: Option<JudgeScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<RougeL>,
    /// From the optional external scorer service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bert_score_f1: Option<f64>,
}

/// Optional external scorer client for METEOR / BERTScore, sharing the
/// embedding-service wire shape: candidate/reference pairs flatten into
/// `texts` and each returned vector carries `[meteor, bert_f1]`.
#[cfg(feature = "http")]
pub struct ExternalScorerClient {
    endpoint: String,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl ExternalScorerClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    pub fn score(&self, pairs: &[(String, String)]) -> Result<Vec<(f64, f64)>> {
        #[derive(Serialize)]
        struct Body {
            texts: Vec<String>,
        }
        #[derive(Deserialize)]
        struct Reply {
            vectors: Vec<Vec<f64>>,
        }
        let texts: Vec<String> = pairs
            .iter()
            .flat_map(|(c, r)| [c.clone(), r.clone()])
            .collect();
        let reply: Reply = self
            .agent
            .post(&self.endpoint)
            .send_json(Body { texts })
            .map_err(|e| Error::Provider(format!("scorer: {e}")))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("scorer reply: {e}")))?;
        Ok(reply
            .vectors
            .iter()
            .map(|v| (v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0)))
            .collect())
    }
}

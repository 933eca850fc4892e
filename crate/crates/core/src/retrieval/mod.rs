//! Retrieval evaluation: indexes, query strategies, run execution, metrics,
//! statistics, and analyses.

pub mod analysis;
mod bm25;
mod dense;
mod metrics;
mod stats;
mod strategy;

pub use analysis::{analyze_results, AnalysisKind, AnalysisReport};
pub use bm25::{build_lexical_index, tokenize, unique_terms, IndexConfig, LexicalIndex, Tokenizer};
#[cfg(feature = "http")]
pub use dense::HttpEmbeddingService;
pub use dense::{cosine, DenseIndex, EmbeddingService, HashEmbedder};
pub use metrics::{compute_metrics, macro_average, GainFunction, MacroReport, MetricVector};
pub use stats::{
    paired_observations, paired_t_test, regularized_incomplete_beta, student_t_two_tailed_p,
    MetricKind, TTestResult,
};
pub use strategy::{build_strategy_query, Strategy, StrategyQuery};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::par;
use crate::turns::Conversation;

/// A retrieval backend under a stable id.
pub enum Retriever {
    Lexical { id: String, index: LexicalIndex },
    Dense { index: DenseIndex },
}

impl Retriever {
    pub fn id(&self) -> &str {
        match self {
            Retriever::Lexical { id, .. } => id,
            Retriever::Dense { index } => index.id(),
        }
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        match self {
            Retriever::Lexical { index, .. } => Ok(index.search(query, k)),
            Retriever::Dense { index } => index.search(query, k),
        }
    }
}

/// Ranked lists for every turn under one `(retriever, strategy)` pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub retriever_id: String,
    pub strategy: Strategy,
    /// query_id -> ranked `(doc_id, score)`, scores non-increasing.
    pub rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunResult {
    /// Check ranking invariants: non-increasing scores, no duplicate ids.
    pub fn validate(&self) -> Result<()> {
        for (query_id, ranking) in &self.rankings {
            let mut seen = std::collections::HashSet::new();
            for window in ranking.windows(2) {
                if window[1].1 > window[0].1 {
                    return Err(Error::InvalidInput(format!(
                        "run {}/{} query {query_id}: scores increase",
                        self.retriever_id,
                        self.strategy.as_str()
                    )));
                }
            }
            for (doc_id, _) in ranking {
                if !seen.insert(doc_id) {
                    return Err(Error::InvalidInput(format!(
                        "run {}/{} query {query_id}: duplicate doc {doc_id}",
                        self.retriever_id,
                        self.strategy.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Execute every `(retriever, strategy)` combination over all conversation
/// turns. Queries are built per turn (model-backed strategies go through the
/// gateway) and searched in parallel; output order is deterministic.
pub fn execute_runs(
    retrievers: &[Retriever],
    strategies: &[Strategy],
    conversations: &[Conversation],
    k: usize,
    llm: Option<&Gateway>,
) -> Result<Vec<RunResult>> {
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    // Build strategy queries once per strategy; they are shared across
    // retrievers.
    let mut queries_by_strategy: Vec<(Strategy, Vec<StrategyQuery>)> = Vec::new();
    for &strategy in strategies {
        let turn_refs: Vec<(usize, usize)> = conversations
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| (0..c.turns.len()).map(move |ti| (ci, ti)))
            .collect();
        let queries = par::map_collect(turn_refs, |(ci, ti)| {
            build_strategy_query(&conversations[ci].turns[ti], &conversations[ci], strategy, llm)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        queries_by_strategy.push((strategy, queries));
    }

    let mut runs = Vec::new();
    for retriever in retrievers {
        for (strategy, queries) in &queries_by_strategy {
            let ranked = par::map_collect(queries.clone(), |query| {
                retriever
                    .search(&query.query_text, k)
                    .map(|ranking| (query.query_id(), ranking))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let run = RunResult {
                retriever_id: retriever.id().to_string(),
                strategy: *strategy,
                rankings: ranked.into_iter().collect(),
            };
            run.validate()?;
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Write a run as `query_id doc_id rank score retriever_tag` lines.
pub fn write_run(run: &RunResult, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let tag = format!("{}-{}", run.retriever_id, run.strategy.as_str());
    for (query_id, ranking) in &run.rankings {
        for (rank, (doc_id, score)) in ranking.iter().enumerate() {
            writeln!(out, "{query_id} {doc_id} {} {score:.6} {tag}", rank + 1)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load a run file written by [`write_run`].
pub fn load_run(path: &Path, retriever_id: &str, strategy: Strategy) -> Result<RunResult> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rankings: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let score: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("invalid score `{}`", fields[3]),
        })?;
        rankings
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[1].to_string(), score));
    }
    let run = RunResult {
        retriever_id: retriever_id.to_string(),
        strategy,
        rankings,
    };
    run.validate()?;
    Ok(run)
}

/// Aggregate one run into per-domain and macro metric means.
///
/// Queries without a relevant document in the qrels are excluded and
/// reported in `skipped`.
pub struct RunAggregate {
    pub report: MacroReport,
    pub per_query: Vec<(String, MetricVector)>,
    pub skipped: Vec<String>,
}

pub fn aggregate_run(
    run: &RunResult,
    qrels: &Qrels,
    conversations: &[Conversation],
    k: usize,
    gain: GainFunction,
) -> Result<RunAggregate> {
    let domain_of: BTreeMap<String, String> = conversations
        .iter()
        .flat_map(|c| {
            c.turns
                .iter()
                .map(move |t| (c.query_id(t.turn_index), c.domain.clone()))
        })
        .collect();
    let mut per_turn = Vec::new();
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for (query_id, ranking) in &run.rankings {
        let Some(judgments) = qrels.get(query_id) else {
            skipped.push(query_id.clone());
            continue;
        };
        match compute_metrics(ranking, judgments, k, gain) {
            Some(m) => {
                let domain = domain_of
                    .get(query_id)
                    .cloned()
                    .unwrap_or_else(|| "(unknown)".to_string());
                per_turn.push((domain, m));
                per_query.push((query_id.clone(), m));
            }
            None => skipped.push(query_id.clone()),
        }
    }
    let report = macro_average(&per_turn)
        .ok_or_else(|| Error::InvalidInput("no scoreable queries in run".into()))?;
    Ok(RunAggregate {
        report,
        per_query,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document};
    use crate::turns::{DocScore, RetrievalReasoning, Turn};

    fn mini_corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document::new("d0", "natural selection weakens after reproduction ends"),
            Document::new("d1", "mutation accumulation allows late-onset disease alleles"),
            Document::new("d2", "antagonistic pleiotropy trades early benefit for late cost"),
            Document::new("d3", "extrinsic mortality favors early reproduction strategies"),
        ])
        .unwrap()
    }

    fn mini_conversation() -> Conversation {
        let turn = |i: usize, q: &str| Turn {
            turn_index: i,
            sub_question: format!("sq{i}"),
            conversational_query: q.to_string(),
            answer: format!("answer {i}"),
            selected_docs: vec![DocScore::new(format!("d{}", i - 1), 8, 7, 7, 0)],
            retrieval_reasoning: RetrievalReasoning::default(),
            aspect_ref: i - 1,
        };
        Conversation {
            conv_id: "c1".into(),
            domain: "biology".into(),
            source_ref: "c1".into(),
            aspect_count: 3,
            turns: vec![
                turn(1, "natural selection weakens"),
                turn(2, "mutation accumulation late onset"),
                turn(3, "antagonistic pleiotropy early benefit"),
            ],
        }
    }

    #[test]
    fn runs_cover_every_turn_and_pair() {
        let corpus = mini_corpus();
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let retrievers = vec![Retriever::Lexical {
            id: "bm25".into(),
            index,
        }];
        let runs = execute_runs(
            &retrievers,
            &[Strategy::Baseline, Strategy::History],
            &[mini_conversation()],
            10,
            None,
        )
        .unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            assert_eq!(run.rankings.len(), 3);
            assert!(run.rankings.contains_key("c1_t2"));
        }
    }

    #[test]
    fn run_files_round_trip() {
        let corpus = mini_corpus();
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let retrievers = vec![Retriever::Lexical {
            id: "bm25".into(),
            index,
        }];
        let runs = execute_runs(&retrievers, &[Strategy::Baseline], &[mini_conversation()], 10, None)
            .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_run(&runs[0], f.path()).unwrap();
        let loaded = load_run(f.path(), "bm25", Strategy::Baseline).unwrap();
        assert_eq!(loaded.rankings.len(), runs[0].rankings.len());
        for (query_id, ranking) in &runs[0].rankings {
            let loaded_ranking = &loaded.rankings[query_id];
            let ids: Vec<&String> = ranking.iter().map(|(d, _)| d).collect();
            let loaded_ids: Vec<&String> = loaded_ranking.iter().map(|(d, _)| d).collect();
            assert_eq!(ids, loaded_ids);
        }
    }

    #[test]
    fn aggregate_skips_queries_without_relevant_docs() {
        let mut qrels = Qrels::default();
        qrels.add("c1_t1", "d0", 1);
        qrels.add("c1_t2", "d1", 0); // no relevant doc
        qrels.add("c1_t3", "d2", 1);
        let corpus = mini_corpus();
        let index = build_lexical_index(&corpus, IndexConfig::default()).unwrap();
        let retrievers = vec![Retriever::Lexical {
            id: "bm25".into(),
            index,
        }];
        let runs = execute_runs(&retrievers, &[Strategy::Baseline], &[mini_conversation()], 10, None)
            .unwrap();
        let agg = aggregate_run(&runs[0], &qrels, &[mini_conversation()], 10, GainFunction::Exponential)
            .unwrap();
        assert_eq!(agg.skipped, vec!["c1_t2".to_string()]);
        assert_eq!(agg.per_query.len(), 2);
    }
}

//! Turn-position, complexity, and failure analyses over run results.

use std::collections::BTreeMap;

use serde::Serialize;

use super::metrics::{compute_metrics, GainFunction};
use super::{RunResult, Strategy};
use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::turns::Conversation;

/// Which analysis to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    /// Mean nDCG per turn bucket (1, 2, 3, 4, 5+) per strategy.
    TurnPosition,
    /// Max-over-retrievers nDCG bucketed by aspects per conversation
    /// (Low 3-4 / Medium 5-6 / High 7+), turns >= 2 only.
    Complexity,
    /// Queries bucketed by max-over-retrievers nDCG into
    /// [0.8, 1], [0.5, 0.8), [0.3, 0.5), [0, 0.3).
    Failure,
}

impl AnalysisKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "turn_position" => Ok(AnalysisKind::TurnPosition),
            "complexity" => Ok(AnalysisKind::Complexity),
            "failure" => Ok(AnalysisKind::Failure),
            other => Err(Error::Config(format!("unknown analysis kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnPositionRow {
    pub strategy: Strategy,
    /// "1", "2", "3", "4", "5+".
    pub bucket: String,
    pub count: usize,
    pub mean_ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub strategy: Strategy,
    /// "low", "medium", "high".
    pub bucket: String,
    pub turns: usize,
    /// Mean over turns of the max nDCG across retrievers.
    pub mean_max_ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub strategy: Strategy,
    /// Shares over [0.8, 1], [0.5, 0.8), [0.3, 0.5), [0, 0.3).
    pub shares: [f64; 4],
    pub counts: [usize; 4],
    /// Share of turn-1 queries within the bottom bucket.
    pub first_turn_share_of_bottom: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum AnalysisReport {
    TurnPosition(Vec<TurnPositionRow>),
    Complexity(Vec<ComplexityRow>),
    Failure(Vec<FailureRow>),
}

struct TurnInfo {
    turn_index: usize,
    aspect_count: usize,
}

fn turn_info(conversations: &[Conversation]) -> BTreeMap<String, TurnInfo> {
    conversations
        .iter()
        .flat_map(|c| {
            c.turns.iter().map(move |t| {
                (
                    c.query_id(t.turn_index),
                    TurnInfo {
                        turn_index: t.turn_index,
                        aspect_count: c.aspect_count,
                    },
                )
            })
        })
        .collect()
}

fn turn_bucket(turn_index: usize) -> String {
    if turn_index >= 5 {
        "5+".to_string()
    } else {
        turn_index.to_string()
    }
}

fn complexity_bucket(aspect_count: usize) -> &'static str {
    match aspect_count {
        0..=4 => "low",
        5..=6 => "medium",
        _ => "high",
    }
}

/// Scoreable queries with their per-run nDCG, grouped by strategy.
/// Validates that every run covers every scoreable qrels query.
fn ndcg_by_strategy(
    run_results: &[RunResult],
    qrels: &Qrels,
    k: usize,
    gain: GainFunction,
) -> Result<BTreeMap<Strategy, Vec<BTreeMap<String, f64>>>> {
    let mut by_strategy: BTreeMap<Strategy, Vec<BTreeMap<String, f64>>> = BTreeMap::new();
    for run in run_results {
        let mut per_query = BTreeMap::new();
        for (query_id, judgments) in &qrels.entries {
            if judgments.values().all(|&g| g == 0) {
                continue;
            }
            let ranking = run.rankings.get(query_id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "run {}/{} does not cover query {query_id}",
                    run.retriever_id,
                    run.strategy.as_str()
                ))
            })?;
            let m = compute_metrics(ranking, judgments, k, gain).expect("grades checked");
            per_query.insert(query_id.clone(), m.ndcg);
        }
        by_strategy.entry(run.strategy).or_default().push(per_query);
    }
    Ok(by_strategy)
}

/// Max nDCG across the runs of one strategy, per query.
fn max_over_runs(per_run: &[BTreeMap<String, f64>]) -> BTreeMap<String, f64> {
    let mut max: BTreeMap<String, f64> = BTreeMap::new();
    for run in per_run {
        for (query_id, &ndcg) in run {
            max.entry(query_id.clone())
                .and_modify(|v| *v = v.max(ndcg))
                .or_insert(ndcg);
        }
    }
    max
}

/// Run one analysis over a set of runs (any mix of strategies/retrievers).
pub fn analyze_results(
    run_results: &[RunResult],
    qrels: &Qrels,
    conversations: &[Conversation],
    kind: AnalysisKind,
    k: usize,
    gain: GainFunction,
) -> Result<AnalysisReport> {
    if run_results.is_empty() {
        return Err(Error::Precondition("no run results to analyze".into()));
    }
    let info = turn_info(conversations);
    let by_strategy = ndcg_by_strategy(run_results, qrels, k, gain)?;
    let lookup = |query_id: &str| -> Result<&TurnInfo> {
        info.get(query_id).ok_or_else(|| {
            Error::InvalidInput(format!("query {query_id} not found in conversations"))
        })
    };

    match kind {
        AnalysisKind::TurnPosition => {
            let mut rows = Vec::new();
            for (strategy, runs) in &by_strategy {
                let mut buckets: BTreeMap<String, (usize, f64)> = BTreeMap::new();
                for run in runs {
                    for (query_id, &ndcg) in run {
                        let bucket = turn_bucket(lookup(query_id)?.turn_index);
                        let entry = buckets.entry(bucket).or_insert((0, 0.0));
                        entry.0 += 1;
                        entry.1 += ndcg;
                    }
                }
                for (bucket, (count, sum)) in buckets {
                    rows.push(TurnPositionRow {
                        strategy: *strategy,
                        bucket,
                        count,
                        mean_ndcg: sum / count as f64,
                    });
                }
            }
            Ok(AnalysisReport::TurnPosition(rows))
        }
        AnalysisKind::Complexity => {
            let mut rows = Vec::new();
            for (strategy, runs) in &by_strategy {
                let best = max_over_runs(runs);
                let mut buckets: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
                for (query_id, &ndcg) in &best {
                    let info = lookup(query_id)?;
                    if info.turn_index < 2 {
                        continue;
                    }
                    let entry = buckets
                        .entry(complexity_bucket(info.aspect_count))
                        .or_insert((0, 0.0));
                    entry.0 += 1;
                    entry.1 += ndcg;
                }
                for bucket in ["low", "medium", "high"] {
                    if let Some((count, sum)) = buckets.get(bucket) {
                        rows.push(ComplexityRow {
                            strategy: *strategy,
                            bucket: bucket.to_string(),
                            turns: *count,
                            mean_max_ndcg: sum / *count as f64,
                        });
                    }
                }
            }
            Ok(AnalysisReport::Complexity(rows))
        }
        AnalysisKind::Failure => {
            let mut rows = Vec::new();
            for (strategy, runs) in &by_strategy {
                let best = max_over_runs(runs);
                let mut counts = [0usize; 4];
                let mut bottom_first_turns = 0usize;
                for (query_id, &ndcg) in &best {
                    let bucket = if ndcg >= 0.8 {
                        0
                    } else if ndcg >= 0.5 {
                        1
                    } else if ndcg >= 0.3 {
                        2
                    } else {
                        3
                    };
                    counts[bucket] += 1;
                    if bucket == 3 && lookup(query_id)?.turn_index == 1 {
                        bottom_first_turns += 1;
                    }
                }
                let total: usize = counts.iter().sum();
                let shares = counts.map(|c| c as f64 / total as f64);
                rows.push(FailureRow {
                    strategy: *strategy,
                    shares,
                    counts,
                    first_turn_share_of_bottom: if counts[3] == 0 {
                        0.0
                    } else {
                        bottom_first_turns as f64 / counts[3] as f64
                    },
                });
            }
            Ok(AnalysisReport::Failure(rows))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turns::{DocScore, RetrievalReasoning, Turn};

    fn conversation(conv_id: &str, turns: usize, aspect_count: usize) -> Conversation {
        Conversation {
            conv_id: conv_id.into(),
            domain: "d".into(),
            source_ref: conv_id.into(),
            aspect_count,
            turns: (1..=turns)
                .map(|i| Turn {
                    turn_index: i,
                    sub_question: format!("sq{i}"),
                    conversational_query: format!("query {conv_id} {i}"),
                    answer: "a".into(),
                    selected_docs: vec![DocScore::new("d0", 8, 7, 7, 0)],
                    retrieval_reasoning: RetrievalReasoning::default(),
                    aspect_ref: i - 1,
                })
                .collect(),
        }
    }

    /// A run whose ranking for each query puts the relevant doc at a chosen
    /// rank (1-based), or omits it for rank 0.
    fn run_with_ranks(
        retriever_id: &str,
        strategy: Strategy,
        placements: &[(&str, usize)],
    ) -> (RunResult, Qrels) {
        let mut qrels = Qrels::default();
        let mut rankings = BTreeMap::new();
        for (query_id, rank) in placements {
            qrels.add(*query_id, "rel", 1);
            let mut ranking = Vec::new();
            for i in 1..=10usize {
                if i == *rank {
                    ranking.push(("rel".to_string(), 1.0 / i as f64));
                } else {
                    ranking.push((format!("n{i}"), 1.0 / i as f64));
                }
            }
            rankings.insert(query_id.to_string(), ranking);
        }
        (
            RunResult {
                retriever_id: retriever_id.into(),
                strategy,
                rankings,
            },
            qrels,
        )
    }

    #[test]
    fn perfect_scores_fill_the_top_failure_bucket() {
        let convs = vec![conversation("c1", 3, 5)];
        let (run, qrels) = run_with_ranks(
            "bm25",
            Strategy::Baseline,
            &[("c1_t1", 1), ("c1_t2", 1), ("c1_t3", 1)],
        );
        let report = analyze_results(
            &[run],
            &qrels,
            &convs,
            AnalysisKind::Failure,
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        let AnalysisReport::Failure(rows) = report else {
            panic!("wrong report kind")
        };
        assert_eq!(rows[0].shares, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn turn_position_means_match_hand_computation() {
        let convs = vec![conversation("c1", 3, 5)];
        // Ranks 1, 2, 10 -> nDCG 1, 1/log2(3), 1/log2(11).
        let (run, qrels) = run_with_ranks(
            "bm25",
            Strategy::Baseline,
            &[("c1_t1", 1), ("c1_t2", 2), ("c1_t3", 10)],
        );
        let report = analyze_results(
            &[run],
            &qrels,
            &convs,
            AnalysisKind::TurnPosition,
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        let AnalysisReport::TurnPosition(rows) = report else {
            panic!("wrong report kind")
        };
        let find = |bucket: &str| rows.iter().find(|r| r.bucket == bucket).unwrap();
        assert!((find("1").mean_ndcg - 1.0).abs() < 1e-12);
        assert!((find("2").mean_ndcg - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((find("3").mean_ndcg - 1.0 / 11f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn complexity_buckets_split_at_the_documented_boundaries() {
        let convs = vec![
            conversation("c1", 3, 4),  // low
            conversation("c2", 3, 7),  // high
            conversation("c3", 3, 5),  // medium
        ];
        let placements: Vec<(String, usize)> = convs
            .iter()
            .flat_map(|c| (1..=3).map(move |i| (format!("{}_t{i}", c.conv_id), 1)))
            .collect();
        let refs: Vec<(&str, usize)> = placements.iter().map(|(q, r)| (q.as_str(), *r)).collect();
        let (run, qrels) = run_with_ranks("bm25", Strategy::HistoryReasoning, &refs);
        let report = analyze_results(
            &[run],
            &qrels,
            &convs,
            AnalysisKind::Complexity,
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        let AnalysisReport::Complexity(rows) = report else {
            panic!("wrong report kind")
        };
        // Turns >= 2 only: two turns per conversation.
        for bucket in ["low", "medium", "high"] {
            let row = rows.iter().find(|r| r.bucket == bucket).unwrap();
            assert_eq!(row.turns, 2, "{bucket}");
        }
    }

    #[test]
    fn failure_bottom_bucket_tracks_first_turn_share() {
        let convs = vec![conversation("c1", 4, 5)];
        // t1 and t3 miss entirely (rank 0 -> never placed); t2, t4 at rank 1.
        let mut qrels = Qrels::default();
        let mut rankings = BTreeMap::new();
        for (query, hit) in [("c1_t1", false), ("c1_t2", true), ("c1_t3", false), ("c1_t4", true)] {
            qrels.add(query, "rel", 1);
            let ranking = if hit {
                vec![("rel".to_string(), 1.0)]
            } else {
                vec![("miss".to_string(), 1.0)]
            };
            rankings.insert(query.to_string(), ranking);
        }
        let run = RunResult {
            retriever_id: "bm25".into(),
            strategy: Strategy::Baseline,
            rankings,
        };
        let report = analyze_results(
            &[run],
            &qrels,
            &convs,
            AnalysisKind::Failure,
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        let AnalysisReport::Failure(rows) = report else {
            panic!("wrong report kind")
        };
        assert_eq!(rows[0].counts, [2, 0, 0, 2]);
        assert!((rows[0].first_turn_share_of_bottom - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_coverage_is_an_error() {
        let convs = vec![conversation("c1", 3, 5)];
        let (run, mut qrels) = run_with_ranks("bm25", Strategy::Baseline, &[("c1_t1", 1)]);
        qrels.add("c1_t9", "rel", 1);
        let err = analyze_results(
            &[run],
            &qrels,
            &convs,
            AnalysisKind::TurnPosition,
            10,
            GainFunction::Exponential,
        )
        .unwrap_err();
        assert!(err.to_string().contains("does not cover"));
    }
}

//! Ranking metrics (nDCG@k, MAP@k, Recall@k, MRR@k) and domain macro-averaging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Gain applied to a relevance grade inside DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainFunction {
    /// `2^rel - 1` (standard graded gain).
    #[default]
    Exponential,
    /// `rel` as-is.
    Linear,
}

impl GainFunction {
    fn gain(&self, grade: u32) -> f64 {
        match self {
            GainFunction::Exponential => (2f64).powi(grade as i32) - 1.0,
            GainFunction::Linear => grade as f64,
        }
    }
}

/// Per-query metric values, all in `[0, 1]`, computed over the top `k` ranks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricVector {
    pub ndcg: f64,
    pub map: f64,
    pub recall: f64,
    pub mrr: f64,
}

/// Compute nDCG/MAP/Recall/MRR at `k` for one ranked list against the
/// query's relevance grades.
///
/// Returns `None` when the qrels hold no relevant (grade > 0) document for
/// the query; such queries are excluded from aggregation by callers.
pub fn compute_metrics(
    ranking: &[(String, f64)],
    qrels_for_query: &BTreeMap<String, u32>,
    k: usize,
    gain: GainFunction,
) -> Option<MetricVector> {
    let total_relevant = qrels_for_query.values().filter(|&&g| g > 0).count();
    if total_relevant == 0 {
        return None;
    }
    let grade = |doc_id: &str| -> u32 { qrels_for_query.get(doc_id).copied().unwrap_or(0) };

    let top: Vec<u32> = ranking.iter().take(k).map(|(id, _)| grade(id)).collect();

    // DCG with log2(rank + 1) discount, 1-based ranks.
    let dcg: f64 = top
        .iter()
        .enumerate()
        .map(|(i, &g)| gain.gain(g) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = qrels_for_query.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.gain(g) / ((i + 2) as f64).log2())
        .sum();
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };

    // MAP@k normalized by the total number of relevant documents.
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, &g) in top.iter().enumerate() {
        if g > 0 {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    let map = precision_sum / total_relevant as f64;

    let recall = hits as f64 / total_relevant as f64;

    let mrr = top
        .iter()
        .position(|&g| g > 0)
        .map(|i| 1.0 / (i + 1) as f64)
        .unwrap_or(0.0);

    Some(MetricVector {
        ndcg,
        map,
        recall,
        mrr,
    })
}

/// Per-domain means plus their unweighted macro average.
#[derive(Debug, Clone, Serialize)]
pub struct MacroReport {
    pub per_domain: Vec<DomainRow>,
    pub macro_avg: MetricVector,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainRow {
    pub domain: String,
    pub count: usize,
    pub mean: MetricVector,
}

fn mean_of(vectors: &[MetricVector]) -> MetricVector {
    let n = vectors.len() as f64;
    let mut sum = MetricVector::default();
    for v in vectors {
        sum.ndcg += v.ndcg;
        sum.map += v.map;
        sum.recall += v.recall;
        sum.mrr += v.mrr;
    }
    MetricVector {
        ndcg: sum.ndcg / n,
        map: sum.map / n,
        recall: sum.recall / n,
        mrr: sum.mrr / n,
    }
}

/// Mean within each domain, then the unweighted mean of domain means, so
/// every domain carries equal weight regardless of size.
pub fn macro_average(per_turn: &[(String, MetricVector)]) -> Option<MacroReport> {
    if per_turn.is_empty() {
        return None;
    }
    let mut by_domain: BTreeMap<&str, Vec<MetricVector>> = BTreeMap::new();
    for (domain, metrics) in per_turn {
        by_domain.entry(domain).or_default().push(*metrics);
    }
    let per_domain: Vec<DomainRow> = by_domain
        .iter()
        .map(|(domain, vectors)| DomainRow {
            domain: domain.to_string(),
            count: vectors.len(),
            mean: mean_of(vectors),
        })
        .collect();
    let domain_means: Vec<MetricVector> = per_domain.iter().map(|row| row.mean).collect();
    Some(MacroReport {
        macro_avg: mean_of(&domain_means),
        per_domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels(entries: &[(&str, u32)]) -> BTreeMap<String, u32> {
        entries.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    fn ranking(ids: &[&str]) -> Vec<(String, f64)> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), 1.0 / (i + 1) as f64))
            .collect()
    }

    #[test]
    fn single_relevant_at_rank_one_is_perfect() {
        let m = compute_metrics(
            &ranking(&["d1", "d2", "d3"]),
            &qrels(&[("d1", 1)]),
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        assert_eq!(m.ndcg, 1.0);
        assert_eq!(m.map, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.mrr, 1.0);
    }

    #[test]
    fn nothing_relevant_retrieved_is_all_zero() {
        let m = compute_metrics(
            &ranking(&["d8", "d9"]),
            &qrels(&[("d1", 1)]),
            10,
            GainFunction::Exponential,
        )
        .unwrap();
        assert_eq!(m.ndcg, 0.0);
        assert_eq!(m.map, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.mrr, 0.0);
    }

    #[test]
    fn zero_relevant_queries_are_excluded() {
        assert!(compute_metrics(
            &ranking(&["d1"]),
            &qrels(&[("d1", 0)]),
            10,
            GainFunction::Exponential,
        )
        .is_none());
    }

    /// Brute-force summation oracle for the rank-2-and-5 fixture.
    #[test]
    fn two_relevant_at_ranks_two_and_five_match_the_oracle() {
        let docs = ["n1", "r1", "n2", "n3", "r2", "n4", "n5", "n6", "n7", "n8"];
        let judgments = qrels(&[("r1", 1), ("r2", 1)]);
        let m = compute_metrics(&ranking(&docs), &judgments, 10, GainFunction::Exponential)
            .unwrap();

        // Oracle: direct summation with explicit loops.
        let rels = [0u32, 1, 0, 0, 1, 0, 0, 0, 0, 0];
        let mut dcg = 0.0;
        for (i, &r) in rels.iter().enumerate() {
            dcg += ((2f64).powi(r as i32) - 1.0) / ((i as f64) + 2.0).log2();
        }
        let idcg = 1.0 / 2f64.log2() + 1.0 / 3f64.log2();
        let mut hits = 0.0;
        let mut ap = 0.0;
        for (i, &r) in rels.iter().enumerate() {
            if r > 0 {
                hits += 1.0;
                ap += hits / (i as f64 + 1.0);
            }
        }
        ap /= 2.0;

        assert!((m.ndcg - dcg / idcg).abs() < 1e-15);
        assert!((m.map - ap).abs() < 1e-15);
        assert!((m.map - 0.45).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.mrr, 0.5);
    }

    #[test]
    fn graded_gains_differ_between_linear_and_exponential() {
        let judgments = qrels(&[("a", 3), ("b", 1)]);
        let r = ranking(&["b", "a"]);
        let exp = compute_metrics(&r, &judgments, 10, GainFunction::Exponential).unwrap();
        let lin = compute_metrics(&r, &judgments, 10, GainFunction::Linear).unwrap();
        assert!(exp.ndcg < lin.ndcg);
        // Rank-based metrics ignore the gain function.
        assert_eq!(exp.map, lin.map);
        assert_eq!(exp.mrr, lin.mrr);
    }

    #[test]
    fn single_domain_macro_equals_domain_mean() {
        let rows = vec![
            ("law".to_string(), MetricVector { ndcg: 0.2, map: 0.1, recall: 0.4, mrr: 0.3 }),
            ("law".to_string(), MetricVector { ndcg: 0.6, map: 0.5, recall: 0.8, mrr: 0.7 }),
        ];
        let report = macro_average(&rows).unwrap();
        assert!((report.macro_avg.ndcg - 0.4).abs() < 1e-12);
        assert_eq!(report.per_domain.len(), 1);
    }

    #[test]
    fn macro_average_ignores_domain_size() {
        // Domain A: 100 turns at 0.2, domain B: 10 turns at 0.4 -> 0.3.
        let mut rows = Vec::new();
        for _ in 0..100 {
            rows.push(("a".to_string(), MetricVector { ndcg: 0.2, ..Default::default() }));
        }
        for _ in 0..10 {
            rows.push(("b".to_string(), MetricVector { ndcg: 0.4, ..Default::default() }));
        }
        let report = macro_average(&rows).unwrap();
        assert!((report.macro_avg.ndcg - 0.3).abs() < 1e-12);
    }

    #[test]
    fn random_fixture_matches_three_level_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let domains = ["a", "b", "c", "d"];
        let rows: Vec<(String, MetricVector)> = (0..200)
            .map(|_| {
                let d = domains[rng.gen_range(0..domains.len())];
                (
                    d.to_string(),
                    MetricVector {
                        ndcg: rng.gen(),
                        map: rng.gen(),
                        recall: rng.gen(),
                        mrr: rng.gen(),
                    },
                )
            })
            .collect();
        let report = macro_average(&rows).unwrap();

        // Oracle: explicit per-domain accumulation, then mean of means.
        let mut oracle = 0.0;
        for d in domains {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|(dom, _)| dom == d)
                .map(|(_, m)| m.ndcg)
                .collect();
            oracle += vals.iter().sum::<f64>() / vals.len() as f64;
        }
        oracle /= domains.len() as f64;
        assert!((report.macro_avg.ndcg - oracle).abs() < 1e-12);
    }
}

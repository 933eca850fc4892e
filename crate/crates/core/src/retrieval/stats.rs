//! Paired significance testing.

use serde::Serialize;

use super::metrics::{compute_metrics, GainFunction};
use super::RunResult;
use crate::corpus::Qrels;
use crate::error::{Error, Result};

/// Two-sided paired Student's t-test result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TTestResult {
    pub mean_delta: f64,
    pub standard_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Paired t-test of `a` against `b` (`d = a - b`, sample standard deviation
/// with `n - 1`, two-tailed p from the t distribution via the regularized
/// incomplete beta). Zero-variance deltas return `t = 0, p = 1`.
pub fn paired_t_test(scores_a: &[f64], scores_b: &[f64]) -> Result<TTestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::Precondition(format!(
            "paired samples differ in length: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let n = scores_a.len();
    if n < 2 {
        return Err(Error::Precondition("paired t-test needs n >= 2".into()));
    }
    let deltas: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let variance = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if variance == 0.0 {
        return Ok(TTestResult {
            mean_delta: mean,
            standard_error: 0.0,
            t_statistic: 0.0,
            p_value: 1.0,
            n,
        });
    }
    let standard_error = (variance / n as f64).sqrt();
    let t = mean / standard_error;
    let dof = (n - 1) as f64;
    let p = student_t_two_tailed_p(t, dof);
    Ok(TTestResult {
        mean_delta: mean,
        standard_error,
        t_statistic: t,
        p_value: p.clamp(0.0, 1.0),
        n,
    })
}

/// Two-tailed p-value: `I_x(nu/2, 1/2)` with `x = nu / (nu + t^2)`.
pub fn student_t_two_tailed_p(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(dof / 2.0, 0.5, x)
}

/// Regularized incomplete beta `I_x(a, b)` by continued fraction, absolute
/// accuracy well below 1e-8 over the t-test range.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * x).sin().abs().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = 0.99999999999980993;
        for (i, &c) in COEFFS.iter().enumerate() {
            acc += c / (x + i as f64 + 1.0);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Which metric feeds the paired observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Ndcg,
    Map,
    Recall,
    Mrr,
}

impl MetricKind {
    fn pick(&self, m: super::metrics::MetricVector) -> f64 {
        match self {
            MetricKind::Ndcg => m.ndcg,
            MetricKind::Map => m.map,
            MetricKind::Recall => m.recall,
            MetricKind::Mrr => m.mrr,
        }
    }
}

/// Pair turn-level observations between two strategy run sets.
///
/// Observations are keyed by `(retriever_id, query_id)`: both sides must
/// cover the same retrievers, and every scoreable qrels query must appear in
/// each run. With `r` retrievers and `q` scoreable queries the output length
/// is exactly `r * q`.
pub fn paired_observations(
    runs_a: &[RunResult],
    runs_b: &[RunResult],
    qrels: &Qrels,
    k: usize,
    gain: GainFunction,
    metric: MetricKind,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a_scores = Vec::new();
    let mut b_scores = Vec::new();
    for run_a in runs_a {
        let run_b = runs_b
            .iter()
            .find(|r| r.retriever_id == run_a.retriever_id)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "retriever `{}` missing from the second run set",
                    run_a.retriever_id
                ))
            })?;
        for (query_id, judgments) in &qrels.entries {
            if judgments.values().all(|&g| g == 0) {
                continue;
            }
            let ranking_a = run_a.rankings.get(query_id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "run {}/{} does not cover query {query_id}",
                    run_a.retriever_id,
                    run_a.strategy.as_str()
                ))
            })?;
            let ranking_b = run_b.rankings.get(query_id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "run {}/{} does not cover query {query_id}",
                    run_b.retriever_id,
                    run_b.strategy.as_str()
                ))
            })?;
            let ma = compute_metrics(ranking_a, judgments, k, gain).expect("grades checked");
            let mb = compute_metrics(ranking_b, judgments, k, gain).expect("grades checked");
            a_scores.push(metric.pick(ma));
            b_scores.push(metric.pick(mb));
        }
    }
    Ok((a_scores, b_scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_arrays_give_t_zero_p_one() {
        let a = vec![0.5, 0.7, 0.2, 0.9];
        let result = paired_t_test(&a, &a.clone()).unwrap();
        assert_eq!(result.t_statistic, 0.0);
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn textbook_fixture_matches_closed_form() {
        // d = [1,2,3,4]: mean 2.5, sd sqrt(5/3), t = 2.5 / (1.29099/2).
        let a = vec![2.0, 4.0, 6.0, 8.0];
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let result = paired_t_test(&a, &b).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        let expected_t = 2.5 / (sd / 2.0);
        assert!((result.t_statistic - expected_t).abs() < 1e-12);
        assert!((result.t_statistic - 3.872983346207417).abs() < 1e-12);
        assert!((result.p_value - 0.030466291662170988).abs() < 1e-8);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn t_sign_follows_mean_delta() {
        let a = vec![0.1, 0.2, 0.3, 0.35];
        let b = vec![0.5, 0.6, 0.7, 0.9];
        let result = paired_t_test(&a, &b).unwrap();
        assert!(result.mean_delta < 0.0);
        assert!(result.t_statistic < 0.0);
        assert!(result.p_value > 0.0 && result.p_value <= 1.0);
    }

    #[test]
    fn incomplete_beta_reference_points() {
        // I_x(a, b) spot values: I_0.5(1, 1) = 0.5; I_x(1, 1) = x.
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.5) - 0.5).abs() < 1e-12);
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.25) - 0.25).abs() < 1e-12);
        // Symmetry: I_x(a, b) = 1 - I_{1-x}(b, a).
        let lhs = regularized_incomplete_beta(2.5, 1.5, 0.3);
        let rhs = 1.0 - regularized_incomplete_beta(1.5, 2.5, 0.7);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn large_dof_approaches_the_normal_tail() {
        // t = 1.96 with huge dof: two-tailed p ~ 0.05.
        let p = student_t_two_tailed_p(1.959964, 1e6);
        assert!((p - 0.05).abs() < 1e-4);
    }
}

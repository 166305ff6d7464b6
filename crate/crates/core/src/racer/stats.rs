//! Elimination tests over a blocked cost matrix.
//!
//! Matrices are row-major: one row per instance (block), one column per
//! configuration. Lower cost is better.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    /// Friedman test with Conover's post-hoc comparison against the best.
    #[serde(rename = "F")]
    Friedman,
    /// Paired t-tests against the best, without multiplicity correction.
    #[serde(rename = "t")]
    PairedT,
}

impl std::str::FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" | "f" | "friedman" => Ok(TestKind::Friedman),
            "t" | "T" | "t-test" => Ok(TestKind::PairedT),
            other => Err(format!("unknown test '{other}' (expected F or t)")),
        }
    }
}

/// Columns to drop and the statistic each was judged by.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub eliminated: Vec<(usize, f64)>,
}

/// Within-row ranks, ties sharing their mean rank.
pub fn row_ranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Column rank sums over all rows.
pub fn rank_sums(matrix: &[Vec<f64>]) -> Vec<f64> {
    let k = matrix.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; k];
    for row in matrix {
        for (s, r) in sums.iter_mut().zip(row_ranks(row)) {
            *s += r;
        }
    }
    sums
}

fn column_means(matrix: &[Vec<f64>]) -> Vec<f64> {
    let k = matrix.first().map_or(0, Vec::len);
    let n = matrix.len().max(1) as f64;
    (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Column order by ascending rank sum, then mean cost, then `ids`.
pub fn rank_order(matrix: &[Vec<f64>], ids: &[u64]) -> Vec<usize> {
    let sums = rank_sums(matrix);
    let means = column_means(matrix);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        sums[a]
            .partial_cmp(&sums[b])
            .unwrap_or(Ordering::Equal)
            .then(means[a].partial_cmp(&means[b]).unwrap_or(Ordering::Equal))
            .then(ids[a].cmp(&ids[b]))
    });
    order
}

/// Friedman statistic `12/(n k (k+1)) sum R_j^2 - 3 n (k+1)`.
pub fn friedman_statistic(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len() as f64;
    let k = matrix.first().map_or(0, Vec::len) as f64;
    let sums = rank_sums(matrix);
    12.0 / (n * k * (k + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * n * (k + 1.0)
}

/// Friedman test; when it rejects at `alpha`, every column whose rank sum
/// exceeds the best one by more than Conover's critical difference is
/// eliminated.
pub fn friedman_eliminate(matrix: &[Vec<f64>], alpha: f64) -> TestResult {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return TestResult {
            statistic: 0.0,
            eliminated: Vec::new(),
        };
    }
    let t = friedman_statistic(matrix);
    let critical = ChiSquared::new((k - 1) as f64)
        .expect("k >= 2")
        .inverse_cdf(1.0 - alpha);
    if !(t > critical) {
        return TestResult {
            statistic: t,
            eliminated: Vec::new(),
        };
    }
    let (nf, kf) = (n as f64, k as f64);
    let sums = rank_sums(matrix);
    let sum_r2: f64 = matrix.iter().flat_map(|row| row_ranks(row)).map(|r| r * r).sum();
    let sum_rj2: f64 = sums.iter().map(|r| r * r).sum();
    let df = (nf - 1.0) * (kf - 1.0);
    let quantile = StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(1.0 - alpha / 2.0);
    let inner = 2.0 * nf * (1.0 - t / (nf * (kf - 1.0))) * (sum_r2 - sum_rj2 / nf) / df;
    let width = quantile * inner.max(0.0).sqrt();
    let best = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let eliminated = sums
        .iter()
        .enumerate()
        .filter(|(_, &r)| r - best > width)
        .map(|(j, _)| (j, t))
        .collect();
    TestResult { statistic: t, eliminated }
}

/// Paired two-sided t-test of every column against the best-ranked one.
/// A column is dropped when it is worse on average with p < alpha; a
/// zero-variance difference drops it only when it is worse on every row.
pub fn t_test_eliminate(matrix: &[Vec<f64>], alpha: f64) -> TestResult {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return TestResult {
            statistic: 0.0,
            eliminated: Vec::new(),
        };
    }
    let ids: Vec<u64> = (0..k as u64).collect();
    let best = rank_order(matrix, &ids)[0];
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2");
    let nf = n as f64;
    let mut eliminated = Vec::new();
    let mut max_t: f64 = 0.0;
    for j in (0..k).filter(|&j| j != best) {
        let diffs: Vec<f64> = matrix.iter().map(|row| row[j] - row[best]).collect();
        let mean = diffs.iter().sum::<f64>() / nf;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        if var <= 0.0 {
            if diffs.iter().all(|d| *d > 0.0) {
                eliminated.push((j, f64::INFINITY));
                max_t = f64::INFINITY;
            }
            continue;
        }
        let t = mean / (var / nf).sqrt();
        max_t = max_t.max(t);
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        if mean > 0.0 && p < alpha {
            eliminated.push((j, t));
        }
    }
    TestResult {
        statistic: max_t,
        eliminated,
    }
}

pub fn eliminate(kind: TestKind, matrix: &[Vec<f64>], alpha: f64) -> TestResult {
    match kind {
        TestKind::Friedman => friedman_eliminate(matrix, alpha),
        TestKind::PairedT => t_test_eliminate(matrix, alpha),
    }
}

//! Wilcoxon rank-sum (Mann-Whitney U) test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pooled size at or below which the p-value is computed by exact enumeration.
pub const EXACT_MAX_TOTAL: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled values, in input order.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn u_from_ranks(ranks: &[f64], n_a: usize) -> f64 {
    ranks.iter().sum::<f64>() - (n_a * (n_a + 1)) as f64 / 2.0
}

/// Visits every `k`-subset of `0..n` as an index list.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySeries);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if let Some(i) = pooled.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let ranks = midranks(&pooled);
    let u = u_from_ranks(&ranks[..n_a], n_a);
    let mean_u = (n_a * n_b) as f64 / 2.0;

    if pooled.iter().all(|v| *v == pooled[0]) {
        return Ok(RankSumTest { u, p: 1.0, exact: n <= EXACT_MAX_TOTAL });
    }

    if n <= EXACT_MAX_TOTAL {
        let observed = (u - mean_u).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        for_each_subset(n, n_a, |subset| {
            let r: f64 = subset.iter().map(|&k| ranks[k]).sum();
            let uu = r - (n_a * (n_a + 1)) as f64 / 2.0;
            if (uu - mean_u).abs() >= observed - 1e-9 {
                extreme += 1;
            }
            total += 1;
        });
        return Ok(RankSumTest { u, p: extreme as f64 / total as f64, exact: true });
    }

    // normal approximation with tie correction and continuity correction
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let var = (n_a * n_b) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if !(var > 0.0) {
        return Ok(RankSumTest { u, p: 1.0, exact: false });
    }
    let z = ((u - mean_u).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = (2.0 * (1.0 - std_normal.cdf(z))).min(1.0);
    Ok(RankSumTest { u, p, exact: false })
}

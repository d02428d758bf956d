//! Paired-sample tests: Wilcoxon signed-rank and standardized mean difference.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Nonzero differences needed before a p-value is reported.
pub const MIN_NONZERO_PAIRS: usize = 6;
/// Largest sample handled by the exact null distribution.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {got} usable pairs, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("effect size undefined: differences have zero variance")]
    UndefinedEffect,
}

/// One metric observed on the same cell under both variants.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub graph_id: String,
    pub metric: String,
    pub value_original: f64,
    pub value_enhanced: f64,
    /// `value_original - value_enhanced`; positive favours the enhancement.
    pub difference: f64,
}

impl PairedSample {
    pub fn new(graph_id: impl Into<String>, metric: impl Into<String>, original: f64, enhanced: f64) -> Self {
        PairedSample {
            graph_id: graph_id.into(),
            metric: metric.into(),
            value_original: original,
            value_enhanced: enhanced,
            difference: original - enhanced,
        }
    }
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
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

fn nonzero(diffs: &[f64]) -> Vec<f64> {
    diffs.iter().copied().filter(|d| *d != 0.0).collect()
}

/// Ranks of |d| doubled so midranks become integers, plus the doubled W+.
fn doubled_ranks(diffs: &[f64]) -> (Vec<u64>, u64) {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks: Vec<u64> = midranks(&abs).iter().map(|r| (2.0 * r).round() as u64).collect();
    let w_plus = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    (ranks, w_plus)
}

fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).min(1.0)
}

fn check_size(n: usize) -> Result<(), StatsError> {
    if n < MIN_NONZERO_PAIRS {
        return Err(StatsError::InsufficientData {
            got: n,
            need: MIN_NONZERO_PAIRS,
        });
    }
    Ok(())
}

/// Two-sided p-value from the exact permutation distribution of W+.
/// Zero differences are dropped; ties get midranks.
pub fn wilcoxon_exact(diffs: &[f64]) -> Result<f64, StatsError> {
    let d = nonzero(diffs);
    check_size(d.len())?;
    let (ranks, w) = doubled_ranks(&d);
    let total: u64 = ranks.iter().sum();
    // counts[s] = number of sign assignments whose doubled W+ equals s
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(d.len() as i32);
    let lower: u64 = counts[..=w as usize].iter().sum();
    let upper: u64 = counts[w as usize..].iter().sum();
    Ok(two_sided(lower as f64 / all, upper as f64 / all))
}

/// Two-sided p-value from the normal approximation with tie correction
/// and continuity correction.
pub fn wilcoxon_normal(diffs: &[f64]) -> Result<f64, StatsError> {
    let d = nonzero(diffs);
    check_size(d.len())?;
    let n = d.len() as f64;
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&abs);
    let w: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|x| **x == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Wilcoxon signed-rank test on paired samples: exact up to
/// [`EXACT_LIMIT`] nonzero differences, normal approximation above.
pub fn wilcoxon_signed_rank(pairs: &[PairedSample]) -> Result<f64, StatsError> {
    let diffs: Vec<f64> = pairs.iter().map(|p| p.difference).collect();
    if nonzero(&diffs).len() <= EXACT_LIMIT {
        wilcoxon_exact(&diffs)
    } else {
        wilcoxon_normal(&diffs)
    }
}

/// Mean of the differences over their sample standard deviation.
pub fn effect_size_of(diffs: &[f64]) -> Result<f64, StatsError> {
    if diffs.len() < 2 {
        return Err(StatsError::InsufficientData {
            got: diffs.len(),
            need: 2,
        });
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 || sd <= f64::EPSILON * mean.abs() {
        return Err(StatsError::UndefinedEffect);
    }
    Ok(mean / sd)
}

pub fn effect_size(pairs: &[PairedSample]) -> Result<f64, StatsError> {
    let diffs: Vec<f64> = pairs.iter().map(|p| p.difference).collect();
    effect_size_of(&diffs)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

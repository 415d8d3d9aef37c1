//! Pearson and Spearman correlation with two-sided significance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite observation".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation. Zero variance in either list is an error.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of the ranks they
/// span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

/// Two-sided p-value of a correlation of `r` over `n` observations, using
/// `t = r·√((n−2)/(1−r²))` with `n − 2` degrees of freedom for both kinds.
///
/// `|r| = 1` yields 0 (an exact relationship). With fewer than 3
/// observations there are no degrees of freedom and the result is 1.
pub fn significance(r: f64, n: usize) -> f64 {
    if n < 3 || r.is_nan() {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Largest sample size accepted by [`permutation_p_value`].
pub const MAX_EXACT_PERMUTATION_N: usize = 12;

/// Exact two-sided permutation p-value: the fraction of all `n!` pairings
/// whose correlation is at least as extreme as the observed one.
///
/// Both correlation kinds are monotone in `Σ xᵢ y_π(i)` once the marginals
/// are fixed, so permutations are enumerated with Heap's algorithm while
/// updating that sum in constant time per swap.
pub fn permutation_p_value(x: &[f64], y: &[f64], kind: CorrelationKind) -> Result<f64> {
    check_inputs(x, y)?;
    let n = x.len();
    if n > MAX_EXACT_PERMUTATION_N {
        return Err(Error::InvalidValue(format!(
            "exact permutation test limited to n <= {MAX_EXACT_PERMUTATION_N}, got {n}"
        )));
    }
    let (xs, mut ys) = match kind {
        CorrelationKind::Pearson => (x.to_vec(), y.to_vec()),
        CorrelationKind::Spearman => (average_ranks(x), average_ranks(y)),
    };
    // validates variance
    pearson(&xs, &ys)?;
    let (mx, my) = (mean(&xs), mean(&ys));
    let xs: Vec<f64> = xs.iter().map(|v| v - mx).collect();
    ys.iter_mut().for_each(|v| *v -= my);

    let observed: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    let scale = xs.iter().map(|v| v.abs()).sum::<f64>() * ys.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = observed.abs() - 1e-9 * scale.max(1.0);

    let mut sum = observed;
    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    let mut count = |s: f64| {
        total += 1;
        if s.abs() >= threshold {
            extreme += 1;
        }
    };
    count(sum);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            sum += xs[j] * ys[i] + xs[i] * ys[j] - xs[j] * ys[j] - xs[i] * ys[i];
            ys.swap(j, i);
            count(sum);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// Both correlations with their p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
    pub p_pearson: f64,
    pub p_spearman: f64,
}

impl CorrelationReport {
    pub fn compute(predictions: &[f64], targets: &[f64]) -> Result<Self> {
        let r = pearson(predictions, targets)?;
        let rho = spearman(predictions, targets)?;
        let n = predictions.len();
        Ok(Self {
            pearson: r,
            spearman: rho,
            n,
            p_pearson: significance(r, n),
            p_spearman: significance(rho, n),
        })
    }

    /// As [`compute`](Self::compute), with exact permutation p-values when
    /// `n` is small enough.
    pub fn compute_exact_small(predictions: &[f64], targets: &[f64]) -> Result<Self> {
        let mut report = Self::compute(predictions, targets)?;
        if report.n <= MAX_EXACT_PERMUTATION_N {
            report.p_pearson = permutation_p_value(predictions, targets, CorrelationKind::Pearson)?;
            report.p_spearman = permutation_p_value(predictions, targets, CorrelationKind::Spearman)?;
        }
        Ok(report)
    }
}

//! Paired significance tests over per-run metric values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Above this many non-zero pairs the Wilcoxon p-value uses the normal approximation.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooFew(usize),
    #[error("non-finite value in sample")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub t_statistic: f64,
    pub p_value: f64,
    /// Absolute paired effect size.
    pub cohens_d: f64,
    /// Sign of mean(x - y): 1, -1 or 0.
    pub sign: i8,
    pub wilcoxon_w: f64,
    pub wilcoxon_p: f64,
    pub n: usize,
}

fn differences(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFew(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(xs.iter().zip(ys).map(|(x, y)| x - y).collect())
}

fn mean_sd(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Returns (t, two-sided p).
pub fn paired_t(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    let d = differences(xs, ys)?;
    let (mean, sd) = mean_sd(&d);
    if mean == 0.0 && sd == 0.0 {
        return Ok((0.0, 1.0));
    }
    if sd == 0.0 {
        return Ok((mean.signum() * f64::INFINITY, 0.0));
    }
    let n = d.len() as f64;
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("df is positive");
    let p = 2.0 * dist.sf(t.abs());
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Signed paired effect size mean(diff) / sd(diff).
pub fn cohens_d_paired(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let d = differences(xs, ys)?;
    let (mean, sd) = mean_sd(&d);
    if mean == 0.0 {
        return Ok(0.0);
    }
    if sd == 0.0 {
        return Ok(mean.signum() * f64::INFINITY);
    }
    Ok(mean / sd)
}

/// Average ranks of |d| for the non-zero differences, paired with each sign.
fn signed_ranks(d: &[f64]) -> Vec<(f64, bool)> {
    let mut nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        for v in &nz[i..=j] {
            out.push((rank, *v > 0.0));
        }
        i = j + 1;
    }
    out
}

/// Returns (W, two-sided p) where W = min(W+, W-).
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    let d = differences(xs, ys)?;
    let ranks = signed_ranks(&d);
    let n = ranks.len();
    if n == 0 {
        return Ok((0.0, 1.0));
    }
    let w_plus: f64 = ranks.iter().filter(|(_, pos)| *pos).map(|(r, _)| r).sum::<f64>() + 0.0;
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);
    let p = if n <= WILCOXON_EXACT_MAX {
        exact_p(&ranks, w)
    } else {
        normal_p(&ranks, w_plus)
    };
    Ok((w, p.clamp(0.0, 1.0)))
}

/// Exact null distribution of W+ over all sign assignments, ties included.
fn exact_p(ranks: &[(f64, bool)], w: f64) -> f64 {
    // Doubled average ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|(r, _)| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(ranks.len() as i32);
    let limit = (w * 2.0).round() as usize;
    let tail: f64 = counts[..=limit].iter().sum();
    2.0 * tail / total
}

fn normal_p(ranks: &[(f64, bool)], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let mut j = i;
        while j + 1 < ranks.len() && ranks[j + 1].0 == ranks[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * normal.sf(z)
}

pub fn compare(xs: &[f64], ys: &[f64]) -> Result<StatResult, StatsError> {
    let (t, p) = paired_t(xs, ys)?;
    let d = cohens_d_paired(xs, ys)?;
    let (w, wp) = wilcoxon_signed_rank(xs, ys)?;
    let sign = if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    };
    Ok(StatResult {
        t_statistic: t,
        p_value: p,
        cohens_d: d.abs(),
        sign,
        wilcoxon_w: w,
        wilcoxon_p: wp,
        n: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_samples() {
        let xs = [1.0, 2.0, 3.0];
        let r = compare(&xs, &xs).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.cohens_d, r.sign), (0.0, 1.0, 0.0, 0));
        assert_eq!(r.wilcoxon_p, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(paired_t(&[1.0], &[1.0]), Err(StatsError::TooFew(1)));
        assert_eq!(paired_t(&[1.0, 2.0], &[1.0]), Err(StatsError::LengthMismatch(2, 1)));
        assert_eq!(paired_t(&[1.0, f64::NAN], &[1.0, 2.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn exact_wilcoxon_small_case() {
        // Five positive differences: only one of 32 sign patterns reaches W = 0 on each side.
        let (w, p) = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(w, 0.0);
        assert_relative_eq!(p, 2.0 / 32.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_differences_are_dropped() {
        let (w, p) = wilcoxon_signed_rank(&[1.0, 1.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(w, 0.0);
        assert_relative_eq!(p, 1.0);
    }

    #[test]
    fn constant_shift_is_infinite_effect() {
        let r = compare(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.cohens_d.is_infinite());
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.sign, 1);
    }
}

//! Mann-Whitney U, Vargha-Delaney A12 and Pearson's r.
//!
//! p-values use large-sample approximations: the normal distribution with
//! tie and continuity correction for U, Student's t for r.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 paired observations, got {0}")]
    TooFewObservations(usize),
    #[error("sample has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs with `a > b`, ties counted one half.
    pub u: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p_two_sided: f64,
}

/// Average 1-based ranks of the pooled samples plus the tie-group sizes.
fn pooled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &(_, origin) in &pooled[i..j] {
            ranks[origin] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let (ranks, ties) = pooled_ranks(a, b);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;

    let mean = n1 * n2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term);
    if variance <= 0.0 {
        // Every observation is identical.
        return Ok(MannWhitney {
            u,
            p_two_sided: 1.0,
        });
    }
    let z = ((u - mean).abs() - 0.5) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    Ok(MannWhitney { u, p_two_sided: p })
}

/// Probability that a value from `a` exceeds one from `b`, ties counted half.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (ranks, _) = pooled_ranks(a, b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    Ok((rank_sum / n1 - (n1 + 1.0) / 2.0) / n2)
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p_two_sided: p })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pair counting: `a > b` scores 1, ties 1/2.
    fn pair_count(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .flat_map(|x| b.iter().map(move |y| (x, y)))
            .map(|(x, y)| {
                if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                }
            })
            .sum()
    }

    #[test]
    fn u_matches_pair_counting() {
        for (a, b) in [
            (vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]),
            (vec![1.0, 2.0], vec![1.0, 2.0]),
            (vec![3.0, 3.0, 1.0, 7.0], vec![3.0, 2.0, 9.0]),
        ] {
            assert_eq!(mann_whitney_u(&a, &b).unwrap().u, pair_count(&a, &b));
        }
        assert_eq!(
            mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])
                .unwrap()
                .u,
            0.0
        );
        assert_eq!(mann_whitney_u(&[1.0, 2.0], &[1.0, 2.0]).unwrap().u, 2.0);
    }

    #[test]
    fn identical_and_degenerate_samples() {
        let s = [1.0, 2.0, 3.0];
        assert_eq!(mann_whitney_u(&s, &s).unwrap().p_two_sided, 1.0);
        assert_eq!(
            mann_whitney_u(&[4.0, 4.0], &[4.0]).unwrap().p_two_sided,
            1.0
        );
        assert_eq!(mann_whitney_u(&[], &s), Err(StatsError::EmptySample));
    }

    // Reference values from scipy.stats.mannwhitneyu(method="asymptotic",
    // use_continuity=True) and scipy.stats.pearsonr.
    #[test]
    fn p_values_match_reference() {
        let mw = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(
            (mw.p_two_sided - 0.080_855_598_370_052_24).abs() < 1e-9,
            "{}",
            mw.p_two_sided
        );
        let tied = mann_whitney_u(
            &[12.0, 14.0, 14.0, 10.0, 16.0],
            &[16.0, 18.0, 14.0, 20.0, 19.0, 17.0],
        )
        .unwrap();
        assert_eq!(tied.u, 2.5);
        assert!(
            (tied.p_two_sided - 0.026_676_487_929_357_96).abs() < 1e-9,
            "{}",
            tied.p_two_sided
        );
        let c = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.p_two_sided - 0.2).abs() < 1e-9, "{}", c.p_two_sided);
    }

    #[test]
    fn a12_cases() {
        let (lo, hi) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
        assert_eq!(vargha_delaney_a12(&lo, &lo).unwrap(), 0.5);
        assert_eq!(vargha_delaney_a12(&lo, &hi).unwrap(), 0.0);
        assert_eq!(vargha_delaney_a12(&hi, &lo).unwrap(), 1.0);
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &up).unwrap().r - 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &down).unwrap().r + 1.0).abs() < 1e-12);
        assert!(
            (pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])
                .unwrap()
                .r
                - 0.8)
                .abs()
                < 1e-12
        );
        assert_eq!(pearson_r(&x, &[1.0; 5]), Err(StatsError::ZeroVariance));
        assert_eq!(
            pearson_r(&x[..2], &x[..2]),
            Err(StatsError::TooFewObservations(2))
        );
    }
}

//! Rank-based comparison of classifiers over many datasets: the Friedman
//! test with its F correction, the Nemenyi critical difference and the
//! Wilcoxon signed-rank test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ranking::{average_ranks_ascending, nearly_equal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub ff: f64,
    /// Degrees of freedom of `chi2`, `p - 1`.
    pub df1: usize,
    /// Degrees of freedom of `ff`, `(p - 1, (p - 1)(D - 1))`.
    pub df2_pair: (usize, usize),
    pub datasets: usize,
    pub models: usize,
}

impl FriedmanResult {
    /// Null hypothesis of equivalent models rejected when `ff` exceeds the
    /// caller's F critical value for `df2_pair`.
    pub fn rejects(&self, f_critical: f64) -> bool {
        self.ff > f_critical
    }
}

/// Friedman statistic from average ranks `r_k` over `datasets` datasets:
/// `chi2 = 12D / (p(p+1)) * (sum r_k^2 - p(p+1)^2 / 4)` and
/// `ff = (D-1) chi2 / (D(p-1) - chi2)`.
pub fn friedman(avg_ranks: &[f64], datasets: usize) -> Result<FriedmanResult> {
    let p = avg_ranks.len();
    if p < 2 || datasets < 2 {
        return Err(Error::InvalidData(format!(
            "Friedman test needs at least 2 models and 2 datasets, got {p} and {datasets}"
        )));
    }
    let (pf, d) = (p as f64, datasets as f64);
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let chi2 = 12.0 * d / (pf * (pf + 1.0)) * (sum_sq - pf * (pf + 1.0).powi(2) / 4.0);
    let denom = d * (pf - 1.0) - chi2;
    if denom <= 0.0 {
        return Err(Error::InvalidData(format!(
            "F_F undefined: D(p-1) = {} does not exceed chi2 = {chi2}",
            d * (pf - 1.0)
        )));
    }
    Ok(FriedmanResult {
        chi2,
        ff: (d - 1.0) * chi2 / denom,
        df1: p - 1,
        df2_pair: (p - 1, (p - 1) * (datasets - 1)),
        datasets,
        models: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NemenyiParams {
    pub q_alpha: f64,
    pub alpha: f64,
}

/// Two-tailed Nemenyi critical values `q_0.05` (studentized range over
/// sqrt 2) for 2..=20 models.
const Q_ALPHA_005: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];

impl NemenyiParams {
    /// Built-in `alpha = 0.05` value for `models` models, if tabulated.
    pub fn alpha_005(models: usize) -> Option<Self> {
        models
            .checked_sub(2)
            .and_then(|i| Q_ALPHA_005.get(i))
            .map(|&q_alpha| Self { q_alpha, alpha: 0.05 })
    }
}

/// `c = q_alpha * sqrt(p(p+1) / (6D))`.
pub fn nemenyi_cd(params: NemenyiParams, models: usize, datasets: usize) -> Result<f64> {
    if models < 2 || datasets < 1 {
        return Err(Error::InvalidData(format!(
            "critical difference needs p >= 2 and D >= 1, got p = {models}, D = {datasets}"
        )));
    }
    if params.q_alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!("q_alpha must be positive, got {}", params.q_alpha)));
    }
    let (p, d) = (models as f64, datasets as f64);
    Ok(params.q_alpha * (p * (p + 1.0) / (6.0 * d)).sqrt())
}

/// Whether each model's average rank differs from the reference model's by
/// strictly more than `cd`.
pub fn nemenyi_table(avg_ranks: &[f64], reference: usize, cd: f64) -> Result<Vec<bool>> {
    if reference >= avg_ranks.len() {
        return Err(Error::InvalidConfig(format!(
            "reference index {reference} out of range for {} models",
            avg_ranks.len()
        )));
    }
    if cd <= 0.0 {
        return Err(Error::InvalidConfig(format!("critical difference must be positive, got {cd}")));
    }
    let base = avg_ranks[reference];
    Ok(avg_ranks.iter().map(|r| (r - base).abs() > cd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    pub r_plus: f64,
    pub r_minus: f64,
    pub n_effective: usize,
    pub z: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

impl WilcoxonResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Wilcoxon signed-rank test on the paired differences `a - b`.
///
/// Zero differences are dropped and tied magnitudes share average ranks.
/// `z = (min(R+, R-) - n(n+1)/4) / sqrt(n(n+1)(2n+1)/24)` without tie or
/// continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !nearly_equal(**x, **y))
        .map(|(x, y)| x - y)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InvalidData(format!(
            "Wilcoxon test needs at least 5 nonzero differences, got {n}"
        )));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks_ascending(&magnitudes);
    let (mut r_plus, mut r_minus) = (0.0, 0.0);
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > 0.0 {
            r_plus += r;
        } else {
            r_minus += r;
        }
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
    let z = (r_plus.min(r_minus) - mean) / sd;
    let p_value = (2.0 * Normal::standard().cdf(z)).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(WilcoxonResult {
        r_plus,
        r_minus,
        n_effective: n,
        z,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TABLE1_RANKS: [f64; 10] = [8.0, 8.73, 5.27, 6.12, 6.62, 4.48, 5.05, 5.0, 3.22, 2.52];

    #[test]
    fn friedman_binary_table() {
        let f = friedman(&TABLE1_RANKS, 30).unwrap();
        assert_abs_diff_eq!(f.chi2, 111.4570, epsilon = 0.01);
        assert_abs_diff_eq!(f.ff, 20.3872, epsilon = 0.01);
        assert_eq!(f.df1, 9);
        assert_eq!(f.df2_pair, (9, 261));
        assert!(f.rejects(1.9158));
    }

    #[test]
    fn friedman_multiclass_table() {
        let f = friedman(&[6.26, 7.35, 4.38, 5.53, 5.29, 4.59, 5.85, 2.88, 2.85], 17).unwrap();
        assert_abs_diff_eq!(f.chi2, 40.0452, epsilon = 0.01);
        assert_abs_diff_eq!(f.ff, 6.6773, epsilon = 0.01);
        assert_eq!(f.df2_pair, (8, 128));
    }

    #[test]
    fn friedman_no_disagreement() {
        let f = friedman(&[2.5; 4], 10).unwrap();
        assert_abs_diff_eq!(f.chi2, 0.0, epsilon = 1e-12);
        assert!(friedman(&[1.0], 5).is_err());
        // perfect, unanimous ordering of 2 models over 2 datasets: chi2 = D(p-1)
        assert!(friedman(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn nemenyi_examples() {
        let p = NemenyiParams { q_alpha: 3.164, alpha: 0.05 };
        assert_abs_diff_eq!(nemenyi_cd(p, 10, 30).unwrap(), 2.4734, epsilon = 0.0005);
        let p = NemenyiParams::alpha_005(7).unwrap();
        assert_eq!(p.q_alpha, 2.949);
        assert_abs_diff_eq!(nemenyi_cd(p, 7, 34).unwrap(), 1.5451, epsilon = 0.001);
        let p = NemenyiParams { q_alpha: 1.0, alpha: 0.05 };
        assert_abs_diff_eq!(nemenyi_cd(p, 2, 6).unwrap(), (1.0f64 / 6.0).sqrt(), epsilon = 1e-12);
        assert!(NemenyiParams::alpha_005(1).is_none());
        assert!(NemenyiParams::alpha_005(21).is_none());
        assert_eq!(NemenyiParams::alpha_005(10).unwrap().q_alpha, 3.164);
    }

    #[test]
    fn nemenyi_flags() {
        let flags = nemenyi_table(&TABLE1_RANKS, 9, 2.4734).unwrap();
        assert_eq!(
            flags,
            vec![true, true, true, true, true, false, true, true, false, false]
        );
        assert_eq!(nemenyi_table(&[1.0, 3.0], 0, 2.0).unwrap(), vec![false, false]);
        assert!(nemenyi_table(&[1.0], 3, 1.0).is_err());
    }

    #[test]
    fn wilcoxon_all_positive() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0];
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!((w.r_plus, w.r_minus), (15.0, 0.0));
        assert!(wilcoxon_signed_rank(&a, &a).is_err());
        assert!(wilcoxon_signed_rank(&a, &b[..4]).is_err());
    }

    #[test]
    fn wilcoxon_extreme_n30() {
        let a: Vec<f64> = (1..=30).map(|i| i as f64 + 100.0).collect();
        let b = vec![100.0; 30];
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!((w.r_plus, w.r_minus), (465.0, 0.0));
        assert_abs_diff_eq!(w.z, -4.78, epsilon = 0.01);
        assert!(w.p_value < 1e-5);
    }

    proptest! {
        #[test]
        fn friedman_permutation_invariant(ranks in prop::collection::vec(1.0f64..5.0, 2..8), rot in 0usize..8) {
            let p = ranks.len();
            let mut rotated = ranks.clone();
            rotated.rotate_left(rot % p);
            let d = 50;
            if let (Ok(a), Ok(b)) = (friedman(&ranks, d), friedman(&rotated, d)) {
                prop_assert!((a.chi2 - b.chi2).abs() < 1e-9);
                prop_assert!((a.ff - b.ff).abs() < 1e-9);
            }
        }

        #[test]
        fn wilcoxon_antisymmetric(
            a in prop::collection::vec(0.0f64..100.0, 6..40),
            shift in prop::collection::vec(-5.0f64..5.0, 40),
        ) {
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s.round()).collect();
            if let Ok(ab) = wilcoxon_signed_rank(&a, &b) {
                let ba = wilcoxon_signed_rank(&b, &a).unwrap();
                prop_assert_eq!(ab.r_plus, ba.r_minus);
                prop_assert_eq!(ab.r_minus, ba.r_plus);
                prop_assert!((ab.p_value - ba.p_value).abs() < 1e-15);
                let n = ab.n_effective as f64;
                prop_assert_eq!(ab.r_plus + ab.r_minus, n * (n + 1.0) / 2.0);
                prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            }
        }

        #[test]
        fn cd_monotone(q in 0.5f64..4.0, p in 2usize..20, d in 1usize..100) {
            let params = NemenyiParams { q_alpha: q, alpha: 0.05 };
            let base = nemenyi_cd(params, p, d).unwrap();
            prop_assert!(nemenyi_cd(params, p, d + 1).unwrap() < base);
            prop_assert!(nemenyi_cd(params, p + 1, d).unwrap() > base);
        }
    }
}

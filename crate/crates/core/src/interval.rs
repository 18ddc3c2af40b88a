//! Confidence intervals, Bonferroni regions and the confidence-level map.
//!
//! For a reference variance `v_ref`, an interval built from a candidate
//! variance `x` has true coverage
//!
//! ```text
//! π(x) = 2 Φ(z_{1−α/2} · sqrt(x / v_ref)) − 1
//! ```
//!
//! so `π(v_ref) = 1 − α`, and the accuracy of a variance estimate can be
//! measured in confidence-level units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub component_index: usize,
    pub lower: f64,
    pub upper: f64,
    pub nominal_level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, t: f64) -> bool {
        self.lower <= t && t <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Product of componentwise intervals with Bonferroni-split significance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRegion {
    intervals: Vec<ConfidenceInterval>,
    total_alpha: f64,
}

impl JointRegion {
    /// Builds a `1 − alpha_total` region from estimates and variance
    /// estimates (per-sample scale, i.e. `n · var`), splitting `alpha_total`
    /// evenly over the components.
    pub fn bonferroni(t_hat: &[f64], var_est: &[f64], n: usize, alpha_total: f64) -> Result<Self> {
        if t_hat.len() != var_est.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} estimates vs {} variances",
                t_hat.len(),
                var_est.len()
            )));
        }
        let alphas = bonferroni_split(alpha_total, t_hat.len())?;
        let intervals = t_hat
            .iter()
            .zip(var_est)
            .zip(&alphas)
            .enumerate()
            .map(|(j, ((&t, &v), &a))| {
                confidence_interval(t, v, n, a).map(|ci| ConfidenceInterval { component_index: j, ..ci })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { intervals, total_alpha: alpha_total })
    }

    pub fn intervals(&self) -> &[ConfidenceInterval] {
        &self.intervals
    }

    pub fn total_alpha(&self) -> f64 {
        self.total_alpha
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.intervals.len() && self.intervals.iter().zip(theta).all(|(ci, &t)| ci.contains(t))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha = {alpha} is not in (0, 1)")))
    }
}

/// True coverage of an interval built from variance `x` when the actual
/// variance is `v_ref`.
pub fn confidence_level(x: f64, v_ref: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("variance candidate {x} is not positive")));
    }
    if !(v_ref > 0.0) || !v_ref.is_finite() {
        return Err(Error::Domain(format!("reference variance {v_ref} is not positive")));
    }
    let z = normal::two_sided_critical(alpha);
    let arg = z * (x / v_ref).sqrt();
    // 2Φ(a) − 1 = 1 − 2(1 − Φ(a)), computed from the upper tail.
    Ok(1.0 - 2.0 * normal::sf(arg))
}

/// `[t_hat ± z_{1−α/2} · sqrt(var_est / n)]`.
pub fn confidence_interval(t_hat: f64, var_est: f64, n: usize, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if !(var_est > 0.0) || !var_est.is_finite() {
        return Err(Error::Domain(format!("variance estimate {var_est} is not positive")));
    }
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let half = normal::two_sided_critical(alpha) * (var_est / n as f64).sqrt();
    Ok(ConfidenceInterval {
        component_index: 0,
        lower: t_hat - half,
        upper: t_hat + half,
        nominal_level: 1.0 - alpha,
    })
}

/// Uniform split `α_j = α / p`.
pub fn bonferroni_split(alpha_total: f64, p: usize) -> Result<Vec<f64>> {
    check_alpha(alpha_total)?;
    if p == 0 {
        return Err(Error::Domain("p must be at least 1".into()));
    }
    Ok(vec![alpha_total / p as f64; p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn level_at_reference_is_nominal() {
        assert!((confidence_level(2.5, 2.5, 0.05).unwrap() - 0.95).abs() < 1e-15);
        for &alpha in &[0.01, 0.05, 0.10] {
            let got = confidence_level(1.7, 1.7, alpha).unwrap();
            assert!((got - (1.0 - alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn level_near_zero_variance() {
        let got = confidence_level(1e-300, 1.0, 0.05).unwrap();
        assert!(got >= 0.0 && got < 1e-140);
    }

    #[test]
    fn level_at_four_times_reference() {
        // 2Φ(2·z_{0.975}) − 1 from mpmath.
        let got = confidence_level(4.0, 1.0, 0.05).unwrap();
        assert!((got - 0.99991142456167859612).abs() < 1e-14);
    }

    #[test]
    fn level_domain_errors() {
        assert!(confidence_level(0.0, 1.0, 0.05).is_err());
        assert!(confidence_level(1.0, -1.0, 0.05).is_err());
        assert!(confidence_level(1.0, 1.0, 1.0).is_err());
        assert!(confidence_level(f64::NAN, 1.0, 0.05).is_err());
    }

    #[test]
    fn interval_95_unit_variance() {
        let ci = confidence_interval(0.0, 1.0, 100, 0.05).unwrap();
        // z_{0.975}/10 from mpmath.
        assert!((ci.upper - 0.19599639845400542355).abs() < 1e-15);
        assert!((ci.lower + 0.19599639845400542355).abs() < 1e-15);
        assert!((ci.nominal_level - 0.95).abs() < 1e-15);
    }

    #[test]
    fn interval_shrinks_with_variance() {
        let ci = confidence_interval(5.0, 1e-300, 10, 0.05).unwrap();
        assert!(ci.half_width() < 1e-140);
        assert!(ci.contains(5.0));
        assert!(confidence_interval(5.0, 0.0, 10, 0.05).is_err());
    }

    #[test]
    fn smaller_alpha_gives_wider_interval() {
        let a = confidence_interval(1.0, 2.0, 30, 0.05).unwrap();
        let b = confidence_interval(1.0, 2.0, 30, 0.01).unwrap();
        assert!(b.lower < a.lower && b.upper > a.upper);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_split(0.05, 5).unwrap(), vec![0.01; 5]);
        assert_eq!(bonferroni_split(0.05, 1).unwrap(), vec![0.05]);
        let s = bonferroni_split(0.10, 3).unwrap();
        assert!((s.iter().sum::<f64>() - 0.10).abs() < 1e-15);
        assert!(bonferroni_split(0.05, 0).is_err());
    }

    #[test]
    fn joint_region_alpha_bookkeeping() {
        let r = JointRegion::bonferroni(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], 50, 0.05).unwrap();
        let total: f64 = r.intervals().iter().map(|ci| 1.0 - ci.nominal_level).sum();
        assert!((total - r.total_alpha()).abs() < 1e-12);
        assert!(r.contains(&[0.0, 1.0, 2.0]));
        assert!(!r.contains(&[10.0, 1.0, 2.0]));
        assert_eq!(r.intervals()[2].component_index, 2);
    }

    proptest! {
        #[test]
        fn level_strictly_increasing(a in 1e-3f64..50.0, b in 1e-3f64..50.0, v in 0.1f64..10.0) {
            prop_assume!((a - b).abs() > 1e-9 * a.max(b));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let pl = confidence_level(lo, v, 0.05).unwrap();
            let ph = confidence_level(hi, v, 0.05).unwrap();
            prop_assert!(pl < ph || ph == 1.0);
            prop_assert!(pl > 0.0 && ph <= 1.0);
        }

        #[test]
        fn interval_level_duality(t in -10.0f64..10.0, v in 1e-3f64..100.0, alpha in 0.001f64..0.5) {
            let ci = confidence_interval(t, v, 7, alpha).unwrap();
            let level = confidence_level(v, v, alpha).unwrap();
            prop_assert!((ci.nominal_level - level).abs() < 1e-12);
        }
    }
}

//! Twice-integrated bath correlation function `Q(t) = Q'(t) + i Q''(t)` for
//! an Ohmic spectral density `G(omega) = 2 alpha omega e^(-omega/omega_c)`.
//!
//! Three interchangeable evaluation strategies are provided behind the
//! [`Correlation`] trait and selected by name through [`correlation`] or by
//! the [`CorrelationMethod`] enum:
//!
//! * `scaling` — the scaling-limit closed form, accurate for
//!   `omega_c >> max(theta, delta)`;
//! * `exact` — the finite-cutoff expression written with log-gamma
//!   functions of `theta/omega_c`; satisfies detailed balance identically;
//! * `long-time` — the pure power-law/exponential asymptote (`alpha < 1/2`
//!   only), whose kernel transforms have closed forms.

use crate::error::{Error, Result};
use crate::params::BathParams;
use crate::specfun::{ln_gamma, ln_sinh_over_x};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Named selector for a [`Correlation`] strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationMethod {
    ScalingLimit,
    Exact,
    LongTime,
}

impl CorrelationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::ScalingLimit => "scaling",
            CorrelationMethod::Exact => "exact",
            CorrelationMethod::LongTime => "long-time",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "scaling" | "scaling-limit" => Ok(CorrelationMethod::ScalingLimit),
            "exact" => Ok(CorrelationMethod::Exact),
            "long-time" | "longtime" => Ok(CorrelationMethod::LongTime),
            _ => Err(Error::UnknownStrategy {
                registry: "correlation",
                name: name.to_string(),
                known: "scaling, exact, long-time".to_string(),
            }),
        }
    }

    /// Strategy-specific parameter restrictions.
    pub fn validate(self, bath: &BathParams) -> Result<()> {
        if self == CorrelationMethod::LongTime && bath.alpha >= 0.5 {
            return Err(Error::Domain {
                what: "long-time correlation",
                reason: format!(
                    "kernel envelope t^(-2 alpha) is non-integrable at short \
                     times for alpha = {} >= 1/2",
                    bath.alpha
                ),
            });
        }
        Ok(())
    }

    pub fn get(self) -> &'static dyn Correlation {
        match self {
            CorrelationMethod::ScalingLimit => &ScalingLimit,
            CorrelationMethod::Exact => &Exact,
            CorrelationMethod::LongTime => &LongTime,
        }
    }
}

/// Look a correlation strategy up by its registry name.
pub fn correlation(name: &str) -> Result<&'static dyn Correlation> {
    Ok(CorrelationMethod::from_name(name)?.get())
}

/// A strategy computing `Q(t)` for t >= 0.
pub trait Correlation: Send + Sync {
    fn name(&self) -> &'static str;

    /// `(Q'(t), Q''(t))`. `Q(0) = 0` exactly for every method.
    fn q(&self, t: f64, bath: &BathParams) -> (f64, f64);

    /// Solve `Q'(t_cut) = q_target` by bisection, capped at `t_cap`.
    /// Returns `t_cap` when `Q'` stays below the target.
    fn time_for_q(&self, q_target: f64, t_cap: f64, bath: &BathParams) -> f64 {
        if self.q(t_cap, bath).0 <= q_target {
            return t_cap;
        }
        let (mut lo, mut hi) = (0.0_f64, t_cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.q(mid, bath).0 > q_target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * t_cap {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Scaling-limit form:
/// `Q' = 2 alpha ln( sqrt(1 + (omega_c t)^2) * sinh(pi theta t)/(pi theta t) )`,
/// `Q'' = 2 alpha arctan(omega_c t)`.
pub struct ScalingLimit;

impl Correlation for ScalingLimit {
    fn name(&self) -> &'static str {
        "scaling"
    }

    fn q(&self, t: f64, bath: &BathParams) -> (f64, f64) {
        if t == 0.0 {
            return (0.0, 0.0);
        }
        let x = bath.omega_c * t;
        let u = PI * bath.theta * t;
        let qp = 2.0 * bath.alpha * (0.5 * x.mul_add(x, 1.0).ln() + ln_sinh_over_x(u));
        let qpp = 2.0 * bath.alpha * x.atan();
        (qp, qpp)
    }
}

/// Finite-cutoff form with `r = theta / omega_c`:
/// `Q' = alpha ln(1 + (omega_c t)^2)
///       + 4 alpha [ Re ln G(1 + r) - Re ln G(1 + r + i theta t) ]`,
/// same `Q''` as the scaling limit.
pub struct Exact;

impl Correlation for Exact {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn q(&self, t: f64, bath: &BathParams) -> (f64, f64) {
        if t == 0.0 {
            return (0.0, 0.0);
        }
        let x = bath.omega_c * t;
        let r = bath.theta / bath.omega_c;
        let g0 = ln_gamma(Complex64::new(1.0 + r, 0.0)).re;
        let gt = ln_gamma(Complex64::new(1.0 + r, bath.theta * t)).re;
        let qp = bath.alpha * x.mul_add(x, 1.0).ln() + 4.0 * bath.alpha * (g0 - gt);
        let qpp = 2.0 * bath.alpha * x.atan();
        (qp, qpp)
    }
}

/// Long-time asymptote (`alpha < 1/2`):
/// `Q' = 2 alpha ln( (omega_c / pi theta) sinh(pi theta t) )`, `Q'' = pi alpha`.
pub struct LongTime;

impl Correlation for LongTime {
    fn name(&self) -> &'static str {
        "long-time"
    }

    fn q(&self, t: f64, bath: &BathParams) -> (f64, f64) {
        if t == 0.0 {
            return (0.0, 0.0);
        }
        let u = PI * bath.theta * t;
        // ln sinh(u) without overflow: ln(u) + ln(sinh(u)/u).
        let ln_sinh = u.ln() + ln_sinh_over_x(u);
        let qp = 2.0 * bath.alpha * ((bath.omega_c / (PI * bath.theta)).ln() + ln_sinh);
        (qp, PI * bath.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bath(alpha: f64, theta: f64, omega_c: f64) -> BathParams {
        BathParams {
            alpha,
            theta,
            omega_c,
            method: CorrelationMethod::ScalingLimit,
        }
    }

    // Reference values computed with an independent scipy implementation.
    #[test]
    fn scaling_reference_values() {
        let b = bath(0.2, 0.5, 10.0);
        let (qp, qpp) = ScalingLimit.q(1.0, &b);
        assert_relative_eq!(qp, 1.07578050271768, max_relative = 1e-12);
        assert_relative_eq!(qpp, 0.588451069721494, max_relative = 1e-12);
        let (qp, qpp) = ScalingLimit.q(10.0, &b);
        assert_relative_eq!(qp, 6.7463473890375, max_relative = 1e-12);
        assert_relative_eq!(qpp, 0.624318664043293, max_relative = 1e-12);
        let b = bath(0.007, 0.46418, 16.0891);
        let (qp, _) = ScalingLimit.q(5.0, &b);
        assert_relative_eq!(qp, 0.125988058141642, max_relative = 1e-12);
        let b = bath(0.8, 0.234, 8.125);
        let (qp, qpp) = ScalingLimit.q(2.0, &b);
        assert_relative_eq!(qp, 5.003797291313, max_relative = 1e-12);
        assert_relative_eq!(qpp, 2.41493659345941, max_relative = 1e-12);
    }

    #[test]
    fn exact_reference_values() {
        let b = bath(0.2, 0.5, 10.0);
        assert_relative_eq!(Exact.q(1.0, &b).0, 1.06639483864676, max_relative = 1e-11);
        assert_relative_eq!(Exact.q(10.0, &b).0, 6.66033288512176, max_relative = 1e-11);
        let b = bath(0.007, 0.46418, 16.0891);
        assert_relative_eq!(Exact.q(5.0, &b).0, 0.124846676206497, max_relative = 1e-10);
        let b = bath(0.8, 0.234, 8.125);
        assert_relative_eq!(Exact.q(2.0, &b).0, 4.98399091264261, max_relative = 1e-11);
    }

    #[test]
    fn exact_vs_scaling_converge_at_large_cutoff() {
        // The two forms differ at O(theta/omega_c); at the reference point
        // (alpha=0.2, theta=0.5, omega_c=65) the measured maximum relative
        // difference of Q' over t in (0, 20] is 2.14e-3.
        let b = bath(0.2, 0.5, 65.0);
        let mut worst: f64 = 0.0;
        for i in 1..=2000 {
            let t = 20.0 * i as f64 / 2000.0;
            let qs = ScalingLimit.q(t, &b).0;
            let qe = Exact.q(t, &b).0;
            worst = worst.max((qs - qe).abs() / qe.abs());
        }
        assert!(worst < 3.0e-3, "worst rel diff {worst}");
        assert!(worst > 1.0e-3, "difference unexpectedly small: {worst}");
    }

    #[test]
    fn long_time_matches_scaling_at_late_times() {
        // For omega_c t >> 1 the scaling form approaches the long-time one.
        let b = bath(0.3, 0.4, 50.0);
        let t = 5.0;
        let (qs, _) = ScalingLimit.q(t, &b);
        let (ql, qlpp) = LongTime.q(t, &b);
        assert_relative_eq!(qs, ql, max_relative = 1e-4);
        assert_relative_eq!(qlpp, PI * 0.3, max_relative = 1e-15);
    }

    #[test]
    fn q_vanishes_at_zero_for_all_methods() {
        let b = bath(0.3, 0.4, 20.0);
        for m in [
            CorrelationMethod::ScalingLimit,
            CorrelationMethod::Exact,
            CorrelationMethod::LongTime,
        ] {
            assert_eq!(m.get().q(0.0, &b), (0.0, 0.0));
        }
    }

    #[test]
    fn long_time_rejects_strong_coupling() {
        let b = bath(0.6, 0.5, 10.0);
        assert!(CorrelationMethod::LongTime.validate(&b).is_err());
        assert!(CorrelationMethod::ScalingLimit.validate(&b).is_ok());
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(correlation("scaling").unwrap().name(), "scaling");
        assert_eq!(correlation("exact").unwrap().name(), "exact");
        assert_eq!(correlation("long-time").unwrap().name(), "long-time");
        assert!(correlation("nope").is_err());
    }

    #[test]
    fn time_for_q_bisects() {
        let b = bath(0.2, 0.5, 10.0);
        let t34 = ScalingLimit.time_for_q(34.0, 1e4, &b);
        let (qp, _) = ScalingLimit.q(t34, &b);
        assert_relative_eq!(qp, 34.0, max_relative = 1e-6);
        // Cap honored when unreachable.
        assert_eq!(ScalingLimit.time_for_q(1e9, 123.0, &b), 123.0);
    }

    #[test]
    fn overflow_safety_at_huge_times() {
        let b = bath(0.2, 2.0, 100.0);
        let (qp, qpp) = ScalingLimit.q(1e6, &b);
        assert!(qp.is_finite() && qp > 1e5);
        assert!(qpp.is_finite());
        let (qp, _) = LongTime.q(1e6, &b);
        assert!(qp.is_finite());
        let (qp, _) = Exact.q(1e6, &b);
        assert!(qp.is_finite());
    }
}

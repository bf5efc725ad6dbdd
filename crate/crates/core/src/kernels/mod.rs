//! NIBA kernel evaluations.
//!
//! The generalized master equation and the linear response formulas consume
//! a handful of kernel transforms:
//!
//! * `K+(0)` — total relaxation rate `gamma_d`;
//! * `K-(0)` — asymmetry transform fixing the stationary population
//!   `P0 = K-(0) / K+(0)`;
//! * `K+(i omega)` — one-sided Laplace transform on the imaginary axis;
//! * `H+(omega)`, `H-(omega)` — probe-weighted transforms entering the
//!   susceptibility numerator.
//!
//! Two interchangeable backends provide them behind the [`Kernels`] trait:
//! [`table::NumericKernels`] (panel quadrature over a tabulated kernel, any
//! parameters) and [`analytic::AnalyticKernels`] (closed forms in terms of
//! gamma functions, valid in the high-cutoff regime). Select by name via
//! [`build`].

pub mod analytic;
pub mod table;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::specfun::{bessel_j, gamma_real, ln_gamma_real};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

pub use analytic::AnalyticKernels;
pub use table::{NumericKernels, QuadPolicy};

/// Golden-rule forward/backward rates between the wells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub forward: f64,
    pub backward: f64,
}

impl RatePair {
    /// Total relaxation rate `gamma_d = forward + backward = K+(0)`.
    pub fn gamma_d(&self) -> f64 {
        self.forward + self.backward
    }

    /// Difference `forward - backward = K-(0)`.
    pub fn difference(&self) -> f64 {
        self.forward - self.backward
    }

    /// Stationary population difference `P0`.
    pub fn p0(&self) -> f64 {
        self.difference() / self.gamma_d()
    }
}

/// Effective bias read off the rate asymmetry,
/// `eps_eff = theta ln(forward / backward)`.
///
/// In equilibrium (no drive) detailed balance makes `eps_eff = eps0`; under
/// a strong drive it becomes a genuinely nonequilibrium quantity and can
/// even change sign against `eps0` (population inversion).
pub fn eff_bias(rates: RatePair, theta: f64) -> Result<f64> {
    if rates.forward <= 0.0 || rates.backward <= 0.0 {
        return Err(Error::Domain {
            what: "eff_bias",
            reason: format!(
                "rates must be positive (forward = {}, backward = {})",
                rates.forward, rates.backward
            ),
        });
    }
    Ok(theta * (rates.forward / rates.backward).ln())
}

/// Common interface to the kernel transforms at the model's bias point.
pub trait Kernels: Send + Sync {
    /// Registry name of the backend ("numeric" or "analytic").
    fn backend(&self) -> &'static str;

    fn params(&self) -> &ModelParams;

    /// `K+(0)`: total relaxation rate.
    fn k_plus0(&self) -> Result<f64>;

    /// `K-(0)`: bias transform.
    fn k_minus0(&self) -> Result<f64>;

    /// `K+(lambda = i omega)`.
    fn k_plus_iw(&self, omega: f64) -> Result<Complex64>;

    /// `H+(omega)`: probe transform of the `h-` kernel.
    fn h_plus(&self, omega: f64) -> Result<Complex64>;

    /// `H-(omega)`: probe transform of the `h+` kernel.
    fn h_minus(&self, omega: f64) -> Result<Complex64>;

    /// Same transforms at a shifted static bias (used for derivatives and
    /// drive-harmonic sums); implementations share their tabulated state.
    fn at_bias(&self, eps0: f64) -> Result<Box<dyn Kernels>>;

    fn gamma_d(&self) -> Result<f64> {
        self.k_plus0()
    }

    /// Stationary population `P0 = K-(0)/K+(0)`.
    fn p0(&self) -> Result<f64> {
        Ok(self.k_minus0()? / self.k_plus0()?)
    }

    /// Forward/backward rates, `k_f,b = (K+(0) +- K-(0)) / 2`.
    fn rates(&self) -> Result<RatePair> {
        let kp = self.k_plus0()?;
        let km = self.k_minus0()?;
        Ok(RatePair {
            forward: 0.5 * (kp + km),
            backward: 0.5 * (kp - km),
        })
    }

    /// Effective bias `theta ln(k_f / k_b)` at this point.
    fn eff_bias(&self) -> Result<f64> {
        eff_bias(self.rates()?, self.params().bath.theta)
    }

    /// `d eps_eff / d eps0` by a centered difference; the step is scaled to
    /// the local bias/temperature.
    fn eff_bias_slope(&self) -> Result<f64> {
        let p = self.params();
        let scale = p.bath.theta.max(p.qubit.eps0.abs());
        let h = 1e-4 * scale.max(1e-8);
        let up = self.at_bias(p.qubit.eps0 + h)?.eff_bias()?;
        let dn = self.at_bias(p.qubit.eps0 - h)?.eff_bias()?;
        Ok((up - dn) / (2.0 * h))
    }
}

/// Build a kernel backend by registry name: `"numeric"` or `"analytic"`.
pub fn build(
    name: &str,
    params: &ModelParams,
    policy: &QuadPolicy,
    freq_scale: f64,
) -> Result<Arc<dyn Kernels>> {
    match name {
        "numeric" => Ok(Arc::new(NumericKernels::build(params, policy, freq_scale)?)),
        "analytic" => Ok(Arc::new(AnalyticKernels::new(params)?)),
        _ => Err(Error::UnknownStrategy {
            registry: "kernels",
            name: name.to_string(),
            known: "numeric, analytic".to_string(),
        }),
    }
}

/// Drive-dressed tunneling amplitude at the n-th resonance,
/// `delta_eff = delta |J_n(eps_d / omega_d)|`.
pub fn dressed_delta(params: &ModelParams) -> Result<(f64, i32)> {
    let d = &params.drive;
    if d.eps_d == 0.0 {
        if params.qubit.eps0 != 0.0 {
            return Err(Error::Domain {
                what: "dressed_delta",
                reason: "undriven pole analysis requires eps0 = 0".to_string(),
            });
        }
        return Ok((params.qubit.delta, 0));
    }
    let n = (params.qubit.eps0 / d.omega_d).round();
    let miss = (params.qubit.eps0 - n * d.omega_d).abs();
    if miss > 1e-9 * d.omega_d.max(1.0) {
        return Err(Error::Domain {
            what: "dressed_delta",
            reason: format!(
                "driven pole analysis requires resonance eps0 = n omega_d; \
                 eps0 = {} is {:.3e} away from the nearest harmonic",
                params.qubit.eps0, miss
            ),
        });
    }
    let z = d.eps_d / d.omega_d;
    Ok((params.qubit.delta * bessel_j(n as i32, z).abs(), n as i32))
}

/// Pole pair of the coherent-regime response: roots of
/// `kappa lambda^2 + alpha lambda + c = 0` with `kappa = 1/(2 pi theta)` and
/// `c = delta_eff^2 kappa^(1-2 alpha) omega_c^(-2 alpha)
///      [pi / (2 sin(pi alpha) Gamma(2 alpha))] [Gamma(1+alpha)/Gamma(1-alpha)]`.
///
/// This is the analytic continuation of `i omega + K+(i omega) = 0` with the
/// kernel's simple pole in the gamma-function form kept explicit, so the
/// quadratic stays accurate deep in the coherent regime where a Taylor
/// expansion of the transform would not reach the pole. Valid at zero bias
/// (undriven) or at a drive resonance `eps0 = n omega_d`, where the
/// tunneling is dressed to `delta |J_n(eps_d/omega_d)|`.
///
/// Returns the root pair; complex-conjugate roots `-gamma +- i Omega` signal
/// damped oscillations, two real negative roots signal incoherent decay. In
/// the weak-coupling limit the pair tends to `+- i delta` exactly.
pub fn pole_quadratic(params: &ModelParams) -> Result<(Complex64, Complex64)> {
    params.validate()?;
    let (delta_eff, _) = dressed_delta(params)?;
    let b = &params.bath;
    let kappa = 1.0 / (2.0 * PI * b.theta);
    let c = delta_eff
        * delta_eff
        * (quadratic_coefficient_ln(b.alpha) + (1.0 - 2.0 * b.alpha) * kappa.ln()
            - 2.0 * b.alpha * b.omega_c.ln())
        .exp();
    let disc = b.alpha * b.alpha - 4.0 * kappa * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        Ok((
            Complex64::new((-b.alpha + s) / (2.0 * kappa), 0.0),
            Complex64::new((-b.alpha - s) / (2.0 * kappa), 0.0),
        ))
    } else {
        let s = (-disc).sqrt() / (2.0 * kappa);
        let g = -b.alpha / (2.0 * kappa);
        Ok((Complex64::new(g, s), Complex64::new(g, -s)))
    }
}

/// `ln( [pi / (2 sin(pi alpha) Gamma(2 alpha))] [Gamma(1+alpha)/Gamma(1-alpha)] )`,
/// finite on all of (0, 1).
pub(crate) fn quadratic_coefficient_ln(alpha: f64) -> f64 {
    PI.ln() - std::f64::consts::LN_2 - (PI * alpha).sin().ln() - ln_gamma_real(2.0 * alpha)
        + ln_gamma_real(1.0 + alpha)
        - ln_gamma_real(1.0 - alpha)
}

/// `Gamma(1 - 2 alpha) cos(pi alpha)` written pole-free as
/// `pi / (2 sin(pi alpha) Gamma(2 alpha))`; positive on (0, 1).
pub(crate) fn cos_gamma_product(alpha: f64) -> f64 {
    PI / (2.0 * (PI * alpha).sin() * gamma_real(2.0 * alpha))
}

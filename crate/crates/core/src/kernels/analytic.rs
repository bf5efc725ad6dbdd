//! Closed-form kernel backend.
//!
//! In the high-cutoff (scaling) regime the NIBA kernel transforms reduce to
//! gamma-function expressions built from
//!
//! `W(x) = Gamma(alpha + i kappa x) / Gamma(1 - alpha + i kappa x)`,
//! `kappa = 1/(2 pi theta)`,
//!
//! evaluated here in log space so that large biases (`|Gamma|^2` underflows,
//! `cosh/sinh` overflow) stay finite:
//!
//! * `K+(0; x) = pref |Gamma(alpha + i kappa x)|^2 cosh(x / 2 theta)`,
//!   `K-(0; x)` the same with `sinh`, with
//!   `pref = (delta^2/2) kappa^(1-2 alpha) omega_c^(-2 alpha) / Gamma(2 alpha)`.
//!   The ratio is `tanh(x / 2 theta)` identically: detailed balance is exact
//!   in this backend.
//! * `K+(i omega) = N+ [W(omega + eps0) + W(omega - eps0)]`,
//! * `H-(omega) = (N+/2 omega) [W(omega + eps0) - W(omega - eps0) - 2i Im W(eps0)]`,
//! * `H+(omega) = (i N-/2 omega) [W(omega + eps0) + W(omega - eps0) - 2 Re W(eps0)]`,
//!
//! with `N+ = pref' pi / (2 sin(pi alpha) Gamma(2 alpha))` (finite on the
//! whole coupling range) and `N- = pref' pi / (2 cos(pi alpha) Gamma(2 alpha))`
//! (simple pole at `alpha = 1/2`; `H+` stays finite there because the bracket
//! vanishes with it, and the removable point is evaluated by averaging).
//!
//! A cycle-averaged drive folds in as the harmonic sum
//! `sum_n J_n(eps_d/omega_d)^2 f(eps0 + n omega_d)` for every transform.

use super::{cos_gamma_product, Kernels};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::specfun::{bessel_j, gamma_real, ln_cosh, ln_gamma, ln_gamma_real, ln_sinh_abs};
use num_complex::Complex64;
use std::f64::consts::PI;

/// `W(x)` in log-space form:
/// `Re = sin(pi alpha) |Gamma(alpha + iy)|^2 cosh(pi y) / pi`,
/// `Im = -cos(pi alpha) |Gamma(alpha + iy)|^2 sinh(pi y) / pi`, `y = kappa x`.
fn w_fun_at(alpha: f64, kappa: f64, x: f64) -> Complex64 {
    let y = kappa * x;
    let g2 = 2.0 * ln_gamma(Complex64::new(alpha, y)).re;
    let (s, c) = (PI * alpha).sin_cos();
    let re = s * (g2 + ln_cosh(PI * y)).exp() / PI;
    let im = if y == 0.0 {
        0.0
    } else {
        -c * y.signum() * (g2 + ln_sinh_abs(PI * y.abs())).exp() / PI
    };
    Complex64::new(re, im)
}

/// Kernel normalization constants `(N+, N-)`:
/// `N+- = (delta^2/2) kappa^(1-2a) omega_c^(-2a) {cos, sin}(pi a) Gamma(1-2a)`
/// in pole-free form (`N-` keeps its genuine simple pole at `alpha = 1/2`).
pub(crate) fn norm_constants(params: &ModelParams) -> (f64, f64) {
    let a = params.bath.alpha;
    let kappa = 1.0 / (2.0 * PI * params.bath.theta);
    let ln_pref = 2.0 * params.qubit.delta.ln() - std::f64::consts::LN_2
        + (1.0 - 2.0 * a) * kappa.ln()
        - 2.0 * a * params.bath.omega_c.ln();
    let n_plus = ln_pref.exp() * cos_gamma_product(a);
    let n_minus = ln_pref.exp() * PI / (2.0 * (PI * a).cos() * gamma_real(2.0 * a));
    (n_plus, n_minus)
}

/// Gamma-function implementation of [`Kernels`].
#[derive(Clone)]
pub struct AnalyticKernels {
    params: ModelParams,
    kappa: f64,
    /// Squared Bessel weights `J_n(eps_d/omega_d)^2` for the drive harmonics;
    /// empty when the drive is off.
    j_sq: Vec<f64>,
}

impl AnalyticKernels {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let b = &params.bath;
        let kappa = 1.0 / (2.0 * PI * b.theta);
        let j_sq = if params.drive.eps_d != 0.0 {
            let z = params.drive.eps_d / params.drive.omega_d;
            let n_max = z.abs().ceil() as i32 + 20;
            (0..=n_max).map(|n| bessel_j(n, z).powi(2)).collect()
        } else {
            Vec::new()
        };
        Ok(AnalyticKernels {
            params: params.clone(),
            kappa,
            j_sq,
        })
    }

    /// `ln[(delta^2/2) kappa^(1-2a) omega_c^(-2a)]` at coupling `a`.
    fn ln_pref(&self, a: f64) -> f64 {
        let p = &self.params;
        2.0 * p.qubit.delta.ln() - std::f64::consts::LN_2
            + (1.0 - 2.0 * a) * self.kappa.ln()
            - 2.0 * a * p.bath.omega_c.ln()
    }

    fn n_plus(&self) -> f64 {
        self.ln_pref(self.params.bath.alpha).exp() * cos_gamma_product(self.params.bath.alpha)
    }

    fn w(&self, x: f64) -> Complex64 {
        w_fun_at(self.params.bath.alpha, self.kappa, x)
    }

    /// `(K+(0; x), K-(0; x))` at static bias `x`, log-domain.
    fn k_tilde(&self, x: f64) -> (f64, f64) {
        let a = self.params.bath.alpha;
        let y = self.kappa * x;
        let g2 = 2.0 * ln_gamma(Complex64::new(a, y)).re;
        let base = self.ln_pref(a) - ln_gamma_real(2.0 * a) + g2;
        let kp = (base + ln_cosh(PI * y)).exp();
        let km = if y == 0.0 {
            0.0
        } else {
            y.signum() * (base + ln_sinh_abs(PI * y.abs())).exp()
        };
        (kp, km)
    }

    /// Cycle-averaged drive harmonic sum of a real transform.
    fn sum_real(&self, f: impl Fn(f64) -> f64) -> f64 {
        let e0 = self.params.qubit.eps0;
        if self.j_sq.is_empty() {
            return f(e0);
        }
        let wd = self.params.drive.omega_d;
        let mut acc = self.j_sq[0] * f(e0);
        for (n, jsq) in self.j_sq.iter().enumerate().skip(1) {
            let shift = n as f64 * wd;
            acc += jsq * (f(e0 + shift) + f(e0 - shift));
        }
        acc
    }

    fn sum_cplx(&self, f: impl Fn(f64) -> Complex64) -> Complex64 {
        let e0 = self.params.qubit.eps0;
        if self.j_sq.is_empty() {
            return f(e0);
        }
        let wd = self.params.drive.omega_d;
        let mut acc = self.j_sq[0] * f(e0);
        for (n, jsq) in self.j_sq.iter().enumerate().skip(1) {
            let shift = n as f64 * wd;
            acc += *jsq * (f(e0 + shift) + f(e0 - shift));
        }
        acc
    }

    /// `H+` evaluated at coupling `a` (used off `self.params` only to take
    /// the removable `alpha = 1/2` limit by averaging).
    fn h_plus_alpha(&self, a: f64, omega: f64) -> Complex64 {
        let n_minus = self.ln_pref(a).exp() * PI / (2.0 * (PI * a).cos() * gamma_real(2.0 * a));
        let pref = Complex64::new(0.0, n_minus / (2.0 * omega));
        self.sum_cplx(|x| {
            let wa = w_fun_at(a, self.kappa, omega + x);
            let wb = w_fun_at(a, self.kappa, omega - x);
            let wx = w_fun_at(a, self.kappa, x);
            pref * (wa + wb - 2.0 * wx.re)
        })
    }

    fn require_probe(&self, omega: f64, what: &'static str) -> Result<()> {
        if omega.abs() < 1e-12 {
            Err(Error::Domain {
                what,
                reason: "closed-form backend needs a nonzero probe frequency; \
                         use the numeric backend for the omega -> 0 limit"
                    .to_string(),
            })
        } else {
            Ok(())
        }
    }
}

impl Kernels for AnalyticKernels {
    fn backend(&self) -> &'static str {
        "analytic"
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn k_plus0(&self) -> Result<f64> {
        Ok(self.sum_real(|x| self.k_tilde(x).0))
    }

    fn k_minus0(&self) -> Result<f64> {
        Ok(self.sum_real(|x| self.k_tilde(x).1))
    }

    fn k_plus_iw(&self, omega: f64) -> Result<Complex64> {
        let np = self.n_plus();
        Ok(self.sum_cplx(|x| np * (self.w(omega + x) + self.w(omega - x))))
    }

    fn h_plus(&self, omega: f64) -> Result<Complex64> {
        self.require_probe(omega, "h_plus")?;
        let a = self.params.bath.alpha;
        if (a - 0.5).abs() < 1e-6 {
            // Removable point: N- has a simple pole and the bracket a
            // matching zero; average symmetrically around it (relative
            // error ~1e-5).
            let d = 1e-3;
            Ok(0.5 * (self.h_plus_alpha(0.5 - d, omega) + self.h_plus_alpha(0.5 + d, omega)))
        } else {
            Ok(self.h_plus_alpha(a, omega))
        }
    }

    fn h_minus(&self, omega: f64) -> Result<Complex64> {
        self.require_probe(omega, "h_minus")?;
        let np = self.n_plus();
        let pref = np / (2.0 * omega);
        Ok(self.sum_cplx(|x| {
            let diff = self.w(omega + x) - self.w(omega - x);
            pref * (diff - Complex64::new(0.0, 2.0 * self.w(x).im))
        }))
    }

    fn at_bias(&self, eps0: f64) -> Result<Box<dyn Kernels>> {
        let mut copy = self.clone();
        copy.params.qubit.eps0 = eps0;
        Ok(Box::new(copy))
    }

    fn eff_bias_slope(&self) -> Result<f64> {
        if self.params.drive.eps_d == 0.0 {
            // K-(0)/K+(0) = tanh(eps0/2 theta) identically, so the
            // effective bias equals the static bias: unit slope.
            return Ok(1.0);
        }
        let p = &self.params;
        let scale = p.bath.theta.max(p.qubit.eps0.abs());
        let h = 1e-4 * scale.max(1e-8);
        let up = self.at_bias(p.qubit.eps0 + h)?.eff_bias()?;
        let dn = self.at_bias(p.qubit.eps0 - h)?.eff_bias()?;
        Ok((up - dn) / (2.0 * h))
    }
}

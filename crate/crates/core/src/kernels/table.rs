//! Panel-quadrature kernel backend.
//!
//! The NIBA kernels are time integrals of
//! `h+-(t) = delta^2 exp(-Q'(t)) {cos, sin}(Q''(t)) * J0(d(t))`
//! against trigonometric factors carrying the bias and probe frequencies
//! (`J0(d)` with `d = 2 (eps_d/omega_d) sin(omega_d t / 2)` is the
//! cycle-averaged drive dressing; it is 1 when the drive is off). This
//! module tabulates `h+-` once on a composite 16-point Gauss-Legendre grid
//! and evaluates every transform as a weighted sum over the same nodes, so
//! a bias sweep or a frequency sweep reuses one table.
//!
//! Grid layout: panels of equal width sized to resolve the fastest
//! oscillation the table will be asked to integrate (probe frequency, bias,
//! drive frequency and amplitude), extending to the time where `Q'` reaches
//! a cutoff that makes the envelope negligible. Convergence is verified by
//! doubling the panel count until the key transforms are stable.
//!
//! The long-time correlation method makes `exp(-Q')` diverge as
//! `t^(-2 alpha)` at the origin (integrably for `alpha < 1/2`). The first
//! panel then uses the substitution `t = e1 u^(1/(1-2 alpha))`, which maps
//! the power law to a constant in `u` and restores full Gauss-Legendre
//! accuracy; the node products are assembled in log space because weight
//! and envelope separately span hundreds of orders of magnitude near
//! `alpha = 1/2`.

use super::Kernels;
use crate::bath::Correlation;
use crate::error::{Error, Result};
use crate::params::{CorrelationMethod, ModelParams};
use crate::specfun::{bessel_j, gauss_legendre_16};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// Tuning knobs for the quadrature grid.
#[derive(Debug, Clone)]
pub struct QuadPolicy {
    /// Relative tolerance for the panel-doubling convergence check.
    pub rel_tol: f64,
    /// Envelope cutoff: the grid extends to `Q'(t) = q_cut` (exp(-34) ~ 2e-15).
    pub q_cut: f64,
    /// Hard cap on the grid extent, in units of the envelope decay time
    /// `tau_env = 1/(2 pi alpha theta)`.
    pub memory_cap_factor: f64,
    /// Initial panels per period of the fastest oscillation.
    pub panels_per_period: f64,
    /// Minimum panel count regardless of frequency content.
    pub min_panels: usize,
    /// Maximum number of panel doublings before giving up.
    pub max_doublings: usize,
}

impl Default for QuadPolicy {
    fn default() -> Self {
        QuadPolicy {
            rel_tol: 1e-7,
            q_cut: 34.0,
            memory_cap_factor: 200.0,
            panels_per_period: 10.0,
            min_panels: 40,
            max_doublings: 3,
        }
    }
}

/// Tabulated kernel nodes. `wcos[i]` and `wsin[i]` hold
/// `w_i h+(t_i)` and `w_i h-(t_i)` respectively (quadrature weight folded
/// with envelope, drive dressing, and the `cos/sin(Q'')` factor), so each
/// transform is a plain dot product with bias/probe trigonometry.
#[derive(Debug)]
pub struct KernelTable {
    t: Vec<f64>,
    wcos: Vec<f64>,
    wsin: Vec<f64>,
    t_max: f64,
    resolved_freq: f64,
    n_panels: usize,
}

impl KernelTable {
    /// Build a table resolving oscillations up to `freq_scale` (the caller's
    /// largest probe/bias frequency; the bias and drive content of `params`
    /// are folded in automatically), verified by panel doubling.
    pub fn build(
        params: &ModelParams,
        policy: &QuadPolicy,
        freq_scale: f64,
    ) -> Result<Arc<KernelTable>> {
        params.validate()?;
        let fmax = required_freq(params, freq_scale);
        let mut n_panels = initial_panels(params, policy, fmax)?;
        let mut coarse = Self::build_once(params, policy, fmax, n_panels)?;
        for _ in 0..policy.max_doublings {
            let fine = Self::build_once(params, policy, fmax, 2 * n_panels)?;
            if probes_agree(&coarse.probe(fmax), &fine.probe(fmax), policy.rel_tol) {
                return Ok(Arc::new(fine));
            }
            n_panels *= 2;
            coarse = fine;
        }
        Err(Error::Convergence {
            what: "kernel table",
            detail: format!(
                "transforms not stable to {:.1e} after {} panel doublings ({} panels)",
                policy.rel_tol, policy.max_doublings, n_panels
            ),
        })
    }

    fn build_once(
        params: &ModelParams,
        policy: &QuadPolicy,
        fmax: f64,
        n_panels: usize,
    ) -> Result<KernelTable> {
        let bath = &params.bath;
        let corr = bath.method.get();
        let t_max = grid_extent(params, policy);
        let width = t_max / n_panels as f64;
        let delta_sq = params.qubit.delta * params.qubit.delta;
        let drive_on = params.drive.eps_d != 0.0;
        let z2 = if drive_on {
            2.0 * params.drive.eps_d / params.drive.omega_d
        } else {
            0.0
        };
        let gl = gauss_legendre_16();

        let n_nodes = n_panels * 16;
        let mut t = Vec::with_capacity(n_nodes);
        let mut wcos = Vec::with_capacity(n_nodes);
        let mut wsin = Vec::with_capacity(n_nodes);

        let singular_first =
            bath.method == CorrelationMethod::LongTime && params.bath.alpha < 0.5;
        if singular_first {
            let beta = 1.0 - 2.0 * bath.alpha;
            if beta < 0.01 {
                return Err(Error::Domain {
                    what: "kernel table",
                    reason: format!(
                        "long-time correlation endpoint handling is unstable for \
                         alpha = {} (needs alpha <= 0.495); use the scaling or exact method",
                        bath.alpha
                    ),
                });
            }
            // t = width * u^(1/beta): the u-integrand is regular, and the
            // node product  w * exp(-Q')  is formed in log space.
            let ln_jac = (width / beta).ln();
            for &(x, wg) in &gl {
                let u = 0.5 * (x + 1.0);
                let ln_u = u.ln();
                let ti = width * (ln_u / beta).exp();
                let (qp, qpp) = corr.q(ti, bath);
                let ln_we =
                    (0.5 * wg).ln() + ln_jac + (1.0 / beta - 1.0) * ln_u - qp + delta_sq.ln();
                let we = ln_we.exp() * drive_dressing(drive_on, z2, params.drive.omega_d, ti);
                t.push(ti);
                wcos.push(we * qpp.cos());
                wsin.push(we * qpp.sin());
            }
        } else {
            push_plain_panel(
                &mut t, &mut wcos, &mut wsin, 0.0, width, &gl, corr, bath, delta_sq, drive_on,
                z2, params.drive.omega_d,
            );
        }
        for k in 1..n_panels {
            push_plain_panel(
                &mut t,
                &mut wcos,
                &mut wsin,
                k as f64 * width,
                width,
                &gl,
                corr,
                bath,
                delta_sq,
                drive_on,
                z2,
                params.drive.omega_d,
            );
        }
        Ok(KernelTable {
            t,
            wcos,
            wsin,
            t_max,
            resolved_freq: fmax,
            n_panels,
        })
    }

    /// Largest oscillation frequency this table resolves reliably.
    pub fn resolved_freq(&self) -> f64 {
        self.resolved_freq
    }

    /// Grid extent (memory time kept by the kernels).
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_panels(&self) -> usize {
        self.n_panels
    }

    /// `K+(0; eps0) = int h+ cos(eps0 t) dt` — the total relaxation rate.
    pub fn k_plus0(&self, eps0: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.wcos)
            .map(|(&ti, &wc)| wc * (eps0 * ti).cos())
            .sum()
    }

    /// `K-(0; eps0) = int h- sin(eps0 t) dt` — the bias transform.
    pub fn k_minus0(&self, eps0: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.wsin)
            .map(|(&ti, &ws)| ws * (eps0 * ti).sin())
            .sum()
    }

    /// `K+(i omega; eps0) = int e^(-i omega t) h+ cos(eps0 t) dt`.
    pub fn k_plus_iw(&self, omega: f64, eps0: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&ti, &wc) in self.t.iter().zip(&self.wcos) {
            let (s, c) = (omega * ti).sin_cos();
            let f = wc * (eps0 * ti).cos();
            acc += Complex64::new(f * c, -f * s);
        }
        acc
    }

    /// `H+(omega; eps0) = (1/omega) int e^(-i omega t/2) sin(omega t/2)
    /// h- cos(eps0 t) dt`, with the exact `omega -> 0` limit
    /// `(1/2) int t h- cos(eps0 t) dt`.
    pub fn h_plus(&self, omega: f64, eps0: f64) -> Complex64 {
        if omega.abs() < 1e-12 {
            let m: f64 = self
                .t
                .iter()
                .zip(&self.wsin)
                .map(|(&ti, &ws)| ws * ti * (eps0 * ti).cos())
                .sum();
            return Complex64::new(0.5 * m, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (&ti, &ws) in self.t.iter().zip(&self.wsin) {
            let (s, c) = (omega * ti).sin_cos();
            let f = ws * (eps0 * ti).cos();
            // e^(-i w t / 2) sin(w t / 2) = (sin wt - i (1 - cos wt)) / 2
            acc += Complex64::new(f * s, -f * (1.0 - c));
        }
        acc / (2.0 * omega)
    }

    /// `H-(omega; eps0) = -(1/omega) int e^(-i omega t/2) sin(omega t/2)
    /// h+ sin(eps0 t) dt`, with the exact `omega -> 0` limit
    /// `-(1/2) int t h+ sin(eps0 t) dt`.
    pub fn h_minus(&self, omega: f64, eps0: f64) -> Complex64 {
        if omega.abs() < 1e-12 {
            let m: f64 = self
                .t
                .iter()
                .zip(&self.wcos)
                .map(|(&ti, &wc)| wc * ti * (eps0 * ti).sin())
                .sum();
            return Complex64::new(-0.5 * m, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (&ti, &wc) in self.t.iter().zip(&self.wcos) {
            let (s, c) = (omega * ti).sin_cos();
            let f = wc * (eps0 * ti).sin();
            acc += Complex64::new(f * s, -f * (1.0 - c));
        }
        -acc / (2.0 * omega)
    }

    /// First moment `int t h-(t) dt`; with `K+(0)` at zero bias it gives the
    /// effective-bias slope `d eps_eff/d eps0 = 2 theta M1 / K+(0)`.
    pub fn first_moment_hm(&self) -> f64 {
        self.t
            .iter()
            .zip(&self.wsin)
            .map(|(&ti, &ws)| ws * ti)
            .sum()
    }

    fn probe(&self, fs: f64) -> [f64; 6] {
        let e = 0.37 * fs;
        let kp = self.k_plus_iw(fs, e);
        [
            self.k_plus0(0.0),
            self.k_plus0(e),
            self.k_minus0(e),
            kp.re,
            kp.im,
            self.first_moment_hm(),
        ]
    }
}

#[allow(clippy::too_many_arguments)]
fn push_plain_panel(
    t: &mut Vec<f64>,
    wcos: &mut Vec<f64>,
    wsin: &mut Vec<f64>,
    start: f64,
    width: f64,
    gl: &[(f64, f64); 16],
    corr: &dyn Correlation,
    bath: &crate::params::BathParams,
    delta_sq: f64,
    drive_on: bool,
    z2: f64,
    omega_d: f64,
) {
    let half = 0.5 * width;
    let mid = start + half;
    for &(x, wg) in gl {
        let ti = mid + half * x;
        let (qp, qpp) = corr.q(ti, bath);
        let we = wg * half * delta_sq * (-qp).exp() * drive_dressing(drive_on, z2, omega_d, ti);
        t.push(ti);
        wcos.push(we * qpp.cos());
        wsin.push(we * qpp.sin());
    }
}

#[inline]
fn drive_dressing(drive_on: bool, z2: f64, omega_d: f64, t: f64) -> f64 {
    if drive_on {
        bessel_j(0, z2 * (0.5 * omega_d * t).sin())
    } else {
        1.0
    }
}

/// Largest oscillation frequency the grid must resolve.
fn required_freq(params: &ModelParams, freq_scale: f64) -> f64 {
    let mut f = freq_scale
        .abs()
        .max(params.qubit.eps0.abs())
        .max(0.25 * params.qubit.delta);
    if params.drive.eps_d != 0.0 {
        f = f.max(params.drive.omega_d).max(params.drive.eps_d.abs());
    }
    if params.drive.eps_p != 0.0 {
        f = f.max(params.drive.omega_p);
    }
    f
}

fn grid_extent(params: &ModelParams, policy: &QuadPolicy) -> f64 {
    let bath = &params.bath;
    let cap = policy.memory_cap_factor * params.tau_env();
    bath.method.get().time_for_q(policy.q_cut, cap, bath)
}

fn initial_panels(params: &ModelParams, policy: &QuadPolicy, fmax: f64) -> Result<usize> {
    let t_max = grid_extent(params, policy);
    let per_period = 2.0 * PI / fmax / policy.panels_per_period;
    let width = per_period.min(t_max / policy.min_panels as f64);
    let n = (t_max / width).ceil() as usize;
    // 16 nodes per panel, 3 arrays of f64: keep the table in check.
    if n > 4_000_000 {
        return Err(Error::Convergence {
            what: "kernel table",
            detail: format!(
                "grid would need {} panels (t_max = {:.3e}, fastest frequency {:.3e}); \
                 reduce the frequency span or the memory cap",
                n, t_max, fmax
            ),
        });
    }
    Ok(n.max(policy.min_panels))
}

fn probes_agree(a: &[f64; 6], b: &[f64; 6], rel_tol: f64) -> bool {
    let big = a
        .iter()
        .chain(b.iter())
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    a.iter().zip(b.iter()).all(|(&x, &y)| {
        let scale = x.abs().max(y.abs()).max(1e-3 * big).max(1e-300);
        (x - y).abs() <= rel_tol * scale
    })
}

/// Quadrature-backed implementation of [`Kernels`]. Cheap to re-point at a
/// different static bias: the table is shared, only the trigonometric
/// factors change.
pub struct NumericKernels {
    params: ModelParams,
    table: Arc<KernelTable>,
}

impl NumericKernels {
    pub fn build(params: &ModelParams, policy: &QuadPolicy, freq_scale: f64) -> Result<Self> {
        let table = KernelTable::build(params, policy, freq_scale)?;
        Ok(NumericKernels {
            params: params.clone(),
            table,
        })
    }

    pub fn from_table(params: &ModelParams, table: Arc<KernelTable>) -> Self {
        NumericKernels {
            params: params.clone(),
            table,
        }
    }

    pub fn table(&self) -> &Arc<KernelTable> {
        &self.table
    }
}

impl Kernels for NumericKernels {
    fn backend(&self) -> &'static str {
        "numeric"
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn k_plus0(&self) -> Result<f64> {
        Ok(self.table.k_plus0(self.params.qubit.eps0))
    }

    fn k_minus0(&self) -> Result<f64> {
        Ok(self.table.k_minus0(self.params.qubit.eps0))
    }

    fn k_plus_iw(&self, omega: f64) -> Result<Complex64> {
        Ok(self.table.k_plus_iw(omega, self.params.qubit.eps0))
    }

    fn h_plus(&self, omega: f64) -> Result<Complex64> {
        Ok(self.table.h_plus(omega, self.params.qubit.eps0))
    }

    fn h_minus(&self, omega: f64) -> Result<Complex64> {
        Ok(self.table.h_minus(omega, self.params.qubit.eps0))
    }

    fn at_bias(&self, eps0: f64) -> Result<Box<dyn Kernels>> {
        let mut p = self.params.clone();
        p.qubit.eps0 = eps0;
        if eps0.abs() <= self.table.resolved_freq {
            Ok(Box::new(NumericKernels {
                params: p,
                table: Arc::clone(&self.table),
            }))
        } else {
            // Outside the resolved band: rebuild with the wider scale.
            log::debug!(
                "kernel table rebuilt: bias {:.3e} exceeds resolved band {:.3e}",
                eps0,
                self.table.resolved_freq
            );
            let policy = QuadPolicy::default();
            Ok(Box::new(NumericKernels::build(&p, &policy, eps0.abs())?))
        }
    }

    fn eff_bias_slope(&self) -> Result<f64> {
        let p = &self.params;
        if p.qubit.eps0 == 0.0 {
            // Exact moment form at zero bias.
            return Ok(2.0 * p.bath.theta * self.table.first_moment_hm()
                / self.table.k_plus0(0.0));
        }
        let scale = p.bath.theta.max(p.qubit.eps0.abs());
        let h = 1e-4 * scale.max(1e-8);
        let up = self.at_bias(p.qubit.eps0 + h)?.eff_bias()?;
        let dn = self.at_bias(p.qubit.eps0 - h)?.eff_bias()?;
        Ok((up - dn) / (2.0 * h))
    }
}

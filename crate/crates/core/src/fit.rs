//! Least-squares extraction of `(alpha, delta, n_factor)` from measured
//! transmission spectra `|T(omega_p)|^2`.
//!
//! All frequencies in a [`SpectrumData`] — probe points, `theta`,
//! `omega_c`, `eps0`, pump settings — must share one unit (ordinary GHz is
//! the usual choice). The model only ever consumes ratios, so the unit
//! cancels; the fitted `delta` comes back in the same unit.
//!
//! The objective is `Sum_i w_i (|T(omega_i)|^2 - t_sq_i)^2`, minimized by a
//! derivative-free Nelder–Mead simplex over `(alpha, ln delta, ln N)` with
//! three additional restarts from deterministically jittered initials
//! (fixed internal seed: identical inputs give bit-identical results).
//! [`scan_match`] reproduces the coarse methodology used when `delta` is
//! not identifiable from one cut: for each candidate `(delta, N)` the best
//! `alpha` is found by 1-D minimization and the combinations are ranked by
//! total misfit.
//!
//! Identifiability caveat: power spectra carry a two-branch ambiguity in
//! the coupling scale. For a near-Lorentzian line `|T|^2` depends on
//! `n_factor` only through the detuning of `N |S|` from the internal
//! linewidth, so an undercoupled value and its overcoupled mirror about
//! critical coupling give almost identical data (the non-Lorentzian tail
//! separates them by only ~1e-4 in `|T|^2`). Seed the fit on the branch
//! known from the hardware; phase information would resolve it, but this
//! objective deliberately uses magnitude-only data.

use crate::bath::CorrelationMethod;
use crate::error::{Error, Result};
use crate::kernels::{AnalyticKernels, Kernels, NumericKernels, QuadPolicy};
use crate::params::{BathParams, DriveParams, ModelParams, QubitParams};
use crate::response::{chi_formula, transmission};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const PENALTY: f64 = 1e100;
const MAX_ITER: usize = 600;

/// One measured point.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumPoint {
    pub omega_p: f64,
    /// Transmitted power ratio `|T|^2`.
    pub t_sq: f64,
    pub weight: f64,
}

/// A transmission cut at fixed acquisition settings.
#[derive(Debug, Clone)]
pub struct SpectrumData {
    /// Strictly increasing probe frequencies with their `|T|^2` values.
    pub points: Vec<SpectrumPoint>,
    /// Thermal frequency `k_B T / h` in the same unit as `omega_p`.
    pub theta: f64,
    /// Bath cutoff in the same unit.
    pub omega_c: f64,
    /// Static bias of the acquisition (same unit; 0 at the symmetry point).
    pub eps0: f64,
    /// Pump amplitude (0 for static spectra) and frequency, same unit.
    pub eps_d: f64,
    pub omega_d: f64,
}

impl SpectrumData {
    /// A static symmetry-point cut.
    pub fn new_static(points: Vec<SpectrumPoint>, theta: f64, omega_c: f64) -> Self {
        SpectrumData {
            points,
            theta,
            omega_c,
            eps0: 0.0,
            eps_d: 0.0,
            omega_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 8 {
            return Err(Error::BadData(format!(
                "need at least 8 spectrum points, got {}",
                self.points.len()
            )));
        }
        for pair in self.points.windows(2) {
            if !(pair[1].omega_p > pair[0].omega_p) {
                return Err(Error::BadData(
                    "probe frequencies must be strictly increasing".to_string(),
                ));
            }
        }
        for p in &self.points {
            if !p.omega_p.is_finite()
                || !(p.omega_p > 0.0)
                || !p.t_sq.is_finite()
                || p.t_sq < 0.0
                || p.t_sq > 1.5
                || !(p.weight > 0.0)
                || !p.weight.is_finite()
            {
                return Err(Error::BadData(format!(
                    "bad spectrum point (omega_p = {}, t_sq = {}, weight = {})",
                    p.omega_p, p.t_sq, p.weight
                )));
            }
        }
        if !(self.theta > 0.0) || !(self.omega_c > 0.0) {
            return Err(Error::BadData(
                "theta and omega_c must be positive".to_string(),
            ));
        }
        let n = self.points.len() as f64;
        let mean = self.points.iter().map(|p| p.t_sq).sum::<f64>() / n;
        let var = self
            .points
            .iter()
            .map(|p| (p.t_sq - mean) * (p.t_sq - mean))
            .sum::<f64>()
            / n;
        if var < 1e-6 {
            return Err(Error::BadData(format!(
                "spectrum is flat (variance {var:.2e} < 1e-6): no feature to fit"
            )));
        }
        Ok(())
    }

    fn weight_sum(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Kernel backend used inside the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPath {
    /// Gamma-function kernels: fast, static spectra, `alpha <= 0.49`.
    Analytic,
    /// Quadrature kernels: any coupling, pump-averaged drives allowed.
    Numeric,
}

impl FitPath {
    pub fn name(self) -> &'static str {
        match self {
            FitPath::Analytic => "analytic",
            FitPath::Numeric => "numeric",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "analytic" => Ok(FitPath::Analytic),
            "numeric" => Ok(FitPath::Numeric),
            _ => Err(Error::UnknownStrategy {
                registry: "fit path",
                name: name.to_string(),
                known: "analytic, numeric".to_string(),
            }),
        }
    }

    fn alpha_box(self) -> (f64, f64) {
        match self {
            FitPath::Analytic => (1e-4, 0.49),
            FitPath::Numeric => (1e-4, 0.95),
        }
    }
}

/// Fitted parameters with quality diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub alpha: f64,
    pub delta: f64,
    pub n_factor: f64,
    /// Weighted root-mean-square misfit in `|T|^2`.
    pub residual: f64,
    /// Per-parameter scale over which the squared misfit doubles
    /// (quadratic expansion at the optimum; infinite when locally flat).
    pub sensitivity: [f64; 3],
    /// Total objective evaluations across all restarts.
    pub iterations: usize,
}

fn params_for(alpha: f64, delta: f64, n_factor: f64, data: &SpectrumData) -> ModelParams {
    ModelParams {
        qubit: QubitParams {
            delta: 1.0,
            eps0: data.eps0 / delta,
        },
        bath: BathParams {
            alpha,
            theta: data.theta / delta,
            omega_c: data.omega_c / delta,
            method: CorrelationMethod::ScalingLimit,
        },
        drive: DriveParams {
            eps_p: 0.0,
            omega_p: 0.0,
            eps_d: data.eps_d / delta,
            omega_d: data.omega_d / delta,
        },
        n_factor,
    }
}

/// Model transmission power at the cut's probe frequencies.
pub fn model_t_sq(
    alpha: f64,
    delta: f64,
    n_factor: f64,
    data: &SpectrumData,
    path: FitPath,
) -> Result<Vec<f64>> {
    let params = params_for(alpha, delta, n_factor, data);
    let k: Box<dyn Kernels> = match path {
        FitPath::Analytic => Box::new(AnalyticKernels::new(&params)?),
        FitPath::Numeric => {
            let fs = data
                .points
                .iter()
                .map(|p| p.omega_p)
                .fold(0.0f64, f64::max)
                .max(data.eps0.abs())
                / delta;
            Box::new(NumericKernels::build(
                &params,
                &QuadPolicy::default(),
                fs.max(1.0),
            )?)
        }
    };
    data.points
        .iter()
        .map(|p| {
            let w_hat = p.omega_p / delta;
            let chi = chi_formula(k.as_ref(), w_hat)?;
            Ok(transmission(n_factor, w_hat, chi).norm_sqr())
        })
        .collect()
}

/// Weighted squared misfit of one parameter triple against a set of cuts.
pub fn weighted_misfit(
    alpha: f64,
    delta: f64,
    n_factor: f64,
    cuts: &[SpectrumData],
    path: FitPath,
) -> Result<f64> {
    let mut total = 0.0;
    for cut in cuts {
        let model = model_t_sq(alpha, delta, n_factor, cut, path)?;
        for (p, m) in cut.points.iter().zip(&model) {
            let r = m - p.t_sq;
            total += p.weight * r * r;
        }
    }
    Ok(total)
}

/// Nelder–Mead on a 3-vector; returns (best x, best f, evaluations).
fn nelder_mead<F: FnMut(&[f64; 3]) -> f64>(
    mut f: F,
    x0: [f64; 3],
    step: [f64; 3],
) -> ([f64; 3], f64, usize) {
    let mut evals = 0;
    let mut eval = |x: &[f64; 3], n: &mut usize| {
        *n += 1;
        f(x)
    };
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0, f0));
    for i in 0..3 {
        let mut x = x0;
        x[i] += step[i];
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    for _ in 0..MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[3].1;
        let spread: f64 = (0..3)
            .map(|i| {
                let vals: Vec<f64> = simplex.iter().map(|(x, _)| x[i]).collect();
                let mx = vals.iter().cloned().fold(f64::MIN, f64::max);
                let mn = vals.iter().cloned().fold(f64::MAX, f64::min);
                mx - mn
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) && spread < 1e-7 {
            break;
        }
        // Centroid of the best three.
        let mut c = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for i in 0..3 {
                c[i] += x[i] / 3.0;
            }
        }
        let xw = simplex[3].0;
        let refl: [f64; 3] = std::array::from_fn(|i| c[i] + (c[i] - xw[i]));
        let f_refl = eval(&refl, &mut evals);
        if f_refl < simplex[0].1 {
            let exp: [f64; 3] = std::array::from_fn(|i| c[i] + 2.0 * (c[i] - xw[i]));
            let f_exp = eval(&exp, &mut evals);
            simplex[3] = if f_exp < f_refl { (exp, f_exp) } else { (refl, f_refl) };
        } else if f_refl < simplex[2].1 {
            simplex[3] = (refl, f_refl);
        } else {
            let (xc, fc) = if f_refl < simplex[3].1 {
                let o: [f64; 3] = std::array::from_fn(|i| c[i] + 0.5 * (refl[i] - c[i]));
                let fo = eval(&o, &mut evals);
                (o, fo)
            } else {
                let inn: [f64; 3] = std::array::from_fn(|i| c[i] - 0.5 * (c[i] - xw[i]));
                let fi = eval(&inn, &mut evals);
                (inn, fi)
            };
            if fc < simplex[3].1.min(f_refl) {
                simplex[3] = (xc, fc);
            } else {
                // Shrink toward the best vertex.
                let xb = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let xs: [f64; 3] = std::array::from_fn(|i| xb[i] + 0.5 * (v.0[i] - xb[i]));
                    let fs = eval(&xs, &mut evals);
                    *v = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, evals)
}

/// Fit one cut. `init` is `(alpha, delta, n_factor)` in the data's unit.
pub fn fit_spectrum(
    data: &SpectrumData,
    init: (f64, f64, f64),
    path: FitPath,
) -> Result<FitResult> {
    data.validate()?;
    if path == FitPath::Analytic && data.eps_d != 0.0 {
        return Err(Error::Domain {
            what: "fit path",
            reason: "the analytic path handles static spectra only; use the \
                     numeric path for driven cuts"
                .to_string(),
        });
    }
    let (a_lo, a_hi) = path.alpha_box();
    let (a0, d0, n0) = init;
    if !(a0 > a_lo && a0 <= a_hi) || !(d0 > 0.0) || !(n0 > 0.0) {
        return Err(Error::InvalidParam {
            name: "init",
            value: a0,
            reason: format!(
                "initial guess out of range: alpha in ({a_lo}, {a_hi}], delta > 0, n > 0"
            ),
        });
    }

    let cuts = std::slice::from_ref(data);
    let mut objective = |x: &[f64; 3]| -> f64 {
        let alpha = x[0];
        let delta = x[1].exp();
        let nf = x[2].exp();
        if !(alpha > a_lo && alpha <= a_hi) || !delta.is_finite() || !nf.is_finite() {
            return PENALTY;
        }
        weighted_misfit(alpha, delta, nf, cuts, path).unwrap_or(PENALTY)
    };

    // Deterministic jittered restarts around the supplied initial guess.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7fb7_51e5);
    let mut starts = vec![[a0, d0.ln(), n0.ln()]];
    for _ in 0..3 {
        let a = (a0 * (1.0 + 0.2 * rng.random_range(-1.0..1.0))).clamp(a_lo * 1.5, a_hi);
        let d = d0.ln() + 0.05 * rng.random_range(-1.0..1.0);
        let n = n0.ln() + 0.2 * rng.random_range(-1.0..1.0);
        starts.push([a, d, n]);
    }

    let mut best: Option<([f64; 3], f64)> = None;
    let mut total_evals = 0;
    for x0 in starts {
        let step = [(0.2 * x0[0]).max(0.01), 0.05, 0.1];
        let (x, fx, evals) = nelder_mead(&mut objective, x0, step);
        total_evals += evals;
        if best.as_ref().is_none_or(|(_, fb)| fx < *fb) {
            best = Some((x, fx));
        }
    }
    let (x, fx) = best.unwrap();
    if fx >= PENALTY {
        return Err(Error::Convergence {
            what: "fit_spectrum",
            detail: "no feasible parameters found from any restart".to_string(),
        });
    }
    let (alpha, delta, nf) = (x[0], x[1].exp(), x[2].exp());

    // Per-parameter sensitivity: shift that doubles the squared misfit.
    let p_opt = [alpha, delta, nf];
    let mut sensitivity = [f64::INFINITY; 3];
    for i in 0..3 {
        let h = (1e-3 * p_opt[i].abs()).max(1e-7);
        let mut lo = p_opt;
        let mut hi = p_opt;
        lo[i] -= h;
        hi[i] += h;
        let f_lo = weighted_misfit(lo[0], lo[1], lo[2], cuts, path).unwrap_or(PENALTY);
        let f_hi = weighted_misfit(hi[0], hi[1], hi[2], cuts, path).unwrap_or(PENALTY);
        let curv = (f_lo + f_hi - 2.0 * fx) / (h * h);
        if curv > 0.0 && f_lo < PENALTY && f_hi < PENALTY {
            sensitivity[i] = (2.0 * fx.max(1e-30) / curv).sqrt();
        }
    }

    Ok(FitResult {
        alpha,
        delta,
        n_factor: nf,
        residual: (fx / data.weight_sum()).sqrt(),
        sensitivity,
        iterations: total_evals,
    })
}

/// One ranked scan entry.
#[derive(Debug, Clone, Copy)]
pub struct ScanEntry {
    pub delta: f64,
    pub n_factor: f64,
    /// Best-matching coupling for this `(delta, n)` pair.
    pub alpha: f64,
    /// Weighted RMS misfit across all supplied cuts.
    pub residual: f64,
}

/// For each candidate `(delta, n_factor)`, find the best `alpha` by 1-D
/// minimization of the misfit across all cuts; return entries ranked best
/// first. Requires at least one static (pump-free) cut.
pub fn scan_match(
    cuts: &[SpectrumData],
    delta_candidates: &[f64],
    n_box: &[f64],
    path: FitPath,
) -> Result<Vec<ScanEntry>> {
    if delta_candidates.is_empty() || n_box.is_empty() {
        return Err(Error::InvalidParam {
            name: "delta_candidates",
            value: delta_candidates.len() as f64,
            reason: "need at least one candidate delta and one n_factor".to_string(),
        });
    }
    if cuts.is_empty() || !cuts.iter().any(|c| c.eps_d == 0.0) {
        return Err(Error::BadData(
            "scan_match needs at least one static (pump-free) cut".to_string(),
        ));
    }
    for c in cuts {
        c.validate()?;
    }
    if path == FitPath::Analytic && cuts.iter().any(|c| c.eps_d != 0.0) {
        return Err(Error::Domain {
            what: "fit path",
            reason: "driven cuts require the numeric path".to_string(),
        });
    }
    let (a_lo, a_hi) = path.alpha_box();
    // The quadrature table length scales as 1/alpha (the bath memory time
    // is 1/(2 pi alpha theta)), so the systematic grid of the numeric path
    // starts at a moderate coupling; spectra that need smaller alpha are
    // the analytic path's regime.
    let a_lo = match path {
        FitPath::Analytic => a_lo,
        FitPath::Numeric => a_lo.max(0.02),
    };
    let w_total: f64 = cuts.iter().map(|c| c.weight_sum()).sum();

    let combos: Vec<(f64, f64)> = delta_candidates
        .iter()
        .flat_map(|&d| n_box.iter().map(move |&n| (d, n)))
        .collect();
    let entries: Vec<ScanEntry> = combos
        .par_iter()
        .map(|&(delta, nf)| {
            let f_of = |alpha: f64| -> f64 {
                weighted_misfit(alpha, delta, nf, cuts, path).unwrap_or(PENALTY)
            };
            // Coarse geometric grid, then golden-section refinement in the
            // bracketing cells.
            let n_grid = 24;
            let ratio = (a_hi / a_lo).powf(1.0 / (n_grid - 1) as f64);
            let grid: Vec<f64> = (0..n_grid).map(|i| a_lo * ratio.powi(i as i32)).collect();
            let fs: Vec<f64> = grid.iter().map(|&a| f_of(a)).collect();
            let imin = fs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            let (mut lo, mut hi) = (
                grid[imin.saturating_sub(1)],
                grid[(imin + 1).min(n_grid - 1)],
            );
            let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
            let mut c = hi - gr * (hi - lo);
            let mut d = lo + gr * (hi - lo);
            let (mut fc, mut fd) = (f_of(c), f_of(d));
            for _ in 0..48 {
                if fc < fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - gr * (hi - lo);
                    fc = f_of(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + gr * (hi - lo);
                    fd = f_of(d);
                }
            }
            let alpha = 0.5 * (lo + hi);
            ScanEntry {
                delta,
                n_factor: nf,
                alpha,
                residual: (f_of(alpha) / w_total).sqrt(),
            }
        })
        .collect();
    let mut ranked = entries;
    ranked.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    Ok(ranked)
}

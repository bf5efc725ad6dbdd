//! End-to-end acceptance suite.
//!
//! Each criterion is one test that prints exactly one summary line
//!
//! ```text
//! ACCEPTANCE <n> <PASS|FAIL> <name>: <measurements vs pinned tolerance>
//! ```
//!
//! and then asserts. Run with
//!
//! ```text
//! cargo test -p sbx-core --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! to see the lines in order. All tolerances are fixed here, in the
//! assertions, not tuned to the implementation: physical identities carry
//! tight bounds (1e-10 .. 1e-4), cross-route comparisons carry the bounds
//! that the two routes' approximations justify (2%), and statistical
//! closed loops use median bounds over a fixed seed set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sbx_core::dynamics::{fourier_coeff, solve_gme_with_step, KernelMode};
use sbx_core::fit::{fit_spectrum, model_t_sq, FitPath, SpectrumData, SpectrumPoint};
use sbx_core::kernels::{AnalyticKernels, Kernels, NumericKernels, QuadPolicy};
use sbx_core::params::{units, ModelParams};
use sbx_core::phase::{exact_anchor, t_star_driven, t_star_pole};
use sbx_core::response::{chi_formula, peak_analysis, transmission, ChiPath};
use sbx_core::bath::CorrelationMethod;
use std::time::Instant;

fn report(id: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    println!(
        "ACCEPTANCE {id} {} {name}: {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "acceptance criterion {id} failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---------------------------------------------------------------------------
// 1. Exact phase-boundary anchor and the approach of the numeric boundary.
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_phase_boundary_anchor() {
    let t0 = Instant::now();
    let anchor = exact_anchor(1.0, 10.0);
    let anchor_ok = (anchor - 0.05).abs() < 1e-15;

    // March the numeric (pole-criterion) boundary toward the endpoint.
    let alphas = [0.40, 0.43, 0.46, 0.49];
    let theta: Vec<f64> = alphas
        .iter()
        .map(|&a| t_star_pole(a, 1.0, 10.0).unwrap())
        .collect();
    let decreasing = theta.windows(2).all(|w| w[1] < w[0]);
    let above = theta.iter().all(|&t| t > anchor);
    // Linear extrapolation from the last two points to alpha = 0.5 must
    // land strictly closer to the anchor than any computed point.
    let slope = (theta[3] - theta[2]) / (alphas[3] - alphas[2]);
    let extrap = theta[3] + slope * (0.5 - alphas[3]);
    let approaches = extrap > anchor && extrap < theta[3];

    let pass = anchor_ok && decreasing && above && approaches;
    report(
        1,
        "phase-boundary anchor",
        pass,
        &format!(
            "anchor = {anchor:.4} (exact 0.0500); theta*(0.40..0.49) = \
             [{:.5}, {:.5}, {:.5}, {:.5}] decreasing toward it, \
             extrapolation to 0.5 = {extrap:.5}",
            theta[0], theta[1], theta[2], theta[3]
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 2. Gamma-function kernels vs quadrature kernels on random draws.
// ---------------------------------------------------------------------------
#[test]
fn criterion_2_kernel_cross_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let omega_p = 0.8;
    let mut worst: f64 = 0.0;
    let mut worst_what = String::new();
    for draw in 0..20 {
        let alpha = rng.random_range(0.05..0.4);
        let theta = rng.random_range(0.3..1.0);
        let eps0 = rng.random_range(-1.0..1.0);
        let mut p = ModelParams::bare(alpha, theta, 10.0).with_eps0(eps0);
        let ana = AnalyticKernels::new(&p).unwrap();
        p.bath.method = CorrelationMethod::LongTime;
        let num = NumericKernels::build(&p, &QuadPolicy::default(), 1.0).unwrap();

        let checks = [
            ("K+(0)", num.k_plus0().unwrap(), ana.k_plus0().unwrap()),
            ("K-(0)", num.k_minus0().unwrap(), ana.k_minus0().unwrap()),
            (
                "|K+(iw)|",
                num.k_plus_iw(omega_p).unwrap().norm(),
                ana.k_plus_iw(omega_p).unwrap().norm(),
            ),
            (
                "|H+|",
                num.h_plus(omega_p).unwrap().norm(),
                ana.h_plus(omega_p).unwrap().norm(),
            ),
            (
                "|H-|",
                num.h_minus(omega_p).unwrap().norm(),
                ana.h_minus(omega_p).unwrap().norm(),
            ),
        ];
        for (what, a, b) in checks {
            let r = rel(a, b);
            if r > worst {
                worst = r;
                worst_what = format!("{what} at draw {draw} (alpha={alpha:.3})");
            }
        }
    }
    // Informational: the interpolating short-time form differs at the
    // several-percent level, which is why the cross-oracle pins the
    // long-time form.
    let p_sc = ModelParams::bare(0.2, 0.5, 10.0).with_eps0(0.3);
    let ana = AnalyticKernels::new(&p_sc).unwrap();
    let num_sc = NumericKernels::build(&p_sc, &QuadPolicy::default(), 1.0).unwrap();
    let gap_sc = rel(num_sc.k_plus0().unwrap(), ana.k_plus0().unwrap());

    let pass = worst <= 0.02;
    report(
        2,
        "kernel cross-oracle",
        pass,
        &format!(
            "20 draws, worst relative gap {worst:.2e} ({worst_what}) <= 2e-2; \
             interpolating-envelope gap at one reference point: {gap_sc:.1e} (informational)"
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 3. Dynamics vs response: damped-cosine and pure-relaxation limits.
// ---------------------------------------------------------------------------
#[test]
fn criterion_3_dynamics_response_consistency() {
    let t0 = Instant::now();

    // Weak coupling: trajectory vs exp(-gamma t) cos(Omega t) with the pair
    // read off the absorption peak.
    let p = ModelParams::bare(0.01, 0.5, 10.0);
    let k = NumericKernels::build(&p, &QuadPolicy::default(), 2.0).unwrap();
    let pa = peak_analysis(&k, ChiPath::ExactNiba, 0.02, 2.0, 400).unwrap();
    let (omega, gamma) = (pa.omega_star, pa.gamma.unwrap());
    let traj = solve_gme_with_step(1.0, 30.0, &p, KernelMode::PumpAveraged, 0.01).unwrap();
    let rms_coh = (traj
        .t
        .iter()
        .zip(&traj.p)
        .map(|(&t, &pt)| {
            let model = (-gamma * t).exp() * (omega * t).cos();
            (pt - model) * (pt - model)
        })
        .sum::<f64>()
        / traj.p.len() as f64)
        .sqrt();

    // Strong coupling: pure exponential relaxation at the rate read off the
    // incoherent peak position.
    let p6 = ModelParams::bare(0.6, 0.5, 10.0);
    let k6 = NumericKernels::build(&p6, &QuadPolicy::default(), 1.0).unwrap();
    let pa6 = peak_analysis(&k6, ChiPath::ExactNiba, 0.005, 1.0, 400).unwrap();
    let gr = pa6
        .gamma_r
        .expect("alpha = 0.6 lineshape should be incoherent");
    let traj6 = solve_gme_with_step(1.0, 30.0, &p6, KernelMode::PumpAveraged, 0.01).unwrap();
    let rms_inc = (traj6
        .t
        .iter()
        .zip(&traj6.p)
        .map(|(&t, &pt)| {
            let model = (-gr * t).exp();
            (pt - model) * (pt - model)
        })
        .sum::<f64>()
        / traj6.p.len() as f64)
        .sqrt();

    let pass = rms_coh <= 0.02 && rms_inc <= 0.02;
    report(
        3,
        "dynamics-response consistency",
        pass,
        &format!(
            "damped cosine (Omega = {omega:.6}, gamma = {gamma:.6}): RMS {rms_coh:.4} <= 0.02; \
             relaxation (gamma_r = {gr:.6}): RMS {rms_inc:.4} <= 0.02"
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 4. Probe harmonic of the driven solver vs frequency-domain susceptibility.
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_linear_response_cross_check() {
    let t0 = Instant::now();
    let base = ModelParams::bare(0.2, 0.5, 10.0).with_eps0(0.3);
    let k = NumericKernels::build(&base, &QuadPolicy::default(), 2.0).unwrap();
    let eps_p = 0.01;
    let freqs = [0.4, 0.55, 0.7, 0.85, 1.1];
    let errs: Vec<f64> = freqs
        .par_iter()
        .map(|&w| {
            let mut p = base.clone();
            p.drive.eps_p = eps_p;
            p.drive.omega_p = w;
            let period = 2.0 * std::f64::consts::PI / w;
            let traj = solve_gme_with_step(
                1.0,
                16.0 * period,
                &p,
                KernelMode::PumpAveraged,
                period / 880.0,
            )
            .unwrap();
            let p1 = fourier_coeff(&traj, 1).unwrap();
            let chi = chi_formula(&k, w).unwrap();
            rel(p1.norm() / eps_p, chi.norm())
        })
        .collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= 0.02;
    report(
        4,
        "linear-response cross-check",
        pass,
        &format!(
            "|p1|/eps_p vs |chi| at {} frequencies across the resonance: worst {worst:.2e} <= 2e-2",
            freqs.len()
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 5. Detailed balance, stationary populations, and drive-induced inversion.
// ---------------------------------------------------------------------------
#[test]
fn criterion_5_detailed_balance_suite() {
    let t0 = Instant::now();

    // (a) No drive: the effective bias is the static bias. The detailed-
    // balance form of the bath correlation makes this an identity of the
    // integrands, so the quadrature must reproduce it far below 1e-4.
    let theta = 0.4;
    let mut p = ModelParams::bare(0.25, theta, 10.0);
    p.bath.method = CorrelationMethod::Exact;
    let k0 = NumericKernels::build(&p, &QuadPolicy::default(), 2.5).unwrap();
    let mut worst_bias: f64 = 0.0;
    for i in 0..9 {
        let eps0 = -2.0 * theta + 4.0 * theta * i as f64 / 8.0;
        if eps0.abs() < 1e-9 {
            continue;
        }
        let ke = k0.at_bias(eps0).unwrap();
        worst_bias = worst_bias.max(rel(ke.eff_bias().unwrap(), eps0));
    }

    // (b) tanh identity between the two stationary-population routes.
    let mut worst_tanh: f64 = 0.0;
    for eps0 in [-0.6, -0.2, 0.35, 0.7] {
        let ke = k0.at_bias(eps0).unwrap();
        let via_rates = ke.rates().unwrap().p0();
        let via_tanh = (ke.eff_bias().unwrap() / (2.0 * theta)).tanh();
        worst_tanh = worst_tanh.max((via_rates - via_tanh).abs());
    }

    // (c) Population inversion window: biased at one pump quantum, the
    // stationary population goes negative for pump ratios between the first
    // zeros of J0 (2.405) and J1 (3.832), and stays positive outside.
    let theta_d = units::temp_mk(175.0, 7.23);
    let omega_c = units::freq_ghz(65.0, 7.23);
    let omega_d = units::freq_ghz(9.0, 7.23);
    let p0_at = |ratio: f64| -> f64 {
        let p = ModelParams::bare(0.21, theta_d, omega_c)
            .with_eps0(omega_d)
            .with_drive(ratio * omega_d, omega_d);
        let k = NumericKernels::build(&p, &QuadPolicy::default(), 2.0).unwrap();
        k.p0().unwrap()
    };
    let inside: Vec<f64> = [2.6, 2.8, 3.0, 3.2, 3.4, 3.6].iter().map(|&r| p0_at(r)).collect();
    let outside = [p0_at(2.0), p0_at(4.2)];
    let inversion = inside.iter().all(|&v| v < 0.0) && outside.iter().all(|&v| v > 0.0);

    let pass = worst_bias <= 1e-4 && worst_tanh <= 1e-10 && inversion;
    report(
        5,
        "detailed-balance suite",
        pass,
        &format!(
            "eps_eff = eps0 worst {worst_bias:.2e} <= 1e-4; tanh identity worst \
             {worst_tanh:.2e} <= 1e-10; inversion band P0 in [{:.4}, {:.4}] < 0 \
             with P0 > 0 outside ({:.4}, {:.4})",
            inside.iter().cloned().fold(f64::INFINITY, f64::min),
            inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            outside[0],
            outside[1]
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 6. Coherent destruction of tunneling at the first Bessel zero.
// ---------------------------------------------------------------------------
#[test]
fn criterion_6_tunneling_suppression() {
    let t0 = Instant::now();
    const J0_ZERO: f64 = 2.4048255576957727;

    // Second-device parameters at the low-temperature acquisition.
    let theta = units::temp_mk(30.0, 7.23);
    let omega_c = units::freq_ghz(65.0, 7.23);
    let omega_d = units::freq_ghz(9.0, 7.23);
    let rate_at = |ratio: f64, backend: &str| -> f64 {
        let mut p = ModelParams::bare(0.21, theta, omega_c);
        if ratio != 0.0 {
            p = p.with_drive(ratio * omega_d, omega_d);
        }
        match backend {
            "numeric" => NumericKernels::build(&p, &QuadPolicy::default(), 1.5)
                .unwrap()
                .k_plus0()
                .unwrap(),
            _ => AnalyticKernels::new(&p).unwrap().k_plus0().unwrap(),
        }
    };
    let suppression = rate_at(0.0, "numeric") / rate_at(J0_ZERO, "numeric");
    let suppression_ana = rate_at(0.0, "analytic") / rate_at(J0_ZERO, "analytic");
    // Informational: at the standard 90 mK acquisition temperature the
    // suppression is milder (~4x) because thermal sidebands refill the rate.
    let theta_90 = units::temp_mk(90.0, 7.23);
    let rate_at_90 = |ratio: f64| -> f64 {
        let mut p = ModelParams::bare(0.21, theta_90, omega_c);
        if ratio != 0.0 {
            p = p.with_drive(ratio * omega_d, omega_d);
        }
        NumericKernels::build(&p, &QuadPolicy::default(), 1.5)
            .unwrap()
            .k_plus0()
            .unwrap()
    };
    let suppression_90 = rate_at_90(0.0) / rate_at_90(J0_ZERO);

    // Drive-renormalized crossover factor never exceeds one.
    let mut factor_ok = true;
    for n in 0..=3u32 {
        for &alpha in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            for i in 0..=12 {
                let ratio = 0.5 * i as f64;
                let f = t_star_driven(alpha, n, ratio, 1.0).unwrap();
                factor_ok &= f <= 1.0 + 1e-12;
            }
        }
    }

    let pass = suppression >= 10.0 && factor_ok;
    report(
        6,
        "tunneling suppression",
        pass,
        &format!(
            "K+(0) suppression at the J0 zero: {suppression:.2}x (>= 10x required; \
             analytic route {suppression_ana:.2}x, 90 mK {suppression_90:.2}x informational); \
             |J_n|^(1/(1-alpha)) <= 1 on the full grid: {factor_ok}"
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 7. Qualitative transmission-map regression for the driven devices.
// ---------------------------------------------------------------------------

struct DrivenMap {
    /// Row-major `values[j][i]` = |T|^2 at (x = bias[i], y = amp[j]).
    values: Vec<Vec<f64>>,
    /// Effective bias at each cell (same layout).
    eps_eff: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn driven_map(
    base: &ModelParams,
    omega_p: f64,
    bias: Vec<f64>,
    amps: Vec<f64>,
    omega_d: f64,
) -> DrivenMap {
    let rows: Vec<(Vec<f64>, Vec<f64>)> = amps
        .par_iter()
        .map(|&eps_d| {
            let mut p = base.clone();
            if eps_d != 0.0 {
                p = p.clone().with_drive(eps_d, omega_d);
            }
            let scale = bias.last().unwrap().abs().max(omega_p).max(1.0);
            let k = NumericKernels::build(&p, &QuadPolicy::default(), scale).unwrap();
            let mut v = Vec::with_capacity(bias.len());
            let mut ee = Vec::with_capacity(bias.len());
            for &e0 in &bias {
                let kb = k.at_bias(e0).unwrap();
                let chi = chi_formula(kb.as_ref(), omega_p).unwrap();
                v.push(transmission(base.n_factor, omega_p, chi).norm_sqr());
                // A fully one-sided rate pair means an effectively infinite
                // bias: transparent for the contour classification.
                ee.push(kb.eff_bias().unwrap_or(f64::INFINITY * kb.p0().unwrap().signum()));
            }
            (v, ee)
        })
        .collect();
    DrivenMap {
        values: rows.iter().map(|(v, _)| v.clone()).collect(),
        eps_eff: rows.into_iter().map(|(_, e)| e).collect(),
        bias,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

#[test]
fn criterion_7_transmission_map_regression() {
    let t0 = Instant::now();
    const J0_ZERO: f64 = 2.4048255576957727;
    let n_grid = 64;

    // --- Second device, driven map over (bias, pump ratio). ---
    let theta2 = units::temp_mk(175.0, 7.23);
    let omega_c2 = units::freq_ghz(65.0, 7.23);
    let omega_d2 = units::freq_ghz(9.0, 7.23);
    let omega_p2 = units::freq_ghz(5.2, 7.23);
    let mut base2 = ModelParams::bare(0.21, theta2, omega_c2);
    base2.n_factor = 1.1;
    let bias2 = linspace(-2.0 * omega_d2, 2.0 * omega_d2, n_grid);
    let ratios = linspace(0.0, 4.0, n_grid);
    let amps2: Vec<f64> = ratios.iter().map(|r| r * omega_d2).collect();
    let map2 = driven_map(&base2, omega_p2, bias2.clone(), amps2, omega_d2);

    let d_bias = bias2[1] - bias2[0];
    let d_ratio = ratios[1] - ratios[0];
    // Maximum along the zero-bias column sits at the first J0 zero.
    let i_zero_bias = argmax(&bias2.iter().map(|b| -b.abs()).collect::<Vec<_>>());
    let col: Vec<f64> = map2.values.iter().map(|row| row[i_zero_bias]).collect();
    let j_max = argmax(&col);
    let ratio_of_max = ratios[j_max];
    let cdt_column_ok = (ratio_of_max - J0_ZERO).abs() <= 2.0 * d_ratio;
    // Maximum along that pump row sits at zero bias.
    let row_at_cdt = &map2.values[j_max];
    let bias_of_max = map2.bias[argmax(row_at_cdt)];
    let cdt_row_ok = bias_of_max.abs() <= 2.0 * d_bias;

    // Resonance dips near one pump quantum of bias, probed where J1 is large.
    // The one-quantum absorption line is a blend of the two sideband
    // resonances at eps0 = omega_d +- sqrt(omega_p^2 - delta_1^2), so its
    // minimum sits 10-30% beyond omega_d and drifts inward with pump power;
    // the window below covers that drift (+-5 cells ~ +-0.32 omega_d).
    // Contrast is asserted against the half-quantum point and the row edge
    // so a flat row cannot pass.
    let j_dip = ratios
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.8).abs().total_cmp(&(b.1 - 1.8).abs()))
        .map(|(j, _)| j)
        .unwrap();
    let dip_row = &map2.values[j_dip];
    let at_bias = |b: f64| -> f64 {
        let i = bias2
            .iter()
            .enumerate()
            .min_by(|a, c| (a.1 - b).abs().total_cmp(&(c.1 - b).abs()))
            .map(|(i, _)| i)
            .unwrap();
        dip_row[i]
    };
    let mut dips_found = [false, false];
    let mut dip_pos = [f64::NAN, f64::NAN];
    for (which, center) in [(-omega_d2), omega_d2].into_iter().enumerate() {
        for i in 1..n_grid - 1 {
            let local_min = dip_row[i] < dip_row[i - 1] && dip_row[i] < dip_row[i + 1];
            let in_window = (map2.bias[i] - center).abs() <= 5.0 * d_bias;
            let contrast = dip_row[i] < at_bias(0.5 * center) && dip_row[i] < at_bias(2.0 * center);
            if local_min && in_window && contrast {
                dips_found[which] = true;
                dip_pos[which] = map2.bias[i] / omega_d2;
            }
        }
    }

    // --- Third device, driven map over (bias, pump amplitude). ---
    let theta3 = units::temp_mk(90.0, 8.0);
    let omega_c3 = units::freq_ghz(65.0, 8.0);
    let omega_d3 = units::freq_ghz(3.0, 8.0);
    let omega_p3 = units::freq_ghz(4.0, 8.0);
    let mut base3 = ModelParams::bare(0.8, theta3, omega_c3);
    base3.n_factor = 16.0;
    let bias3 = linspace(-3.0, 3.0, n_grid);
    // Pump amplitudes up to 1.5 Delta (eps_d / omega_d up to 4): the window
    // where the low-transmission stripe stays inside the scanned bias range.
    // Far beyond it the drive suppresses absorption everywhere and the
    // bright/dark split degenerates.
    let amps3 = linspace(0.0, 1.5, n_grid);
    let map3 = driven_map(&base3, omega_p3, bias3, amps3, omega_d3);

    // The effective-bias contour partitions transmission: cells well outside
    // the 2 theta band transmit strictly better than cells well inside.
    let mut bright_min = f64::INFINITY;
    let mut dark_max = f64::NEG_INFINITY;
    for (vrow, erow) in map3.values.iter().zip(&map3.eps_eff) {
        for (&v, &e) in vrow.iter().zip(erow) {
            if e.abs() >= 3.0 * theta3 {
                bright_min = bright_min.min(v);
            } else if e.abs() <= theta3 {
                dark_max = dark_max.max(v);
            }
        }
    }
    let contour_ok = bright_min > dark_max;
    // V shape: the low-transmission stripe |eps_eff| < 2 theta widens with
    // pump amplitude.
    let widths: Vec<usize> = map3
        .eps_eff
        .iter()
        .map(|erow| erow.iter().filter(|e| e.abs() < 2.0 * theta3).count())
        .collect();
    let v_shape = widths.windows(2).all(|w| w[1] >= w[0])
        && widths.last().unwrap() > widths.first().unwrap()
        && *widths.last().unwrap() < n_grid;

    let pass = cdt_column_ok && cdt_row_ok && dips_found[0] && dips_found[1] && contour_ok && v_shape;
    report(
        7,
        "transmission-map regression",
        pass,
        &format!(
            "driven map: zero-bias maximum at ratio {ratio_of_max:.3} (J0 zero {J0_ZERO:.3}, \
             +-2 cells), in-row maximum at bias {bias_of_max:.3} (+-2 cells), dips near \
             -+ one pump quantum at bias/omega_d = [{:.3}, {:.3}] with contrast: {dips_found:?}; \
             strong-coupling map: bright/dark separation {bright_min:.3} > {dark_max:.3} \
             across the effective-bias contour, stripe width {} -> {} cells",
            dip_pos[0],
            dip_pos[1],
            widths.first().unwrap(),
            widths.last().unwrap()
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 8. Fit closed loop on the two weak-to-intermediate coupling devices.
// ---------------------------------------------------------------------------

struct ClosedLoop {
    alpha: f64,
    delta: f64,
    n_factor: f64,
    grid_lo: f64,
    grid_hi: f64,
    n_points: usize,
}

fn closed_loop_medians(cfg: &ClosedLoop, seeds: u64) -> ([f64; 3], [f64; 3]) {
    let theta = units::temp_mk(90.0, 1.0); // GHz; reference unit is plain GHz here
    let freqs = linspace(cfg.grid_lo, cfg.grid_hi, cfg.n_points);
    let mut clean = SpectrumData::new_static(
        freqs
            .iter()
            .map(|&w| SpectrumPoint {
                omega_p: w,
                t_sq: 0.0,
                weight: 1.0,
            })
            .collect(),
        theta,
        65.0,
    );
    let model = model_t_sq(cfg.alpha, cfg.delta, cfg.n_factor, &clean, FitPath::Analytic).unwrap();
    for (p, m) in clean.points.iter_mut().zip(model) {
        p.t_sq = m;
    }

    // Noise-free sanity: exact recovery.
    let exact = fit_spectrum(
        &clean,
        (cfg.alpha * 1.2, cfg.delta * 1.01, cfg.n_factor * 0.9),
        FitPath::Analytic,
    )
    .unwrap();
    let exact_gap = [
        rel(exact.alpha, cfg.alpha),
        rel(exact.delta, cfg.delta),
        rel(exact.n_factor, cfg.n_factor),
    ];

    let fits: Vec<[f64; 3]> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut noisy = clean.clone();
            for p in &mut noisy.points {
                let g: f64 = (0..12).map(|_| rng.random_range(0.0..1.0)).sum::<f64>() - 6.0;
                p.t_sq = (p.t_sq * (1.0 + 0.01 * g)).max(0.0);
            }
            // Closed-loop initialization: truth with a deterministic nudge,
            // staying on the physical coupling branch.
            let init = (
                cfg.alpha * (1.0 + 0.10 * rng.random_range(-1.0..1.0)),
                cfg.delta * (1.0 + 0.005 * rng.random_range(-1.0..1.0)),
                cfg.n_factor * (1.0 + 0.10 * rng.random_range(-1.0..1.0)),
            );
            let fit = fit_spectrum(&noisy, init, FitPath::Analytic).unwrap();
            [fit.alpha, fit.delta, fit.n_factor]
        })
        .collect();
    let median = |idx: usize| -> f64 {
        let mut v: Vec<f64> = fits.iter().map(|f| f[idx]).collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
    };
    ([median(0), median(1), median(2)], exact_gap)
}

#[test]
fn criterion_8_fit_closed_loop() {
    let t0 = Instant::now();
    let device1 = ClosedLoop {
        alpha: 0.007,
        delta: 4.04,
        n_factor: 0.03,
        grid_lo: 3.85,
        grid_hi: 4.2,
        n_points: 28,
    };
    let device2 = ClosedLoop {
        alpha: 0.21,
        delta: 7.23,
        n_factor: 1.1,
        grid_lo: 2.5,
        grid_hi: 7.5,
        n_points: 24,
    };
    let (med1, exact1) = closed_loop_medians(&device1, 50);
    let (med2, exact2) = closed_loop_medians(&device2, 50);

    let within = |med: [f64; 3], cfg: &ClosedLoop| -> [f64; 3] {
        [
            rel(med[0], cfg.alpha),
            rel(med[1], cfg.delta),
            rel(med[2], cfg.n_factor),
        ]
    };
    let w1 = within(med1, &device1);
    let w2 = within(med2, &device2);
    let noise_ok =
        w1[0] <= 0.20 && w1[1] <= 0.01 && w1[2] <= 0.10 && w2[0] <= 0.20 && w2[1] <= 0.01 && w2[2] <= 0.10;
    let exact_ok = exact1.iter().chain(&exact2).all(|&g| g <= 1e-4);

    let pass = noise_ok && exact_ok;
    report(
        8,
        "fit closed loop",
        pass,
        &format!(
            "medians over 50 seeds at 1% noise: weak device (alpha {:.1e}, delta {:.1e}, \
             N {:.1e}), intermediate device (alpha {:.1e}, delta {:.1e}, N {:.1e}) \
             within (0.20, 0.01, 0.10); noise-free recovery worst {:.1e} <= 1e-4",
            w1[0],
            w1[1],
            w1[2],
            w2[0],
            w2[1],
            w2[2],
            exact1
                .iter()
                .chain(&exact2)
                .cloned()
                .fold(0.0f64, f64::max)
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 9. Numerical hygiene: convergence order, quadrature stability, determinism.
// ---------------------------------------------------------------------------
#[test]
fn criterion_9_numerical_hygiene() {
    let t0 = Instant::now();

    // (a) Step-halving order of the integro-differential solver.
    let p = ModelParams::bare(0.01, 0.5, 10.0);
    let sol =
        |h: f64| solve_gme_with_step(1.0, 10.0, &p, KernelMode::PumpAveraged, h).unwrap();
    let fine = sol(0.0025);
    let err_of = |traj: &sbx_core::dynamics::Trajectory| -> f64 {
        traj.t
            .iter()
            .zip(&traj.p)
            .map(|(&t, &v)| (v - fine.sample(t)).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err_of(&sol(0.04)), err_of(&sol(0.02)));
    let order = (e1 / e2).log2();

    // (b) Doubling the quadrature resolution moves the kernels by < 1e-6.
    let fine_policy = QuadPolicy {
        panels_per_period: 20.0,
        min_panels: 80,
        ..QuadPolicy::default()
    };
    let mut worst_quad: f64 = 0.0;
    for (alpha, theta, eps0) in [
        (0.2, 0.5, 0.3),
        (0.1, 0.3, 0.0),
        (0.6, 0.5, 0.5),
        (0.05, 1.0, -0.7),
    ] {
        let pm = ModelParams::bare(alpha, theta, 10.0).with_eps0(eps0);
        let a = NumericKernels::build(&pm, &QuadPolicy::default(), 1.0).unwrap();
        let b = NumericKernels::build(&pm, &fine_policy, 1.0).unwrap();
        worst_quad = worst_quad
            .max(rel(a.k_plus0().unwrap(), b.k_plus0().unwrap()))
            .max(rel(a.k_minus0().unwrap(), b.k_minus0().unwrap()))
            .max(rel(
                a.k_plus_iw(0.7).unwrap().norm(),
                b.k_plus_iw(0.7).unwrap().norm(),
            ))
            .max(rel(a.h_plus(0.7).unwrap().norm(), b.h_plus(0.7).unwrap().norm()))
            .max(rel(
                a.h_minus(0.7).unwrap().norm(),
                b.h_minus(0.7).unwrap().norm(),
            ));
    }

    // (c) Determinism: identical inputs give byte-identical outputs.
    let ta = sol(0.02);
    let tb = sol(0.02);
    let solver_det = ta.p == tb.p && ta.t == tb.t;
    let freqs = linspace(2.5, 7.5, 24);
    let theta_fit = units::temp_mk(90.0, 1.0);
    let mut data = SpectrumData::new_static(
        freqs
            .iter()
            .map(|&w| SpectrumPoint {
                omega_p: w,
                t_sq: 0.0,
                weight: 1.0,
            })
            .collect(),
        theta_fit,
        65.0,
    );
    let model = model_t_sq(0.21, 7.23, 1.1, &data, FitPath::Analytic).unwrap();
    for (pt, m) in data.points.iter_mut().zip(model) {
        pt.t_sq = m;
    }
    let fa = fit_spectrum(&data, (0.18, 7.0, 1.0), FitPath::Analytic).unwrap();
    let fb = fit_spectrum(&data, (0.18, 7.0, 1.0), FitPath::Analytic).unwrap();
    let fit_det = fa.alpha.to_bits() == fb.alpha.to_bits()
        && fa.delta.to_bits() == fb.delta.to_bits()
        && fa.n_factor.to_bits() == fb.n_factor.to_bits();

    let pass = order >= 1.9 && worst_quad < 1e-6 && solver_det && fit_det;
    report(
        9,
        "numerical hygiene",
        pass,
        &format!(
            "step-halving order {order:.2} >= 1.9; quadrature doubling worst shift \
             {worst_quad:.1e} < 1e-6; solver determinism {solver_det}, fit determinism {fit_det}"
        ),
        t0,
    );
}

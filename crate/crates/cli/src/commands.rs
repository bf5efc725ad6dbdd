//! The seven subcommands. Each resolves its inputs from [`Config`], runs the
//! model layer (grid sweeps in parallel, results assembled in index order),
//! writes its artifact, and finishes with the `run.json` provenance echo.

use rayon::prelude::*;
use serde_json::json;

use sbx_core::dynamics::{solve_gme, solve_gme_with_step, KernelMode};
use sbx_core::fit::{fit_spectrum, scan_match, FitPath, SpectrumData, SpectrumPoint};
use sbx_core::kernels::Kernels;
use sbx_core::params::{units, ModelParams};
use sbx_core::phase::{boundary, boundary_curve};
use sbx_core::response::{backend_for, transmission, ChiPath};

use crate::config::{AxisUnit, Config, Grid};
use crate::output::{write_csv, write_json, write_run_json};
use crate::{io_err, with_context, CliError};

/// Internal-unit echo of the resolved model, for `run.json`.
fn derived_model(p: &ModelParams, unit: AxisUnit, cfg: &Config) -> serde_json::Value {
    json!({
        "alpha": p.bath.alpha,
        "theta": p.bath.theta,
        "omega_c": p.bath.omega_c,
        "eps0": p.qubit.eps0,
        "eps_d": p.drive.eps_d,
        "omega_d": p.drive.omega_d,
        "eps_p": p.drive.eps_p,
        "omega_p": p.drive.omega_p,
        "n_factor": p.n_factor,
        "method": p.bath.method.name(),
        "axis_units": unit.name(),
        "delta_ghz": cfg.lab_ref().expect("validated during resolution"),
    })
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

pub fn dynamics(cfg: &Config) -> Result<(), CliError> {
    let params = cfg.model_params(true)?;
    let unit = cfg.axis_unit()?;
    let p_init = cfg.f64_opt("dynamics", "p_init")?.unwrap_or(1.0);
    let t_end = cfg.f64_req("dynamics", "t_end")?;
    let mode = match cfg.get("dynamics", "mode") {
        Some(m) => KernelMode::from_name(m)?,
        None => KernelMode::PumpAveraged,
    };
    let traj = match cfg.f64_opt("dynamics", "step")? {
        Some(h) => solve_gme_with_step(p_init, t_end, &params, mode, h)?,
        None => solve_gme(p_init, t_end, &params, mode)?,
    };
    // The time column stays in internal units (1/Delta as an angular
    // frequency) even in lab mode; run.json carries the reference.
    let rows = traj.t.iter().zip(&traj.p).map(|(&t, &p)| vec![t, p]);
    let out = write_csv(&cfg.out_dir, "dynamics.csv", "t,p", rows)?;
    write_run_json(
        cfg,
        "dynamics",
        json!({
            "model": derived_model(&params, unit, cfg),
            "p_init": p_init,
            "t_end": t_end,
            "step": traj.diagnostics.step,
            "kernel_mode": mode.name(),
        }),
        &[out],
    )
}

// ---------------------------------------------------------------------------
// chi
// ---------------------------------------------------------------------------

pub fn chi(cfg: &Config) -> Result<(), CliError> {
    let params = cfg.model_params(true)?;
    let unit = cfg.axis_unit()?;
    let policy = cfg.quad_policy()?;
    let path = ChiPath::from_name(cfg.get("response", "path").unwrap_or("exact"))?;
    let grid = cfg.grid_req("omega_p")?;
    let w_max = grid.values.iter().cloned().fold(0.0f64, f64::max);
    let scale = w_max.max(params.qubit.eps0.abs()).max(1.0);
    let k = backend_for(path, &params, &policy, scale)?;
    let mut rows = Vec::with_capacity(grid.values.len());
    for &w in &grid.values {
        let chi = with_context(path.eval(k.as_ref(), w), || {
            format!("at grid point {} = {}", grid.key, unit.freq_out(w))
        })?;
        let t = transmission(params.n_factor, w, chi);
        rows.push(vec![
            unit.freq_out(w),
            unit.chi_out(chi.re),
            unit.chi_out(chi.im),
            t.re,
            t.im,
            t.norm_sqr(),
        ]);
    }
    let out = write_csv(
        &cfg.out_dir,
        "chi.csv",
        "omega_p,re_chi,im_chi,re_t,im_t,abs_t_sq",
        rows.into_iter(),
    )?;
    write_run_json(
        cfg,
        "chi",
        json!({
            "model": derived_model(&params, unit, cfg),
            "response_path": path.name(),
            "axis": grid.key,
            "points": grid.values.len(),
        }),
        &[out],
    )
}

// ---------------------------------------------------------------------------
// map
// ---------------------------------------------------------------------------

pub fn map(cfg: &Config) -> Result<(), CliError> {
    let params = cfg.model_params(true)?;
    let unit = cfg.axis_unit()?;
    let policy = cfg.quad_policy()?;
    let path = ChiPath::from_name(cfg.get("response", "path").unwrap_or("exact"))?;
    let y_kind = cfg.get("map", "y").ok_or_else(|| {
        CliError::Config("missing `[map] y = omega_p | power_db`".to_string())
    })?;
    let x = cfg.grid_req("eps0")?;
    let x_abs_max = x.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // values[j][i] = |T|^2 at (x_i, y_j); emitted row-major over y then x.
    let (y, values): (Grid, Vec<Vec<f64>>) = match y_kind {
        "omega_p" => {
            let y = cfg.grid_req("omega_p")?;
            let w_max = y.values.iter().cloned().fold(0.0f64, f64::max);
            let scale = w_max.max(x_abs_max).max(1.0);
            let base = backend_for(path, &params, &policy, scale)?;
            // One backend per bias column; columns are independent.
            let columns: Vec<Vec<f64>> = x
                .values
                .par_iter()
                .map(|&e0| -> Result<Vec<f64>, CliError> {
                    let kb = with_context(base.at_bias(e0), || {
                        format!("at grid point {} = {}", x.key, unit.freq_out(e0))
                    })?;
                    y.values
                        .iter()
                        .map(|&w| {
                            let chi = with_context(path.eval(kb.as_ref(), w), || {
                                format!(
                                    "at grid point ({} = {}, {} = {})",
                                    x.key,
                                    unit.freq_out(e0),
                                    y.key,
                                    unit.freq_out(w)
                                )
                            })?;
                            Ok(transmission(params.n_factor, w, chi).norm_sqr())
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            let values = (0..y.values.len())
                .map(|j| (0..x.values.len()).map(|i| columns[i][j]).collect())
                .collect();
            (y, values)
        }
        "power_db" => {
            // dB of (eps_d / Delta)^2; each row is one pump amplitude and
            // needs its own kernel build.
            let y = cfg.grid_req("power_db")?;
            let omega_p = cfg.freq_req("probe", "omega_p")?;
            let omega_d = cfg.freq_opt("drive", "omega_d")?.ok_or_else(|| {
                CliError::Config(
                    "a power_db map needs `drive.omega_d` (or `omega_d_ghz`)".to_string(),
                )
            })?;
            let scale = omega_p.max(x_abs_max).max(1.0);
            let values: Vec<Vec<f64>> = y
                .values
                .par_iter()
                .map(|&db| -> Result<Vec<f64>, CliError> {
                    let eps_d = units::amp_from_db(db, 1.0);
                    let mut p = params.clone();
                    p.drive.eps_d = 0.0;
                    if eps_d != 0.0 {
                        p = p.with_drive(eps_d, omega_d);
                    }
                    let k = with_context(backend_for(path, &p, &policy, scale), || {
                        format!("at grid row power_db = {db}")
                    })?;
                    x.values
                        .iter()
                        .map(|&e0| {
                            let point = || {
                                format!(
                                    "at grid point ({} = {}, power_db = {db})",
                                    x.key,
                                    unit.freq_out(e0)
                                )
                            };
                            let kb = with_context(k.at_bias(e0), point)?;
                            let chi = with_context(path.eval(kb.as_ref(), omega_p), point)?;
                            Ok(transmission(params.n_factor, omega_p, chi).norm_sqr())
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            (y, values)
        }
        other => {
            return Err(CliError::Config(format!(
                "[map] y = {other}: expected `omega_p` or `power_db`"
            )))
        }
    };

    let y_is_db = y.key == "power_db";
    let rows = values.iter().enumerate().flat_map(|(j, row)| {
        let yv = if y_is_db {
            y.values[j]
        } else {
            unit.freq_out(y.values[j])
        };
        let x = &x;
        row.iter()
            .enumerate()
            .map(move |(i, &t2)| vec![unit.freq_out(x.values[i]), yv, t2])
    });
    let out = write_csv(&cfg.out_dir, "map.csv", "x,y,abs_t_sq", rows)?;
    write_run_json(
        cfg,
        "map",
        json!({
            "model": derived_model(&params, unit, cfg),
            "response_path": path.name(),
            "x_axis": x.key,
            "y_axis": y.key,
            "nx": x.values.len(),
            "ny": y.values.len(),
        }),
        &[out],
    )
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

pub fn rates(cfg: &Config) -> Result<(), CliError> {
    let params = cfg.model_params(true)?;
    let unit = cfg.axis_unit()?;
    let policy = cfg.quad_policy()?;
    let axis = cfg.get("rates", "axis").unwrap_or("eps0");
    // Rate columns share the frequency unit of the axis output.
    let row_for = |k: &dyn Kernels, x_out: f64| -> sbx_core::Result<Vec<f64>> {
        let r = k.rates()?;
        let eps_eff = k
            .eff_bias()
            .unwrap_or(f64::INFINITY * k.p0().map(f64::signum).unwrap_or(1.0));
        Ok(vec![
            x_out,
            unit.freq_out(r.forward),
            unit.freq_out(r.backward),
            unit.freq_out(eps_eff),
            k.p0()?,
            unit.freq_out(k.gamma_d()?),
        ])
    };
    let rows: Vec<Vec<f64>> = match axis {
        "eps0" => {
            let g = cfg.grid_req("eps0")?;
            let x_abs = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let base = backend_for(ChiPath::ExactNiba, &params, &policy, x_abs.max(1.0))?;
            g.values
                .iter()
                .map(|&e0| {
                    let point = || format!("at grid point {} = {}", g.key, unit.freq_out(e0));
                    let kb = with_context(base.at_bias(e0), point)?;
                    with_context(row_for(kb.as_ref(), unit.freq_out(e0)), point)
                })
                .collect::<Result<_, _>>()?
        }
        "eps_d" | "power_db" => {
            let g = if axis == "eps_d" {
                cfg.grid_req("eps_d")?
            } else {
                cfg.grid_req("power_db")?
            };
            let omega_d = cfg.freq_opt("drive", "omega_d")?.ok_or_else(|| {
                CliError::Config(format!(
                    "a pump-amplitude rate sweep needs `drive.omega_d` (axis = {axis})"
                ))
            })?;
            let scale = params.qubit.eps0.abs().max(1.0);
            g.values
                .par_iter()
                .map(|&v| -> Result<Vec<f64>, CliError> {
                    let eps_d = if axis == "eps_d" {
                        v
                    } else {
                        units::amp_from_db(v, 1.0)
                    };
                    let x_out = if axis == "eps_d" { unit.freq_out(v) } else { v };
                    let mut p = params.clone();
                    p.drive.eps_d = 0.0;
                    if eps_d != 0.0 {
                        p = p.with_drive(eps_d, omega_d);
                    }
                    let point = || format!("at grid point {} = {x_out}", g.key);
                    let k =
                        with_context(backend_for(ChiPath::ExactNiba, &p, &policy, scale), point)?;
                    with_context(row_for(k.as_ref(), x_out), point)
                })
                .collect::<Result<_, _>>()?
        }
        other => {
            return Err(CliError::Config(format!(
                "[rates] axis = {other}: expected `eps0`, `eps_d`, or `power_db`"
            )))
        }
    };
    let out = write_csv(
        &cfg.out_dir,
        "rates.csv",
        "x,k_forward,k_backward,eps_eff,p0,gamma_d",
        rows.into_iter(),
    )?;
    write_run_json(
        cfg,
        "rates",
        json!({
            "model": derived_model(&params, unit, cfg),
            "axis": axis,
        }),
        &[out],
    )
}

// ---------------------------------------------------------------------------
// phase
// ---------------------------------------------------------------------------

pub fn phase(cfg: &Config) -> Result<(), CliError> {
    // The boundary curve is a theory object in internal units; the coupling
    // is the swept axis and temperature is the output, so the model section
    // only contributes the bath cutoff.
    let omega_c = cfg.freq_req("model", "omega_c")?;
    let method = cfg.get("phase", "method").unwrap_or("lineshape");
    let strat = boundary(method)?;
    let alphas = cfg.grid_opt("alpha")?;
    let curve = boundary_curve(
        1.0,
        omega_c,
        alphas.as_ref().map(|g| g.values.as_slice()),
        strat,
    )?;
    let rows = curve.iter().map(|pt| {
        vec![
            pt.alpha,
            pt.theta_star.unwrap_or(f64::NAN),
            pt.omega_star.unwrap_or(f64::NAN),
            pt.gamma.unwrap_or(f64::NAN),
        ]
    });
    let out = write_csv(
        &cfg.out_dir,
        "phase.csv",
        "alpha,theta_star,omega_star,gamma",
        rows,
    )?;
    write_run_json(
        cfg,
        "phase",
        json!({
            "omega_c": omega_c,
            "boundary_method": method,
            "points": curve.len(),
            "axis_units": "internal",
        }),
        &[out],
    )
}

// ---------------------------------------------------------------------------
// fit / scan
// ---------------------------------------------------------------------------

/// Read a transmission cut: header `omega_p_ghz,t_sq[,weight]`, `#` comment
/// lines, and optional per-cut directives `# eps0_ghz = v`, `# eps_d_ghz = v`,
/// `# omega_d_ghz = v` describing the acquisition settings.
fn read_spectrum(
    cfg: &Config,
    rel_path: &str,
    theta_ghz: f64,
    omega_c_ghz: f64,
) -> Result<SpectrumData, CliError> {
    let path = cfg.data_path(rel_path);
    let text =
        std::fs::read_to_string(&path).map_err(|e| io_err("cannot read spectrum", &path, e))?;
    let name = path.display();
    let mut points = Vec::new();
    let mut eps0 = 0.0;
    let mut eps_d = 0.0;
    let mut omega_d = 0.0;
    let mut header_seen = false;
    let mut has_weight = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                let slot = match k.trim() {
                    "eps0_ghz" => Some(&mut eps0),
                    "eps_d_ghz" => Some(&mut eps_d),
                    "omega_d_ghz" => Some(&mut omega_d),
                    _ => None, // plain comment
                };
                if let Some(slot) = slot {
                    *slot = v.trim().parse().map_err(|_| {
                        CliError::Config(format!(
                            "{name}:{lineno}: directive `{}` is not a number",
                            rest.trim()
                        ))
                    })?;
                }
            }
            continue;
        }
        if !header_seen {
            has_weight = match line {
                "omega_p_ghz,t_sq" => false,
                "omega_p_ghz,t_sq,weight" => true,
                _ => {
                    return Err(CliError::Config(format!(
                        "{name}:{lineno}: expected header `omega_p_ghz,t_sq[,weight]`, got `{line}`"
                    )))
                }
            };
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if has_weight { 3 } else { 2 };
        if fields.len() != expected {
            return Err(CliError::Config(format!(
                "{name}:{lineno}: expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Config(format!("{name}:{lineno}: `{s}` is not a number")))
        };
        points.push(SpectrumPoint {
            omega_p: num(fields[0])?,
            t_sq: num(fields[1])?,
            weight: if has_weight { num(fields[2])? } else { 1.0 },
        });
    }
    if !header_seen {
        return Err(CliError::Config(format!("{name}: empty spectrum file")));
    }
    Ok(SpectrumData {
        points,
        theta: theta_ghz,
        omega_c: omega_c_ghz,
        eps0,
        eps_d,
        omega_d,
    })
}

/// Acquisition-frame context shared by `fit` and `scan`: the spectrum files
/// are in GHz by contract, so the temperature and cutoff come from the lab
/// keys directly (the splitting is a fit parameter, not a unit reference).
fn ghz_frame(cfg: &Config) -> Result<(f64, f64), CliError> {
    let theta = match cfg.f64_opt("model", "temp_mk")? {
        Some(mk) => units::temp_mk(mk, 1.0),
        None => {
            return Err(CliError::Config(
                "fitting needs `model.temp_mk` (spectrum files are in GHz)".to_string(),
            ))
        }
    };
    let omega_c = cfg.f64_req("model", "omega_c_ghz")?;
    Ok((theta, omega_c))
}

fn parse_list(cfg: &Config, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    match cfg.get(section, key) {
        None => Ok(None),
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    CliError::Config(format!("[{section}] {key}: `{s}` is not a number"))
                })
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(Some),
    }
}

pub fn fit(cfg: &Config) -> Result<(), CliError> {
    let (theta, omega_c) = ghz_frame(cfg)?;
    let spectrum = cfg.get("fit", "spectrum").ok_or_else(|| {
        CliError::Config("missing `[fit] spectrum = <csv file>`".to_string())
    })?;
    let data = read_spectrum(cfg, spectrum, theta, omega_c)?;
    let path = FitPath::from_name(cfg.get("fit", "path").unwrap_or("analytic"))?;
    let init_alpha = cfg.f64_req("fit", "init_alpha")?;
    let init_delta = match (
        cfg.f64_opt("fit", "init_delta_ghz")?,
        cfg.f64_opt("fit", "init_delta")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "[fit]: give either `init_delta_ghz` or `init_delta`, not both".to_string(),
            ))
        }
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => {
            return Err(CliError::Config(
                "missing `[fit] init_delta_ghz` (starting splitting, GHz)".to_string(),
            ))
        }
    };
    let init_n = cfg.f64_req("fit", "init_n")?;
    let r = with_context(
        fit_spectrum(&data, (init_alpha, init_delta, init_n), path),
        || format!("fitting `{spectrum}`"),
    )?;
    let doc = json!({
        "alpha": r.alpha,
        "delta_ghz": r.delta,
        "n_factor": r.n_factor,
        "residual": r.residual,
        "sensitivity": r.sensitivity,
        "iterations": r.iterations,
        "fit_path": path.name(),
        "spectrum": spectrum,
        "points": data.points.len(),
    });
    let out = write_json(&cfg.out_dir, "fit.json", &doc)?;
    write_run_json(
        cfg,
        "fit",
        json!({
            "theta_ghz": theta,
            "omega_c_ghz": omega_c,
            "init": [init_alpha, init_delta, init_n],
            "fit_path": path.name(),
            "axis_units": "ghz",
        }),
        &[out],
    )
}

pub fn scan(cfg: &Config) -> Result<(), CliError> {
    let (theta, omega_c) = ghz_frame(cfg)?;
    let spectra = cfg.get("scan", "spectra").ok_or_else(|| {
        CliError::Config("missing `[scan] spectra = <csv>[, <csv>...]`".to_string())
    })?;
    let cuts: Vec<SpectrumData> = spectra
        .split(',')
        .map(|s| read_spectrum(cfg, s.trim(), theta, omega_c))
        .collect::<Result<_, _>>()?;
    let deltas = match (
        parse_list(cfg, "scan", "delta_ghz")?,
        parse_list(cfg, "scan", "delta")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "[scan]: give either `delta_ghz` or `delta`, not both".to_string(),
            ))
        }
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => {
            return Err(CliError::Config(
                "missing `[scan] delta_ghz = v1, v2, ...` (candidate splittings)".to_string(),
            ))
        }
    };
    let n_box = parse_list(cfg, "scan", "n_factor")?.ok_or_else(|| {
        CliError::Config("missing `[scan] n_factor = v1, v2, ...`".to_string())
    })?;
    let path = FitPath::from_name(cfg.get("scan", "path").unwrap_or("numeric"))?;
    let entries = with_context(scan_match(&cuts, &deltas, &n_box, path), || {
        format!("scanning `{spectra}`")
    })?;
    let doc = json!({
        "entries": entries
            .iter()
            .map(|e| {
                json!({
                    "delta_ghz": e.delta,
                    "n_factor": e.n_factor,
                    "alpha": e.alpha,
                    "residual": e.residual,
                })
            })
            .collect::<Vec<_>>(),
        "fit_path": path.name(),
        "cuts": cuts.len(),
    });
    let out = write_json(&cfg.out_dir, "fit.json", &doc)?;
    write_run_json(
        cfg,
        "scan",
        json!({
            "theta_ghz": theta,
            "omega_c_ghz": omega_c,
            "delta_candidates_ghz": deltas,
            "n_candidates": n_box,
            "fit_path": path.name(),
            "axis_units": "ghz",
        }),
        &[out],
    )
}

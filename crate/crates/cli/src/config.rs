//! INI-style configuration: parsing, key validation, command-line overrides,
//! and resolution into internal model parameters.
//!
//! Unit convention: every energy-like quantity is an angular frequency in
//! units of the tunneling splitting (Δ = 1). Setting `model.delta_ghz`
//! switches the boundary to lab units: keys with a `_ghz` suffix are cyclic
//! frequencies in GHz (divided by `delta_ghz` on input), `model.temp_mk` is
//! a temperature in millikelvin, and swept axis columns are written back in
//! GHz. Without `delta_ghz`, only the suffix-free internal keys are valid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sbx_core::bath::CorrelationMethod;
use sbx_core::kernels::QuadPolicy;
use sbx_core::params::{units, ModelParams};

use crate::{io_err, CliError};

/// `(section, allowed keys)` — anything else is rejected with a diagnostic.
const SCHEMA: &[(&str, &[&str])] = &[
    (
        "model",
        &[
            "alpha",
            "delta_ghz",
            "theta",
            "temp_mk",
            "omega_c",
            "omega_c_ghz",
            "eps0",
            "eps0_ghz",
            "n_factor",
            "method",
        ],
    ),
    (
        "drive",
        &["eps_d", "eps_d_ghz", "power_db", "omega_d", "omega_d_ghz"],
    ),
    ("probe", &["omega_p", "omega_p_ghz", "eps_p"]),
    (
        "grid",
        &[
            "omega_p",
            "omega_p_ghz",
            "eps0",
            "eps0_ghz",
            "eps_d",
            "eps_d_ghz",
            "power_db",
            "alpha",
        ],
    ),
    ("map", &["y"]),
    ("dynamics", &["p_init", "t_end", "step", "mode"]),
    ("response", &["path"]),
    ("rates", &["axis"]),
    ("phase", &["method"]),
    (
        "fit",
        &[
            "spectrum",
            "path",
            "init_alpha",
            "init_delta",
            "init_delta_ghz",
            "init_n",
        ],
    ),
    ("scan", &["spectra", "path", "delta_ghz", "delta", "n_factor"]),
    (
        "quad",
        &["rel_tol", "panels_per_period", "min_panels", "max_doublings"],
    ),
    ("output", &["dir", "units"]),
    ("run", &["threads", "seed"]),
];

fn schema_keys(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, keys)| *keys)
}

/// A fully merged configuration (file plus `--set` overrides).
pub struct Config {
    /// `section -> key -> value`, exactly as written.
    values: BTreeMap<String, BTreeMap<String, String>>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Directory of the config file; relative data paths resolve against it.
    base_dir: PathBuf,
}

/// Axis values plus the label they are emitted under.
pub struct Grid {
    pub key: String,
    pub values: Vec<f64>,
}

impl Config {
    pub fn load(
        path: &str,
        sets: &[(String, String)],
        out_override: Option<String>,
        threads_flag: Option<usize>,
    ) -> Result<Config, CliError> {
        let p = Path::new(path);
        let text = std::fs::read_to_string(p).map_err(|e| io_err("cannot read config", p, e))?;
        let mut values: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CliError::Config(format!("{path}:{lineno}: unterminated section header"))
                })?;
                let name = name.trim();
                if schema_keys(name).is_none() {
                    return Err(CliError::Config(format!(
                        "{path}:{lineno}: unknown section `[{name}]`"
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{path}:{lineno}: expected `key = value`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let sec = section.clone().ok_or_else(|| {
                CliError::Config(format!("{path}:{lineno}: key `{key}` before any [section]"))
            })?;
            let allowed = schema_keys(&sec).expect("section validated above");
            if !allowed.contains(&key) {
                return Err(CliError::Config(format!(
                    "{path}:{lineno}: unknown key `{key}` in [{sec}] (known: {})",
                    allowed.join(", ")
                )));
            }
            values.entry(sec).or_default().insert(key.to_string(), value.to_string());
        }
        // Command-line overrides, validated against the same schema.
        for (sk, v) in sets {
            let (sec, key) = sk.split_once('.').expect("split in parse_args");
            let allowed = schema_keys(sec).ok_or_else(|| {
                CliError::Config(format!("--set: unknown section `{sec}`"))
            })?;
            if !allowed.contains(&key) {
                return Err(CliError::Config(format!(
                    "--set: unknown key `{key}` in [{sec}] (known: {})",
                    allowed.join(", ")
                )));
            }
            values
                .entry(sec.to_string())
                .or_default()
                .insert(key.to_string(), v.clone());
        }
        let mut cfg = Config {
            values,
            out_dir: PathBuf::new(),
            threads: threads_flag,
            base_dir: p.parent().unwrap_or(Path::new(".")).to_path_buf(),
        };
        if cfg.threads.is_none() {
            cfg.threads = cfg.parse_opt::<usize>("run", "threads")?;
        }
        cfg.out_dir = out_override
            .or_else(|| cfg.get("output", "dir").map(str::to_string))
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    /// Resolve a data-file path relative to the config file's directory.
    pub fn data_path(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Echo of every resolved key, for `run.json`.
    pub fn echo(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.values
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, v: &str) -> Result<T, CliError> {
        v.parse().map_err(|_| {
            CliError::Config(format!(
                "[{section}] {key} = {v}: not a valid {}",
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn parse_opt<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => self.parse(section, key, v).map(Some),
        }
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.parse_opt(section, key)
    }

    pub fn f64_req(&self, section: &str, key: &str) -> Result<f64, CliError> {
        self.f64_opt(section, key)?.ok_or_else(|| {
            CliError::Config(format!("missing required key `{key}` in [{section}]"))
        })
    }

    /// GHz reference frequency; `Some` switches the boundary to lab units.
    pub fn lab_ref(&self) -> Result<Option<f64>, CliError> {
        match self.f64_opt("model", "delta_ghz")? {
            Some(r) if r > 0.0 => Ok(Some(r)),
            Some(r) => Err(CliError::Config(format!(
                "[model] delta_ghz = {r}: must be positive"
            ))),
            None => Ok(None),
        }
    }

    /// A frequency-like scalar: `<base>_ghz` (lab) or `<base>` (internal).
    /// Exactly one spelling may be present.
    pub fn freq_opt(&self, section: &str, base: &str) -> Result<Option<f64>, CliError> {
        let ghz_key = format!("{base}_ghz");
        let lab = self.get(section, &ghz_key);
        let int = self.get(section, base);
        match (lab, int) {
            (Some(_), Some(_)) => Err(CliError::Config(format!(
                "[{section}]: give either `{base}` or `{ghz_key}`, not both"
            ))),
            (Some(v), None) => {
                let r = self.lab_ref()?.ok_or_else(|| {
                    CliError::Config(format!(
                        "[{section}] {ghz_key} needs `model.delta_ghz` to fix the unit"
                    ))
                })?;
                let f: f64 = self.parse(section, &ghz_key, v)?;
                Ok(Some(units::freq_ghz(f, r)))
            }
            (None, Some(v)) => Ok(Some(self.parse(section, base, v)?)),
            (None, None) => Ok(None),
        }
    }

    pub fn freq_req(&self, section: &str, base: &str) -> Result<f64, CliError> {
        self.freq_opt(section, base)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing required key `{base}` (or `{base}_ghz`) in [{section}]"
            ))
        })
    }

    /// Temperature: `model.temp_mk` (lab) or `model.theta` (internal).
    pub fn theta_opt(&self) -> Result<Option<f64>, CliError> {
        let mk = self.get("model", "temp_mk");
        let int = self.get("model", "theta");
        match (mk, int) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "[model]: give either `theta` or `temp_mk`, not both".to_string(),
            )),
            (Some(v), None) => {
                let r = self.lab_ref()?.ok_or_else(|| {
                    CliError::Config(
                        "[model] temp_mk needs `model.delta_ghz` to fix the unit".to_string(),
                    )
                })?;
                let t: f64 = self.parse("model", "temp_mk", v)?;
                Ok(Some(units::temp_mk(t, r)))
            }
            (None, Some(v)) => Ok(Some(self.parse("model", "theta", v)?)),
            (None, None) => Ok(None),
        }
    }

    /// Internal model parameters shared by the sweep subcommands.
    /// `need_theta = false` lets temperature-free runs (phase curves) omit it.
    pub fn model_params(&self, need_theta: bool) -> Result<ModelParams, CliError> {
        let alpha = self.f64_req("model", "alpha")?;
        let theta = match self.theta_opt()? {
            Some(t) => t,
            None if need_theta => {
                return Err(CliError::Config(
                    "missing temperature: set `model.theta` (internal) or `model.temp_mk` (lab)"
                        .to_string(),
                ))
            }
            // Placeholder for runs that never evaluate thermal kernels.
            None => 1.0,
        };
        let omega_c = self.freq_req("model", "omega_c")?;
        let mut p = ModelParams::bare(alpha, theta, omega_c);
        if let Some(e0) = self.freq_opt("model", "eps0")? {
            p = p.with_eps0(e0);
        }
        if let Some(n) = self.f64_opt("model", "n_factor")? {
            p.n_factor = n;
        }
        if let Some(m) = self.get("model", "method") {
            p = p.with_method(CorrelationMethod::from_name(m)?);
        }
        // Pump drive: amplitude as a frequency, or as dB of (eps_d/Delta)^2.
        let eps_d = match (self.freq_opt("drive", "eps_d")?, self.get("drive", "power_db")) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "[drive]: give either `eps_d`/`eps_d_ghz` or `power_db`, not both".to_string(),
                ))
            }
            (Some(e), None) => Some(e),
            (None, Some(v)) => {
                let db: f64 = self.parse("drive", "power_db", v)?;
                Some(units::amp_from_db(db, 1.0))
            }
            (None, None) => None,
        };
        if let Some(eps_d) = eps_d {
            if eps_d != 0.0 {
                let omega_d = self.freq_opt("drive", "omega_d")?.ok_or_else(|| {
                    CliError::Config(
                        "a pump amplitude needs `drive.omega_d` (or `omega_d_ghz`)".to_string(),
                    )
                })?;
                p = p.with_drive(eps_d, omega_d);
            }
        }
        // Probe tone (used by the dynamics solver; response sweeps set their
        // own probe frequency).
        if let Some(eps_p) = self.f64_opt("probe", "eps_p")? {
            p.drive.eps_p = eps_p;
            p.drive.omega_p = self.freq_req("probe", "omega_p")?;
        }
        p.validate()?;
        if let Some(msg) = p.cutoff_advisory() {
            log::warn!("{msg}");
        }
        Ok(p)
    }

    /// Quadrature policy with optional overrides.
    pub fn quad_policy(&self) -> Result<QuadPolicy, CliError> {
        let mut q = QuadPolicy::default();
        if let Some(v) = self.f64_opt("quad", "rel_tol")? {
            q.rel_tol = v;
        }
        if let Some(v) = self.f64_opt("quad", "panels_per_period")? {
            q.panels_per_period = v;
        }
        if let Some(v) = self.parse_opt::<usize>("quad", "min_panels")? {
            q.min_panels = v;
        }
        if let Some(v) = self.parse_opt::<usize>("quad", "max_doublings")? {
            q.max_doublings = v;
        }
        Ok(q)
    }

    /// Axis spec `lo:hi:count` under `[grid]`, as `<base>_ghz` or `<base>`.
    pub fn grid_opt(&self, base: &'static str) -> Result<Option<Grid>, CliError> {
        let ghz_key = format!("{base}_ghz");
        let (key, raw, lab): (String, &str, bool) =
            match (self.get("grid", &ghz_key), self.get("grid", base)) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(format!(
                        "[grid]: give either `{base}` or `{ghz_key}`, not both"
                    )))
                }
                (Some(v), None) => (ghz_key, v, true),
                (None, Some(v)) => (base.to_string(), v, false),
                (None, None) => return Ok(None),
            };
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "[grid] {key} = {raw}: expected `lo:hi:count`"
            )));
        }
        let lo: f64 = self.parse("grid", &key, parts[0].trim())?;
        let hi: f64 = self.parse("grid", &key, parts[1].trim())?;
        let n: usize = self.parse("grid", &key, parts[2].trim())?;
        if n == 0 || (n > 1 && !(hi > lo)) || !lo.is_finite() || !hi.is_finite() {
            return Err(CliError::Config(format!(
                "[grid] {key} = {raw}: need finite lo < hi and count >= 1"
            )));
        }
        let scale = if lab {
            let r = self.lab_ref()?.ok_or_else(|| {
                CliError::Config(format!(
                    "[grid] {key} needs `model.delta_ghz` to fix the unit"
                ))
            })?;
            1.0 / r
        } else {
            1.0
        };
        let values = (0..n)
            .map(|i| {
                let f = if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                };
                f * scale
            })
            .collect();
        Ok(Some(Grid { key, values }))
    }

    pub fn grid_req(&self, base: &'static str) -> Result<Grid, CliError> {
        self.grid_opt(base)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing axis `[grid] {base}` (or `{base}_ghz`) = lo:hi:count"
            ))
        })
    }

    /// Output unit for swept frequency axes: GHz when a lab reference is
    /// set (overridable via `output.units = internal|ghz`).
    pub fn axis_unit(&self) -> Result<AxisUnit, CliError> {
        let lab = self.lab_ref()?;
        match self.get("output", "units") {
            None => Ok(lab.map_or(AxisUnit::Internal, AxisUnit::Ghz)),
            Some("internal") => Ok(AxisUnit::Internal),
            Some("ghz") => lab.map(AxisUnit::Ghz).ok_or_else(|| {
                CliError::Config(
                    "[output] units = ghz needs `model.delta_ghz` to fix the unit".to_string(),
                )
            }),
            Some(v) => Err(CliError::Config(format!(
                "[output] units = {v}: expected `ghz` or `internal`"
            ))),
        }
    }
}

/// Unit for emitted frequency-like columns.
#[derive(Clone, Copy, PartialEq)]
pub enum AxisUnit {
    /// Angular frequencies in units of the tunneling splitting.
    Internal,
    /// Cyclic frequencies in GHz (carries the reference).
    Ghz(f64),
}

impl AxisUnit {
    /// Convert an internal angular frequency for output.
    pub fn freq_out(self, v: f64) -> f64 {
        match self {
            AxisUnit::Internal => v,
            AxisUnit::Ghz(r) => v * r,
        }
    }

    /// Convert a susceptibility (inverse frequency) for output.
    pub fn chi_out(self, v: f64) -> f64 {
        match self {
            AxisUnit::Internal => v,
            AxisUnit::Ghz(r) => v / r,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisUnit::Internal => "internal",
            AxisUnit::Ghz(_) => "ghz",
        }
    }
}

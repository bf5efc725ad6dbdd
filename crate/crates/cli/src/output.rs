//! Artifact emission: CSV tables and the `run.json` provenance echo.
//!
//! Every CSV has exactly one header line; floats carry 17 significant
//! digits so a re-read loses nothing. Rows are always written in grid
//! order, so identical configurations produce byte-identical files
//! regardless of worker count.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::Config;
use crate::{io_err, CliError};

/// 17 significant digits; non-finite values spelled out stably.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Write one CSV artifact; returns its file name for the `run.json` echo.
pub fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<String, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("cannot create", out_dir, e))?;
    let path = out_dir.join(name);
    let file = std::fs::File::create(&path).map_err(|e| io_err("cannot write", &path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut std::io::BufWriter<std::fs::File>, line: &str| {
        writeln!(w, "{line}").map_err(|e| io_err("cannot write", &path, e))
    };
    emit(&mut w, header)?;
    for row in rows {
        let line = row.iter().map(|&v| fmt_f(v)).collect::<Vec<_>>().join(",");
        emit(&mut w, &line)?;
    }
    w.flush().map_err(|e| io_err("cannot write", &path, e))?;
    Ok(name.to_string())
}

pub fn write_json(out_dir: &Path, name: &str, value: &Value) -> Result<String, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("cannot create", out_dir, e))?;
    let path: PathBuf = out_dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("JSON trees built here are serializable");
    std::fs::write(&path, text + "\n").map_err(|e| io_err("cannot write", &path, e))?;
    Ok(name.to_string())
}

/// The provenance echo written next to every artifact: subcommand, the
/// merged configuration exactly as resolved, derived quantities in internal
/// units, and the artifact list.
pub fn write_run_json(
    cfg: &Config,
    subcommand: &str,
    derived: Value,
    outputs: &[String],
) -> Result<(), CliError> {
    let doc = json!({
        "subcommand": subcommand,
        "config": cfg.echo(),
        "derived": derived,
        "outputs": outputs,
        "threads": cfg.threads,
        "seed": cfg.parse_opt::<u64>("run", "seed")?,
    });
    write_json(&cfg.out_dir, "run.json", &doc)?;
    Ok(())
}

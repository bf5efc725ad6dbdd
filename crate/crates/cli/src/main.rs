//! `sbx` — batch front end for the spin-boson response toolkit.
//!
//! Usage: `sbx <subcommand> --config FILE [--set section.key=value]...
//! [--threads N] [--out DIR]`
//!
//! Subcommands: `dynamics`, `chi`, `map`, `rates`, `phase`, `fit`, `scan`.
//! Every run writes the requested artifact (CSV or `fit.json`) plus a
//! `run.json` echoing the fully resolved configuration. Exit codes: 0 on
//! success, 2 for configuration/input errors, 3 for numerical failures.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use config::Config;

const USAGE: &str = "usage: sbx <subcommand> --config FILE [--set section.key=value]... \
                     [--threads N] [--out DIR]

subcommands:
  dynamics   population trajectory P(t)            -> dynamics.csv
  chi        susceptibility and transmission sweep -> chi.csv
  map        2-D |T|^2 grid                        -> map.csv
  rates      golden-rule rates along an axis       -> rates.csv
  phase      coherent/incoherent boundary curve    -> phase.csv
  fit        least-squares fit of a spectrum CSV   -> fit.json
  scan       candidate (delta, N) grid match       -> fit.json

exit codes: 0 success, 2 configuration error, 3 numerical error";

/// Errors surfaced to the user, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed command line, config file, or input data: exit 2.
    Config(String),
    /// Error from the model layer, tagged with grid/context info.
    Core {
        context: String,
        source: sbx_core::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => {
                if source.is_user_error() {
                    2
                } else {
                    3
                }
            }
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core { context, source } => {
                if context.is_empty() {
                    write!(f, "{source}")
                } else {
                    write!(f, "{context}: {source}")
                }
            }
        }
    }
}

impl From<sbx_core::Error> for CliError {
    fn from(source: sbx_core::Error) -> Self {
        CliError::Core {
            context: String::new(),
            source,
        }
    }
}

/// Attach grid-point or file context to a model-layer error.
pub fn with_context<T>(
    r: sbx_core::Result<T>,
    context: impl FnOnce() -> String,
) -> Result<T, CliError> {
    r.map_err(|source| CliError::Core {
        context: context(),
        source,
    })
}

pub fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{what} `{}`: {e}", path.display()))
}

/// Parsed command line.
struct Args {
    subcommand: String,
    config_path: String,
    sets: Vec<(String, String)>,
    threads: Option<usize>,
    out_dir: Option<String>,
}

fn parse_args(argv: &[String]) -> Result<Args, CliError> {
    let mut it = argv.iter();
    let subcommand = match it.next() {
        Some(s) if !s.starts_with('-') => s.clone(),
        _ => return Err(CliError::Config(format!("missing subcommand\n{USAGE}"))),
    };
    let known = ["dynamics", "chi", "map", "rates", "phase", "fit", "scan"];
    if !known.contains(&subcommand.as_str()) {
        return Err(CliError::Config(format!(
            "unknown subcommand `{subcommand}`\n{USAGE}"
        )));
    }
    let mut config_path = None;
    let mut sets = Vec::new();
    let mut threads = None;
    let mut out_dir = None;
    while let Some(flag) = it.next() {
        let mut value_for = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("flag {name} needs a value\n{USAGE}")))
        };
        match flag.as_str() {
            "--config" => config_path = Some(value_for("--config")?),
            "--set" => {
                let kv = value_for("--set")?;
                let (key, value) = kv.split_once('=').ok_or_else(|| {
                    CliError::Config(format!("--set expects section.key=value, got `{kv}`"))
                })?;
                // The key must name a section: split on the first dot.
                let (sec, k) = key.split_once('.').ok_or_else(|| {
                    CliError::Config(format!("--set expects section.key=value, got `{kv}`"))
                })?;
                sets.push((format!("{sec}.{k}"), value.to_string()));
            }
            "--threads" => {
                let v = value_for("--threads")?;
                let n: usize = v.parse().map_err(|_| {
                    CliError::Config(format!("--threads expects a positive integer, got `{v}`"))
                })?;
                if n == 0 {
                    return Err(CliError::Config("--threads must be >= 1".to_string()));
                }
                threads = Some(n);
            }
            "--out" => out_dir = Some(value_for("--out")?),
            other => {
                return Err(CliError::Config(format!(
                    "unknown flag `{other}`\n{USAGE}"
                )))
            }
        }
    }
    let config_path = config_path
        .ok_or_else(|| CliError::Config(format!("--config FILE is required\n{USAGE}")))?;
    Ok(Args {
        subcommand,
        config_path,
        sets,
        threads,
        out_dir,
    })
}

fn run(argv: &[String]) -> Result<(), CliError> {
    let args = parse_args(argv)?;
    if let Some(n) = args.threads {
        // A second initialization attempt (only possible in tests that call
        // this twice in-process) is harmless: the pool is already sized.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = Config::load(&args.config_path, &args.sets, args.out_dir, args.threads)?;
    match args.subcommand.as_str() {
        "dynamics" => commands::dynamics(&cfg),
        "chi" => commands::chi(&cfg),
        "map" => commands::map(&cfg),
        "rates" => commands::rates(&cfg),
        "phase" => commands::phase(&cfg),
        "fit" => commands::fit(&cfg),
        "scan" => commands::scan(&cfg),
        _ => unreachable!("subcommand validated in parse_args"),
    }
}

/// Model-layer warnings (e.g. parameter regimes at the edge of validity) go
/// to stderr; artifacts stay on disk only.
struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    match run(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn argument_grammar() {
        let a = parse_args(&argv(&[
            "chi",
            "--config",
            "c.ini",
            "--set",
            "model.alpha=0.2",
            "--threads",
            "4",
            "--out",
            "d",
        ]))
        .unwrap();
        assert_eq!(a.subcommand, "chi");
        assert_eq!(a.config_path, "c.ini");
        assert_eq!(a.sets, vec![("model.alpha".to_string(), "0.2".to_string())]);
        assert_eq!(a.threads, Some(4));
        assert_eq!(a.out_dir.as_deref(), Some("d"));

        assert!(parse_args(&argv(&["frobnicate", "--config", "c"])).is_err());
        assert!(parse_args(&argv(&["chi"])).is_err());
        assert!(parse_args(&argv(&["chi", "--config", "c", "--set", "noequals"])).is_err());
        assert!(parse_args(&argv(&["chi", "--config", "c", "--threads", "0"])).is_err());
        assert!(parse_args(&argv(&["chi", "--config", "c", "--bogus"])).is_err());
    }

    #[test]
    fn exit_codes_split_by_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let user = CliError::Core {
            context: String::new(),
            source: sbx_core::Error::BadData("x".into()),
        };
        assert_eq!(user.exit_code(), 2);
        let numeric = CliError::Core {
            context: "at grid point eps0 = 1".into(),
            source: sbx_core::Error::Convergence {
                what: "test",
                detail: "no".into(),
            },
        };
        assert_eq!(numeric.exit_code(), 3);
        assert!(numeric.to_string().contains("at grid point"));
    }
}

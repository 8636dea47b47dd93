//! `powerlaw`: command-line front end for the interaction-energy toolkit.
//!
//! Exit status: 0 on success, 1 for invalid input (bad flags, unreadable or
//! malformed files, arguments outside a routine's domain), 2 when a
//! numerical routine fails. Failures print `{"error", "message"}` JSON on
//! standard error.

mod commands;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "powerlaw", version, about = "Interaction energies under power-law potentials")]
pub struct Cli {
    /// Worker threads for the parallel routines (default: all cores).
    #[arg(long, global = true, env = "POWERLAW_THREADS")]
    threads: Option<usize>,
    /// Write the result here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// The initial or evaluated measure: a file, or the two-Dirac shorthand
/// `m delta_0 + (1-m) delta_1`.
#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct MeasureSource {
    /// JSON file `{"atoms": [[x, m], ...]}`.
    #[arg(long)]
    measure: Option<PathBuf>,
    #[arg(long, value_name = "M")]
    two_dirac: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

fn parse_lambda(s: &str) -> Result<Lambda, String> {
    match s {
        "inf" | "infinity" | "Inf" => Ok(Lambda::Infinite),
        _ => {
            let v: f64 = s.parse().map_err(|_| format!("expected a number or `inf`, got `{s}`"))?;
            if v >= 1.0 && v.is_finite() {
                Ok(Lambda::Finite(v))
            } else {
                Err("lambda must be at least 1".into())
            }
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Energy, steady-state residual and position gradient of a measure.
    Energy {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[command(flatten)]
        source: MeasureSource,
    },
    /// Transport distance between two measure files.
    Wasserstein {
        /// Exponent, or `inf` for the sup-distance.
        #[arg(long, value_parser = parse_lambda)]
        lambda: Lambda,
        a: PathBuf,
        b: PathBuf,
    },
    /// Integrate the gradient flow; emits time, energy, atom count.
    Simulate {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[command(flatten)]
        source: MeasureSource,
        /// Step size (default: 1e-3 * min(1, 1/V''(R))).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tmax: f64,
        #[arg(long, default_value_t = 1e-10)]
        residual_tol: f64,
        #[arg(long, default_value_t = 100)]
        snapshot_every: usize,
        /// Also write every snapshot as JSON lines to this file.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Multistart energy minimization over positions and masses.
    Minimize {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 8)]
        atoms: usize,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stability of the two-Dirac state, at one point or over a grid.
    Classify {
        #[arg(long, required_unless_present = "ps", conflicts_with = "ps")]
        p: Option<f64>,
        #[arg(long)]
        q: f64,
        #[arg(long, required_unless_present = "ms", conflicts_with = "ms")]
        m: Option<f64>,
        /// Comma-separated grid of p values.
        #[arg(long, value_delimiter = ',', requires = "ms")]
        ps: Option<Vec<f64>>,
        /// Comma-separated grid of m values.
        #[arg(long, value_delimiter = ',', requires = "ps")]
        ms: Option<Vec<f64>>,
    },
    /// Random check of the moment inequality, plus counterexamples to its
    /// weakened forms when n = 1.
    PropTest {
        #[arg(long)]
        n: u32,
        #[arg(long = "M", value_name = "M")]
        big_m: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant replacing 2 in the weakened variant.
        #[arg(long, default_value_t = 2.5)]
        weakened_c: f64,
    },
    /// Global search along a p grid, compared with the two-Dirac state.
    PhaseScan {
        #[arg(long)]
        q: f64,
        /// Comma-separated ascending p values.
        #[arg(long, value_delimiter = ',', required = true)]
        p_grid: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        atoms: usize,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// `g(q)`, `q*`, `p_lower(q)` and optionally `f(p)`.
    Thresholds {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        p: Option<f64>,
    },
}

/// What a command hands back for printing.
pub enum Output {
    Json(serde_json::Value),
    Text(String),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(powerlaw::Error),
    /// A NaN or infinity reached the output.
    NonFinite(&'static str),
}

impl From<powerlaw::Error> for CliError {
    fn from(e: powerlaw::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::NonFinite(_) => 2,
            _ => 1,
        }
    }

    fn report(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
            CliError::NonFinite(what) => ("non_finite_output", format!("{what} is not finite")),
        };
        json!({ "error": kind, "message": message })
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.report());
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.render().to_string().trim_end().to_owned())),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&CliError::Usage("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::Usage(e.to_string()));
        }
    }
    match commands::run(&cli.command, cli.format).and_then(|out| emit(out, cli.output.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn emit(out: Output, path: Option<&std::path::Path>) -> Result<(), CliError> {
    let text = match out {
        Output::Json(v) => {
            if has_null(&v) {
                return Err(CliError::NonFinite("a result value"));
            }
            let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
            s.push('\n');
            s
        }
        Output::Text(s) => s,
    };
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    match path {
        Some(p) => File::create(p).and_then(|mut f| f.write_all(text.as_bytes())).map_err(io_err),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(io_err),
    }
}

/// serde_json writes non-finite floats as `null`; optional fields are
/// omitted rather than nulled, so any `null` marks a numerical failure.
fn has_null(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Null => true,
        serde_json::Value::Array(a) => a.iter().any(has_null),
        serde_json::Value::Object(o) => o.values().any(has_null),
        _ => false,
    }
}

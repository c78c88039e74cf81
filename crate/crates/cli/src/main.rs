use clap::{Parser, Subcommand, ValueEnum};
use multistate::backward::{fmt_num, kolmogorov_solve, thiele_residual, thiele_solve, ReserveField, SolveOptions};
use multistate::compare::{
    compare_models, prune_irrelevant, set_initial_distribution, transform_cemetery,
    transform_reserve_dependent, transform_shorten,
};
use multistate::io::{load_model, model_to_json, parse_model, paths_to_csv};
use multistate::model::{validate_model, Model};
use multistate::simulate::{simulate_paths, with_pool, SimConfig};
use multistate::Error;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Multi-state insurance models: validation, simulation, probabilities,
/// reserves and basis comparison.
///
/// Exit status: 0 on success, 1 on invalid input, failed validation or an
/// unmet precondition, 2 on an internal error.
#[derive(Parser)]
#[command(name = "multistate", version)]
struct Cli {
    /// Load models that fail validation (cycles of unbounded rates are
    /// still refused).
    #[arg(long, global = true)]
    allow_invalid: bool,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel parts; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print the validation report as JSON.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Simulate paths and dump one CSV row per jump.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Defaults to the model horizon.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Transition probabilities `P(Z(T) = k | Z(t) = i)`.
    Prob {
        #[arg(long)]
        model: PathBuf,
        /// Target state `k`.
        #[arg(long)]
        target: usize,
        /// Target time `T`.
        #[arg(long)]
        at: f64,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Report only this starting state (needs `--time`).
        #[arg(long, requires = "time")]
        state: Option<usize>,
        #[arg(long, requires = "state")]
        time: Option<f64>,
    },
    /// State-wise prospective reserves. Reserve-dependent payments are
    /// made explicit first.
    Reserve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, requires = "time")]
        state: Option<usize>,
        #[arg(long, requires = "state")]
        time: Option<f64>,
    },
    /// Compare basis `b` against basis `a` and print a JSON report.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
    },
    /// Apply a reserve-preserving transformation and print the new model.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        name: TransformName,
        /// Kept states, comma separated.
        #[arg(long, value_delimiter = ',')]
        z0: Vec<usize>,
        /// New initial distribution for `alpha`, comma separated.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// Step used when the transformation needs reserves.
        #[arg(long, default_value_t = 0.01)]
        h: f64,
    },
    /// Path-wise residual of the solved reserves along simulated paths.
    Residual {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Quadrature cell length.
        #[arg(long)]
        cell: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformName {
    Alpha,
    Prune,
    Shorten,
    Cemetery,
    ReserveDependent,
}

fn point_csv(field: &ReserveField, state: usize, time: f64) -> Result<String, Error> {
    let v = field.value(state, time)?;
    Ok(format!("state,time,value\n{state},{},{}\n", fmt_num(time), fmt_num(v)))
}

fn field_report(field: &ReserveField, point: Option<(usize, f64)>) -> Result<String, Error> {
    match point {
        Some((s, t)) => point_csv(field, s, t),
        None => Ok(field.to_csv()),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Internal(format!("report serialization: {e}")))
}

#[derive(Serialize)]
struct ResidualSummary {
    paths: usize,
    max_abs: f64,
    max_per_unit_time: f64,
    worst_path: usize,
}

fn residual(model: &Model, n: usize, seed: u64, h: f64, cell: Option<f64>, threads: usize) -> Result<String, Error> {
    let explicit = transform_reserve_dependent(model)?;
    let field = thiele_solve(&explicit, &SolveOptions::new(h))?;
    let config = SimConfig::new(n, seed, model.horizon).with_threads(threads);
    let paths = simulate_paths(&explicit, &config)?;
    let mut summary = ResidualSummary {
        paths: n,
        max_abs: 0.0,
        max_per_unit_time: 0.0,
        worst_path: 0,
    };
    for (id, p) in paths.iter().enumerate() {
        let r = thiele_residual(model, &field, p, model.horizon, cell)?;
        summary.max_abs = summary.max_abs.max(r.max_abs);
        if r.per_unit_time > summary.max_per_unit_time || id == 0 {
            summary.max_per_unit_time = r.per_unit_time;
            summary.worst_path = id;
        }
    }
    json(&summary)
}

/// A report is written even when `failed` is set (validation findings).
struct Report {
    text: String,
    failed: bool,
}

impl From<String> for Report {
    fn from(text: String) -> Self {
        Self { text, failed: false }
    }
}

fn run(cli: Cli) -> Result<Report, Error> {
    let allow = cli.allow_invalid;
    let load = |p: &PathBuf| load_model(p, allow);
    let point = |s: Option<usize>, t: Option<f64>| s.zip(t);
    let text = match cli.command {
        Command::Validate { model } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Io(format!("{}: {e}", model.display())))?;
            let report = validate_model(&parse_model(&text)?)?;
            return Ok(Report {
                text: json(&report)?,
                failed: !report.is_valid(),
            });
        }
        Command::Simulate { model, n, seed, horizon } => {
            let m = load(&model)?;
            let config = SimConfig::new(n, seed, horizon.unwrap_or(m.horizon)).with_threads(cli.threads);
            paths_to_csv(&simulate_paths(&m, &config)?)
        }
        Command::Prob { model, target, at, h, state, time } => {
            let m = load(&model)?;
            let threads = cli.threads;
            let field = with_pool(threads, || kolmogorov_solve(&m, target, at, &SolveOptions::new(h)))??;
            field_report(&field, point(state, time))?
        }
        Command::Reserve { model, h, state, time } => {
            let mut m = load(&model)?;
            if m.has_reserve_dependence() {
                m = transform_reserve_dependent(&m)?;
            }
            let field = with_pool(cli.threads, || thiele_solve(&m, &SolveOptions::new(h)))??;
            field_report(&field, point(state, time))?
        }
        Command::Compare { a, b, h } => {
            let (a, b) = (load(&a)?, load(&b)?);
            let report = with_pool(cli.threads, || compare_models(&a, &b, &SolveOptions::new(h)))??;
            report.to_json() + "\n"
        }
        Command::Transform { model, name, z0, alpha, h } => {
            let m = load(&model)?;
            let need_z0 = || {
                if z0.is_empty() {
                    Err(Error::Input("this transformation needs --z0".into()))
                } else {
                    Ok(())
                }
            };
            let out = match name {
                TransformName::Alpha => set_initial_distribution(&m, alpha)?,
                TransformName::Prune => {
                    need_z0()?;
                    prune_irrelevant(&m, &z0)?
                }
                TransformName::Shorten => {
                    need_z0()?;
                    let field = thiele_solve(&m, &SolveOptions::new(h))?;
                    transform_shorten(&m, &z0, &field)?
                }
                TransformName::Cemetery => {
                    need_z0()?;
                    transform_cemetery(&m, &z0)?
                }
                TransformName::ReserveDependent => transform_reserve_dependent(&m)?,
            };
            model_to_json(&out)?
        }
        Command::Residual { model, n, seed, h, cell } => {
            let m = load(&model)?;
            residual(&m, n, seed, h, cell, cli.threads)?
        }
    };
    Ok(text.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = cli.out.clone();
    match run(cli) {
        Ok(report) => {
            let written = match &out {
                Some(p) => std::fs::write(p, report.text.as_bytes()),
                None => std::io::stdout().lock().write_all(report.text.as_bytes()),
            };
            match written {
                Ok(()) if report.failed => ExitCode::from(1),
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: cannot write report: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Internal(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

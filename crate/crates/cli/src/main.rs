use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kineverse::artmodel::OperationHistory;
use kineverse::control::Status;
use kineverse::symexpr::json::{ext_from_json, parse_json};
use kineverse::symexpr::{Assignment, Variable};
use kineverse_cli::ekf::EkfConfig;
use kineverse_cli::io::{load_history, load_model, Format};
use kineverse_cli::{convert, ekf, fk, garage, gradcheck, rollout};
use kineverse_server::DEFAULT_ENDPOINT;

#[derive(Parser)]
#[command(name = "kineverse", version, about = "Symbolic articulation models: inspection, checks, experiments and serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// URDF or kmodel file
    #[arg(short, long)]
    model: PathBuf,
    /// Input format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a frame (or scalar definition) at an assignment
    Fk {
        #[command(flatten)]
        model: ModelArgs,
        /// Path of the definition
        #[arg(short, long)]
        frame: String,
        /// Variable binding NAME=VALUE; VALUE may use `pi`, e.g. `pi/2`
        #[arg(short = 's', long = "set", value_parser = fk::parse_binding)]
        bindings: Vec<(Variable, f64)>,
    },
    /// Compare analytic gradients with central differences
    Gradcheck {
        /// Model holding the definition to check
        #[arg(short, long, required_unless_present = "expr", requires = "target")]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Frame or scalar path inside the model
        #[arg(short = 'f', long = "frame", conflicts_with = "expr")]
        target: Option<String>,
        /// Extended expression as a JSON AST, instead of a model
        #[arg(long, conflicts_with = "model")]
        expr: Option<String>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        /// Maximum deviation relative to max(1, |analytic|, |numeric|)
        #[arg(long, default_value_t = 1e-5, value_parser = positive)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the garage door point paths and lock values as CSV
    GarageDemo {
        #[arg(short, long)]
        output: PathBuf,
        /// Lock soft-step sharpness
        #[arg(long, default_value_t = 100.0, value_parser = positive)]
        sharpness: f64,
    },
    /// Run the EKF Monte-Carlo experiment and write per-step errors as CSV
    Ekf {
        /// JSON config; flags given explicitly override its fields
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dof: Option<usize>,
        #[arg(long)]
        sigma_t: Option<f64>,
        #[arg(long)]
        sigma_r: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        observations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; standard output when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Roll out a controller scenario and write its trace as CSV
    Rollout {
        #[arg(long, required_unless_present = "list")]
        scenario: Option<String>,
        #[arg(long, default_value_t = rollout::DEFAULT_DT, value_parser = positive)]
        dt: f64,
        #[arg(long, default_value_t = rollout::DEFAULT_STEPS)]
        steps: usize,
        /// CSV destination; standard output when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// List the scenario names and exit
        #[arg(long)]
        list: bool,
    },
    /// Serve a model to clients over TCP
    Serve {
        /// Initial model; empty when omitted
        #[arg(short, long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        /// History file rewritten after every change and reloaded on start
        #[arg(long, env = "KINEVERSE_STORE")]
        store: Option<PathBuf>,
    },
    /// Convert a URDF or kmodel file to kmodel
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Summarize a model's history, definitions, constraints and shapes
    Inspect {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Runs a command; `Ok(false)` means a check failed.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Fk { model, frame, bindings } => {
            let m = load_model(&model.model, model.format)?;
            let q: Assignment = bindings.into_iter().collect();
            println!("{}", fk::format_matrix(&fk::evaluate(&m, &frame, &q)?));
        }
        Command::Gradcheck {
            model,
            format,
            target,
            expr,
            samples,
            tol,
            seed,
        } => {
            let report = match (model, expr) {
                (Some(path), _) => {
                    let m = load_model(&path, format)?;
                    let target = target.context("--frame is required with --model")?;
                    let entries = gradcheck::definition_entries(&m, &target)?;
                    gradcheck::check(&entries, |v| gradcheck::sampling_bounds(Some(&m), v), samples as usize, seed)?
                }
                (None, Some(text)) => {
                    let json = parse_json(&text).context("--expr is not JSON")?;
                    let e = ext_from_json(&json).context("--expr is not an expression")?;
                    gradcheck::check(&[("expr".into(), e)], |v| gradcheck::sampling_bounds(None, v), samples as usize, seed)?
                }
                (None, None) => bail!("give --model and --frame, or --expr"),
            };
            println!("{}", gradcheck::render(&report, tol));
            return Ok(report.passes(tol));
        }
        Command::GarageDemo { output, sharpness } => {
            let (points, locks) = garage::sweep(&garage::garage_model(sharpness)?)?;
            let mut out = sink(Some(&output))?;
            garage::write_csv(&mut out, &points, &locks)?;
            out.flush()?;
            eprintln!("wrote {} door samples and {} lock samples to {}", points.len(), locks.len(), output.display());
        }
        Command::Ekf {
            config,
            dof,
            sigma_t,
            sigma_r,
            trials,
            observations,
            seed,
            output,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                    serde_json::from_str::<EkfConfig>(&text).with_context(|| format!("invalid config {}", p.display()))?
                }
                None => EkfConfig::default(),
            };
            cfg.dof = dof.unwrap_or(cfg.dof);
            cfg.sigma_t = sigma_t.unwrap_or(cfg.sigma_t);
            cfg.sigma_r = sigma_r.unwrap_or(cfg.sigma_r);
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.observations = observations.unwrap_or(cfg.observations);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let summary = ekf::run(&cfg)?;
            let mut out = sink(output.as_deref())?;
            ekf::write_csv(&mut out, &summary)?;
            out.flush()?;
            eprintln!("{}", ekf::summary_text(&cfg, &summary));
        }
        Command::Rollout {
            scenario,
            dt,
            steps,
            output,
            list,
        } => {
            if list {
                for name in rollout::scenario_names() {
                    println!("{name}");
                }
                return Ok(true);
            }
            let name = scenario.context("--scenario is required")?;
            let trace = rollout::run(&name, dt, steps)?;
            let mut out = sink(output.as_deref())?;
            rollout::write_csv(&mut out, &trace)?;
            out.flush()?;
            eprintln!("{name}: {} after {} steps", trace.status(), trace.rows.len());
            if let Status::Error(e) = trace.status() {
                bail!("controller failed: {e}");
            }
        }
        Command::Serve {
            model,
            format,
            endpoint,
            store,
        } => {
            let history = match model {
                Some(p) => load_history(&p, format)?,
                None => OperationHistory::new(),
            };
            let server = kineverse_server::serve(history, endpoint.as_str(), store)?;
            println!("listening on {}", server.local_addr());
            server.wait();
        }
        Command::Convert { input, output, format } => {
            let history = convert::convert(&input, format, &output)?;
            eprintln!("wrote {} operations to {}", history.len(), output.display());
        }
        Command::Inspect { model } => {
            let history = load_history(&model.model, model.format)?;
            print!("{}", convert::inspect(&history)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

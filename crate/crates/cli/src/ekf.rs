//! Monte-Carlo EKF runs on the 1- to 3-DoF estimation fixtures.

use std::io::Write;

use anyhow::{bail, Context, Result};
use kineverse::estimation::{run_experiment, EkfExperiment, ExperimentSummary};
use kineverse::scenes::estimation_model;
use serde::{Deserialize, Serialize};

fn default_dof() -> usize {
    3
}
fn default_trials() -> usize {
    100
}
fn default_observations() -> usize {
    25
}
fn default_r_samples() -> usize {
    1000
}
fn default_bootstrap_steps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfConfig {
    #[serde(default = "default_dof")]
    pub dof: usize,
    #[serde(default)]
    pub sigma_t: f64,
    #[serde(default)]
    pub sigma_r: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_observations")]
    pub observations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_r_samples")]
    pub r_samples: usize,
    #[serde(default = "default_bootstrap_steps")]
    pub bootstrap_steps: usize,
}

impl Default for EkfConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

pub fn run(cfg: &EkfConfig) -> Result<ExperimentSummary> {
    if !(1..=3).contains(&cfg.dof) {
        bail!("dof must be 1, 2 or 3, got {}", cfg.dof);
    }
    if !(cfg.sigma_t >= 0.0 && cfg.sigma_r >= 0.0) {
        bail!("noise levels must be non-negative");
    }
    if cfg.trials == 0 || cfg.observations == 0 {
        bail!("trials and observations must be positive");
    }
    let (model, frames) = estimation_model(cfg.dof)?;
    let exp = EkfExperiment {
        frames,
        sigma_t: cfg.sigma_t,
        sigma_r: cfg.sigma_r,
        trials: cfg.trials,
        observations: cfg.observations,
        seed: cfg.seed,
        r_samples: cfg.r_samples,
        bootstrap_steps: cfg.bootstrap_steps,
    };
    run_experiment(&model, &exp).context("experiment failed")
}

/// `trial, step, err_<var>…, iteration_ms`; step 0 is the prior.
pub fn write_csv(out: impl Write, s: &ExperimentSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string(), "step".to_string()];
    header.extend(s.variables.iter().map(|v| format!("err_{v}")));
    header.push("iteration_ms".into());
    w.write_record(&header)?;
    for r in &s.rows {
        let mut rec = vec![r.trial.to_string(), r.step.to_string()];
        rec.extend(r.errors.iter().map(f64::to_string));
        rec.push(r.iteration_ms.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_text(cfg: &EkfConfig, s: &ExperimentSummary) -> String {
    format!(
        "dof {} sigma_t {} sigma_r {}: improved in {:.1}% of {} trials, mean final error {:.3e}, max final error {:.3e}, mean iteration {:.4} ms (sd {:.4})",
        cfg.dof,
        cfg.sigma_t,
        cfg.sigma_r,
        100.0 * s.improved_fraction(),
        s.final_errors.len(),
        s.mean_final_error(),
        s.max_final_error(),
        s.mean_iteration_ms(),
        s.std_iteration_ms()
    )
}

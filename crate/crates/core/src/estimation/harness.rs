use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bootstrap, build_observation_model, estimate_r, init_state, predict, update, EstimationError};
use crate::artmodel::{ArticulationModel, Path};

fn default_r_samples() -> usize {
    1000
}

fn default_bootstrap_steps() -> usize {
    10
}

/// Monte-Carlo protocol: ground truths drawn uniformly within the bounds,
/// bootstrap on the first observation, then one predict/update per
/// observation with a static object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkfExperiment {
    pub frames: Vec<Path>,
    pub sigma_t: f64,
    pub sigma_r: f64,
    pub trials: usize,
    pub observations: usize,
    pub seed: u64,
    #[serde(default = "default_r_samples")]
    pub r_samples: usize,
    #[serde(default = "default_bootstrap_steps")]
    pub bootstrap_steps: usize,
}

/// One CSV row: absolute error per state variable after `step` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfRow {
    pub trial: usize,
    pub step: usize,
    pub errors: Vec<f64>,
    pub iteration_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub variables: Vec<String>,
    pub rows: Vec<EkfRow>,
    /// Euclidean error of the initial (midpoint) estimate, per trial.
    pub initial_errors: Vec<f64>,
    pub final_errors: Vec<f64>,
    /// Mean absolute per-variable error at the end of each trial.
    pub final_mean_abs: Vec<f64>,
    pub iteration_ms: Vec<f64>,
}

impl ExperimentSummary {
    pub fn improved_fraction(&self) -> f64 {
        let n = self.initial_errors.len().max(1);
        let better = self
            .initial_errors
            .iter()
            .zip(&self.final_errors)
            .filter(|(i, f)| f < i)
            .count();
        better as f64 / n as f64
    }

    pub fn mean_final_error(&self) -> f64 {
        mean(&self.final_mean_abs)
    }

    pub fn max_final_error(&self) -> f64 {
        self.final_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_iteration_ms(&self) -> f64 {
        mean(&self.iteration_ms)
    }

    pub fn std_iteration_ms(&self) -> f64 {
        let m = self.mean_iteration_ms();
        let n = self.iteration_ms.len();
        if n < 2 {
            return 0.0;
        }
        (self.iteration_ms.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs the experiment; iteration times cover predict plus update.
pub fn run_experiment(model: &ArticulationModel, cfg: &EkfExperiment) -> Result<ExperimentSummary, EstimationError> {
    let obs = build_observation_model(model, &cfg.frames)?;
    let init = init_state(model, &obs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = estimate_r(&obs, &init.q, cfg.sigma_t, cfg.sigma_r, cfg.r_samples.max(2), &mut rng)?;
    let n = init.q.len();
    let zero = DVector::zeros(n);
    let mut out = ExperimentSummary {
        variables: obs.state_vars().iter().map(|v| v.to_string()).collect(),
        rows: Vec::new(),
        initial_errors: Vec::new(),
        final_errors: Vec::new(),
        final_mean_abs: Vec::new(),
        iteration_ms: Vec::new(),
    };
    for trial in 0..cfg.trials {
        let truth = DVector::from_iterator(n, init.bounds.iter().map(|&(l, u)| rng.random_range(l..=u)));
        let errors = |q: &DVector<f64>| (q - &truth).abs();
        let e0 = errors(&init.q);
        out.initial_errors.push(e0.norm());
        out.rows.push(EkfRow {
            trial,
            step: 0,
            errors: e0.iter().copied().collect(),
            iteration_ms: 0.0,
        });
        let mut st = init.clone();
        for step in 1..=cfg.observations {
            let z = obs.observe(&truth, cfg.sigma_t, cfg.sigma_r, &mut rng)?;
            if step == 1 {
                st = bootstrap(&st, &z, &obs, cfg.bootstrap_steps)?;
            }
            let t0 = Instant::now();
            st = predict(&st, &zero, 1.0);
            st = update(&st, &z, &obs, &r)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            out.iteration_ms.push(ms);
            out.rows.push(EkfRow {
                trial,
                step,
                errors: errors(&st.q).iter().copied().collect(),
                iteration_ms: ms,
            });
        }
        let ef = errors(&st.q);
        out.final_errors.push(ef.norm());
        out.final_mean_abs.push(ef.mean());
    }
    Ok(out)
}

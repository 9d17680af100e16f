//! Analytic gradient entries against central differences.

use anyhow::{anyhow, Result};
use kineverse::artmodel::{path, ArticulationModel, Definition};
use kineverse::estimation::{variable_bounds, DEFAULT_BOUNDS};
use kineverse::symexpr::{Assignment, ExtExpr, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;

/// Entry names and expressions of a definition (`path[r,c]` for matrices).
pub fn definition_entries(model: &ArticulationModel, target: &str) -> Result<Vec<(String, ExtExpr)>> {
    let def = model.get(&path(target)).map_err(|e| anyhow!("{e}"))?;
    Ok(match def {
        Definition::Scalar(e) => vec![(target.to_string(), e.clone())],
        Definition::Matrix(m) => (0..m.rows())
            .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
            .map(|(r, c)| (format!("{target}[{r},{c}]"), m.get(r, c).clone()))
            .collect(),
    })
}

/// Sampling range per variable: the model's position bounds (or
/// [`DEFAULT_BOUNDS`]) shrunk so that `x ± STEP` stays inside.
pub fn sampling_bounds(model: Option<&ArticulationModel>, v: &Variable) -> Result<(f64, f64)> {
    let (lb, ub) = match model {
        Some(m) => variable_bounds(m, v)?.unwrap_or(DEFAULT_BOUNDS),
        None => DEFAULT_BOUNDS,
    };
    let margin = (1e-3 * (ub - lb)).max(2.0 * STEP);
    Ok((lb + margin, ub - margin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub entry: String,
    pub key: Variable,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
    pub deviation: f64,
    pub point: Vec<(Variable, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub samples: usize,
    pub checked: usize,
    /// `entry key` pairs whose analytic derivative is overridden.
    pub overrides: Vec<String>,
    /// Explicit entries for variables the expression does not contain.
    pub extras: Vec<String>,
    /// Evaluations that produced a non-finite value.
    pub non_finite: usize,
    pub worst: Option<Deviation>,
}

impl Report {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst.as_ref().is_none_or(|w| w.deviation <= tol)
    }
}

fn central(e: &ExtExpr, q: &mut Assignment, v: &Variable, x: f64) -> Result<f64> {
    q.insert(v.clone(), x + STEP);
    let fp = e.evaluate(q)?;
    q.insert(v.clone(), x - STEP);
    let fm = e.evaluate(q)?;
    q.insert(v.clone(), x);
    Ok((fp - fm) / (2.0 * STEP))
}

/// Compares every non-overridden gradient entry of every expression at
/// `samples` uniformly drawn points.
pub fn check(
    entries: &[(String, ExtExpr)],
    bounds: impl Fn(&Variable) -> Result<(f64, f64)>,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let mut report = Report {
        samples,
        ..Report::default()
    };
    let mut vars: Vec<Variable> = entries
        .iter()
        .flat_map(|(_, e)| e.variables().iter().cloned())
        .collect();
    vars.sort();
    vars.dedup();
    let ranges = vars.iter().map(&bounds).collect::<Result<Vec<_>>>()?;

    let mut plan = Vec::new();
    for (name, e) in entries {
        for key in e.gradient_keys() {
            let label = format!("{name} {key}");
            if e.is_override(&key) {
                report.overrides.push(label);
            } else if e.explicit_gradient().contains_key(&key) {
                report.extras.push(label);
            } else if let Some(v) = key.integral() {
                plan.push((name, e, key.clone(), e.gradient_entry(&key), v));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let point: Vec<(Variable, f64)> = vars
            .iter()
            .zip(&ranges)
            .map(|(v, &(l, u))| (v.clone(), if l < u { rng.random_range(l..u) } else { 0.5 * (l + u) }))
            .collect();
        let mut q: Assignment = point.iter().cloned().collect();
        for (name, e, key, grad, v) in &plan {
            let x = q.get(v).expect("sampled");
            let analytic = grad.evaluate(&q)?;
            let numeric = central(e, &mut q, v, x)?;
            if !analytic.is_finite() || !numeric.is_finite() {
                report.non_finite += 1;
                continue;
            }
            report.checked += 1;
            let deviation = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
            if report.worst.as_ref().is_none_or(|w| deviation > w.deviation) {
                report.worst = Some(Deviation {
                    entry: name.to_string(),
                    key: key.clone(),
                    analytic,
                    numeric,
                    deviation,
                    point: point.clone(),
                });
            }
        }
    }
    Ok(report)
}

pub fn render(report: &Report, tol: f64) -> String {
    let mut out = vec![format!(
        "checked {} gradient entries at {} samples, tolerance {tol:e}",
        report.checked, report.samples
    )];
    for o in &report.overrides {
        out.push(format!("{o}: override (skipped analytic check)"));
    }
    for x in &report.extras {
        out.push(format!("{x}: extra entry (no analytic counterpart)"));
    }
    if report.non_finite > 0 {
        out.push(format!("{} evaluations were not finite and were skipped", report.non_finite));
    }
    match &report.worst {
        Some(w) => {
            let at = w
                .point
                .iter()
                .map(|(v, x)| format!("{v}={x}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push(format!(
                "worst: {} d/{} analytic {} numeric {} deviation {:e} at {at}",
                w.entry, w.key, w.analytic, w.numeric, w.deviation
            ));
        }
        None => out.push("nothing to check".into()),
    }
    out.push(if report.passes(tol) { "PASS" } else { "FAIL" }.into());
    out.join("\n")
}

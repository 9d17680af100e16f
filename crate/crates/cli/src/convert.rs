//! Format conversion and model summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kineverse::artmodel::{replay, Definition, OperationHistory};
use kineverse::loaders::{load_kmodel, save_kmodel};

use crate::io::{load_history, Format};

/// Serializes `history` as kmodel text after checking that the text replays
/// to the same model.
pub fn to_kmodel(history: &OperationHistory) -> Result<String> {
    let text = save_kmodel(history);
    let original = replay(history).context("input history does not replay")?;
    let reloaded = load_kmodel(&text).context("written kmodel does not load")?;
    let again = replay(&reloaded).context("written kmodel does not replay")?;
    if again != original {
        bail!("kmodel round trip changed the model");
    }
    Ok(text)
}

pub fn convert(input: &Path, format: Option<Format>, output: &Path) -> Result<OperationHistory> {
    if Format::detect(output, None) == Format::Urdf {
        bail!("writing URDF is not supported; use a .kmodel output");
    }
    let history = load_history(input, format)?;
    let text = to_kmodel(&history)?;
    fs::write(output, text).with_context(|| format!("cannot write {}", output.display()))?;
    Ok(history)
}

pub fn inspect(history: &OperationHistory) -> Result<String> {
    let model = replay(history).context("history does not replay")?;
    let mut out = String::new();
    writeln!(out, "history ({} operations):", history.len())?;
    for e in history.entries() {
        writeln!(out, "  {:<20} {}", e.op.kind(), e.tag)?;
    }
    writeln!(out, "definitions ({}):", model.definitions().len())?;
    for (p, d) in model.definitions() {
        let (kind, vars) = match d {
            Definition::Matrix(m) => (format!("{}x{}", m.rows(), m.cols()), d.variables()),
            Definition::Scalar(_) => ("scalar".to_string(), d.variables()),
        };
        let vars: Vec<String> = vars.iter().map(ToString::to_string).collect();
        writeln!(out, "  {p} [{kind}] {{{}}}", vars.join(", "))?;
    }
    let vars: Vec<String> = model.variables().iter().map(ToString::to_string).collect();
    writeln!(out, "variables ({}): {}", vars.len(), vars.join(", "))?;
    writeln!(out, "constraints ({}):", model.constraints().len())?;
    for (name, c) in model.constraints() {
        writeln!(out, "  {name}: {} <= {} <= {}", c.lb, c.expr, c.ub)?;
    }
    writeln!(out, "shapes ({}):", model.shapes().len())?;
    for (name, s) in model.shapes() {
        writeln!(out, "  {name} on {} ({})", s.path, s.shape.kind())?;
    }
    Ok(out)
}

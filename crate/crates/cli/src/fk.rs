use std::f64::consts::PI;

use anyhow::{anyhow, bail, Context, Result};
use kineverse::artmodel::{path, ArticulationModel, Definition};
use kineverse::symexpr::{Assignment, Variable};
use nalgebra::DMatrix;

/// Parses `name=value`. The value is a number, optionally followed or
/// replaced by `pi` (`pi`, `-pi`, `0.5pi`, `pi/2`).
pub fn parse_binding(text: &str) -> Result<(Variable, f64), String> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{text}`"))?;
    let var: Variable = name.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((var, parse_value(value.trim())?))
}

fn parse_value(v: &str) -> Result<f64, String> {
    let bad = || format!("invalid value `{v}`");
    let lower = v.to_ascii_lowercase();
    let Some(at) = lower.find("pi") else {
        return v.parse().map_err(|_| bad());
    };
    let coeff = match &lower[..at] {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
    };
    let div = match &lower[at + 2..] {
        "" => 1.0,
        d => d.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(coeff * PI / div)
}

/// Value of the definition at `frame` as a matrix (1×1 for scalars).
pub fn evaluate(model: &ArticulationModel, frame: &str, q: &Assignment) -> Result<DMatrix<f64>> {
    let p = path(frame);
    let def = model.get(&p).map_err(|e| anyhow!("{e}"))?;
    let m = match def {
        Definition::Matrix(m) => m.evaluate(q),
        Definition::Scalar(e) => e.evaluate(q).map(|x| DMatrix::from_element(1, 1, x)),
    }
    .with_context(|| format!("cannot evaluate {frame}"))?;
    if m.iter().any(|x| !x.is_finite()) {
        bail!("{frame} is not finite at this assignment");
    }
    Ok(m)
}

/// `x` rounded to `digits` significant digits, printed without padding.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x);
    let mag = rounded.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| sig(m[(r, c)], 12)).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| format!("{c:>width$}"))
                .collect::<Vec<_>>()
                .join("  ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

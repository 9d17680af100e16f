//! Model files: URDF or kmodel, picked by flag or file extension.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use kineverse::artmodel::{replay, ArticulationModel, OperationHistory};
use kineverse::loaders::{load_kmodel, parse_urdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Urdf,
    Kmodel,
}

impl Format {
    /// `.urdf` and `.xml` files are URDF, everything else kmodel.
    pub fn detect(path: &Path, explicit: Option<Format>) -> Format {
        explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("urdf") || e.eq_ignore_ascii_case("xml") => Format::Urdf,
            _ => Format::Kmodel,
        })
    }
}

pub fn load_history(path: &Path, format: Option<Format>) -> Result<OperationHistory> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let history = match Format::detect(path, format) {
        Format::Urdf => parse_urdf(&text),
        Format::Kmodel => load_kmodel(&text),
    }
    .with_context(|| format!("cannot load {}", path.display()))?;
    Ok(history)
}

pub fn load_model(path: &Path, format: Option<Format>) -> Result<ArticulationModel> {
    let history = load_history(path, format)?;
    replay(&history).with_context(|| format!("history of {} does not replay", path.display()))
}

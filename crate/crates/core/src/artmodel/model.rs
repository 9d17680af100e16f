use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Path;
use crate::geometry::ShapeAttachment;
use crate::symexpr::{ExtExpr, ExtMatrix, ScalarExpr, ShapeError, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown path `{0}`")]
    UnknownPath(Path),
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("tag `{0}` already exists")]
    DuplicateTag(String),
    #[error("name `{0}` is already used")]
    DuplicateName(String),
    #[error("joint `{0}` needs position limits")]
    MissingLimits(String),
    #[error("unknown shape `{0}`")]
    UnknownShape(String),
    #[error("`{0}` is not a 4x4 transform")]
    NotATransform(Path),
    #[error("`{0}` is not a scalar")]
    NotAScalar(Path),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("operation `{tag}` failed: {source}")]
    Operation {
        tag: String,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    /// The innermost error, unwrapping tag context.
    pub fn root(&self) -> &ModelError {
        match self {
            ModelError::Operation { source, .. } => source.root(),
            e => e,
        }
    }
}

/// A named entry of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definition {
    Scalar(ExtExpr),
    Matrix(ExtMatrix),
}

impl Definition {
    pub fn variables(&self) -> BTreeSet<Variable> {
        match self {
            Definition::Scalar(e) => e.variables().clone(),
            Definition::Matrix(m) => m.variables(),
        }
    }

    pub fn as_transform(&self) -> Option<&ExtMatrix> {
        match self {
            Definition::Matrix(m) if m.shape() == (4, 4) => Some(m),
            _ => None,
        }
    }
}

/// Dual inequality `lb <= expr <= ub`; bounds may be expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub lb: ScalarExpr,
    pub ub: ScalarExpr,
    pub expr: ScalarExpr,
}

impl Constraint {
    pub fn new(lb: impl Into<ScalarExpr>, ub: impl Into<ScalarExpr>, expr: impl Into<ScalarExpr>) -> Self {
        Constraint {
            lb: lb.into(),
            ub: ub.into(),
            expr: expr.into(),
        }
    }
}

/// Expressions by path plus a named constraint set, and the collision shapes
/// attached to frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArticulationModel {
    pub(crate) defs: BTreeMap<Path, Definition>,
    pub(crate) constraints: BTreeMap<String, Constraint>,
    pub(crate) shapes: BTreeMap<String, ShapeAttachment>,
}

impl ArticulationModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, path: &Path) -> Result<&Definition, ModelError> {
        self.defs
            .get(path)
            .ok_or_else(|| ModelError::UnknownPath(path.clone()))
    }

    pub fn contains(&self, path: &Path) -> bool {
        self.defs.contains_key(path)
    }

    /// Forward kinematics (world pose) of a frame.
    pub fn fk(&self, path: &Path) -> Result<&ExtMatrix, ModelError> {
        self.get(path)?
            .as_transform()
            .ok_or_else(|| ModelError::NotATransform(path.clone()))
    }

    pub fn scalar(&self, path: &Path) -> Result<&ExtExpr, ModelError> {
        match self.get(path)? {
            Definition::Scalar(e) => Ok(e),
            _ => Err(ModelError::NotAScalar(path.clone())),
        }
    }

    pub fn definitions(&self) -> &BTreeMap<Path, Definition> {
        &self.defs
    }

    pub fn constraints(&self) -> &BTreeMap<String, Constraint> {
        &self.constraints
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.get(name)
    }

    pub fn shapes(&self) -> &BTreeMap<String, ShapeAttachment> {
        &self.shapes
    }

    pub fn shape(&self, name: &str) -> Result<&ShapeAttachment, ModelError> {
        self.shapes
            .get(name)
            .ok_or_else(|| ModelError::UnknownShape(name.to_string()))
    }

    /// Paths whose definitions are 4×4 transforms.
    pub fn frames(&self) -> impl Iterator<Item = (&Path, &ExtMatrix)> {
        self.defs
            .iter()
            .filter_map(|(p, d)| d.as_transform().map(|m| (p, m)))
    }

    /// All variables occurring in definitions and constraint expressions.
    pub fn variables(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        for d in self.defs.values() {
            out.extend(d.variables());
        }
        for c in self.constraints.values() {
            out.extend(c.expr.variables().iter().cloned());
        }
        out
    }

    /// Constraints whose constrained expression shares a variable with `vars`.
    pub fn constraints_for(&self, vars: &BTreeSet<Variable>) -> Vec<(&str, &Constraint)> {
        self.constraints
            .iter()
            .filter(|(_, c)| c.expr.variables().iter().any(|v| vars.contains(v)))
            .map(|(n, c)| (n.as_str(), c))
            .collect()
    }

    /// [`constraints_for`](Self::constraints_for) with every variable expanded
    /// to derivative orders `0..=max_order`.
    pub fn constraints_for_controlled(
        &self,
        position_vars: &BTreeSet<Variable>,
        max_order: u32,
    ) -> Vec<(&str, &Constraint)> {
        let expanded: BTreeSet<Variable> = position_vars
            .iter()
            .flat_map(|v| (0..=max_order).map(move |o| v.at_order(o)))
            .collect();
        self.constraints_for(&expanded)
    }

    /// Paths whose definition depends on any of `vars`.
    pub fn parts_moved_by(&self, vars: &BTreeSet<Variable>) -> BTreeSet<Path> {
        self.defs
            .iter()
            .filter(|(_, d)| d.variables().iter().any(|v| vars.contains(v)))
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Scalar definitions that are bare position variables carrying explicit
    /// gradient entries for other variables. They describe velocity couplings
    /// such as a differential drive's `x' = Σ grad(x)[w'] w'`.
    pub fn velocity_couplings(&self) -> BTreeMap<Variable, ExtExpr> {
        self.defs
            .values()
            .filter_map(|d| match d {
                Definition::Scalar(e) if e.has_explicit_gradient() => {
                    e.expr().as_var().filter(|v| v.order() == 0).map(|v| (v.clone(), e.clone()))
                }
                _ => None,
            })
            .collect()
    }
}

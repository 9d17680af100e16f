//! URDF import and the native kmodel history format.

mod kmodel;
mod urdf;

use thiserror::Error;

pub use kmodel::{history_from_json, history_to_json, load_kmodel, save_kmodel, KMODEL_VERSION};
pub use urdf::{
    origin_transform, parse_urdf, UrdfDocument, UrdfGeometry, UrdfJoint, UrdfLimits, UrdfLink, UrdfMimic,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported joint type `{0}`")]
    UnsupportedJoint(String),
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("kinematic loop: {0}")]
    CycleError(String),
    #[error("mimic cycle through joint `{0}`")]
    MimicCycle(String),
    #[error("format error at {path}: {message}")]
    Format { path: String, message: String },
}

//! Articulation models: named expressions and constraints, built by replaying
//! tagged operations.

mod history;
mod model;
mod ops;
mod path;

pub use history::{replay, ChangeSet, HistoryEntry, OperationHistory, Placement, TaggedModel};
pub use model::{ArticulationModel, Constraint, Definition, ModelError};
pub use ops::{
    AddConstraint, AttachDiffDrive, AttachGarageDoor, AttachShape, ConnectJoint, CreateBody, Define, JointKind,
    Mimic, Operation, Outputs, PoseRef,
};
pub use path::{sanitize_segment, InvalidPath, Path};

/// Parses a path literal; panics on invalid input. Intended for constants.
pub fn path(text: &str) -> Path {
    Path::new(text).unwrap_or_else(|e| panic!("{e}"))
}

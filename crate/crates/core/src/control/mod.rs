//! QP-based velocity controllers for grasped and pushed objects.

pub mod bounds;
pub mod grasp;
pub mod kin;
pub mod pose;
pub mod push;
pub mod qp;
pub mod rollout;

use thiserror::Error;

use crate::artmodel::ModelError;
use crate::geometry::GeometryError;
use crate::symexpr::{CompileError, EvalError, Variable};

pub use bounds::velocity_bounds;
pub use grasp::{GraspConfig, GraspController};
pub use kin::{FrameEval, FrameKinematics};
pub use pose::{pose_error, rotation_log};
pub use push::{PushConfig, PushController, PushMode};
pub use qp::{solve_qp, solve_qp_with, KktResidual, QProblem, QpError, QpSettings, QpSolution, Row};
pub use rollout::{rollout, Controller, HoldController, RolloutScene, Status, StepOutput, Trace, TraceRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("velocity interval of {0} is empty")]
    EmptyInterval(Variable),
    #[error("transform is not rigid")]
    NonRigidInput,
    #[error("grasp IK stalled with pose error {0:.3e}")]
    IkStalled(f64),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

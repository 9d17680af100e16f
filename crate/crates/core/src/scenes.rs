//! Desk-scale robots and articulated objects used by the controller and
//! estimator experiments.
//!
//! The robot is a 3-DoF planar arm on either a holonomic base (`x`, `y`,
//! yaw joints) or a differential drive. Objects are a drawer, a hinged
//! door, a two-panel folding door and a lockable garage door. Scenes are
//! built by concatenating the loading histories of their parts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artmodel::{
    path, ArticulationModel, AttachDiffDrive, AttachGarageDoor, AttachShape, CreateBody, ModelError, Operation,
    OperationHistory, Path, Placement, PoseRef, TaggedModel,
};
use crate::control::{
    rollout, ControlError, Controller, GraspConfig, GraspController, HoldController, PushConfig, PushController,
    RolloutScene, Trace,
};
use crate::geometry::Shape;
use crate::loaders::{origin_transform, parse_urdf, LoadError};
use crate::symexpr::{DEFAULT_SHARPNESS, Variable};

pub const HOLONOMIC_ARM_URDF: &str = include_str!("../fixtures/planar_arm_holonomic.urdf");
pub const DIFF_DRIVE_ARM_URDF: &str = include_str!("../fixtures/planar_arm_diffdrive.urdf");
pub const DRAWER_URDF: &str = include_str!("../fixtures/drawer.urdf");
pub const DOOR_URDF: &str = include_str!("../fixtures/door.urdf");
pub const FOLDING_DOOR_URDF: &str = include_str!("../fixtures/folding_door.urdf");
pub const TWO_LINK_ARM_URDF: &str = include_str!("../fixtures/two_link_arm.urdf");

/// Sharpness of the garage-door lock in the push scenes; steep enough that
/// the locked velocity bound is below 1e-6 a millimetre past the threshold.
pub const LOCK_SHARPNESS: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("estimation model needs 1 to 3 degrees of freedom, got {0}")]
    UnsupportedDof(usize),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Arm joint values that put the end effector 1.102 m ahead of the base at
/// grasp height with zero yaw.
pub const ARM_HOME: [(&str, f64); 3] = [("robot.j1", 0.5), ("robot.j2", -1.0), ("robot.j3", 0.5)];
/// Forward reach of the end effector at [`ARM_HOME`].
pub const ARM_REACH: f64 = 1.102;

pub fn holonomic_arm() -> Result<OperationHistory, SceneError> {
    Ok(parse_urdf(HOLONOMIC_ARM_URDF)?)
}

/// The arm on a differential drive: base pose `robot.x`, `robot.y`,
/// `robot.theta` driven by wheel variables `robot.lw` and `robot.rw`.
pub fn diff_drive_arm() -> Result<OperationHistory, SceneError> {
    let mut tm = TaggedModel::from_history(&parse_urdf(DIFF_DRIVE_ARM_URDF)?)?;
    let first_connect = tm
        .history()
        .entries()
        .iter()
        .find(|e| matches!(e.op, Operation::ConnectJoint(_)))
        .map(|e| e.tag.clone())
        .expect("arm fixture has joints");
    let drive = AttachDiffDrive {
        base: path("robot.base"),
        wheel_radius: 0.1,
        axle_half_width: 0.25,
        x: "robot.x".into(),
        y: "robot.y".into(),
        theta: "robot.theta".into(),
        left_wheel: "robot.lw".into(),
        right_wheel: "robot.rw".into(),
        wheel_vel_limit: Some(10.0),
    };
    tm.apply("drive robot.base", Operation::AttachDiffDrive(drive), Placement::Before(first_connect))?;
    Ok(tm.history().clone())
}

pub fn drawer() -> Result<OperationHistory, SceneError> {
    Ok(parse_urdf(DRAWER_URDF)?)
}

pub fn door() -> Result<OperationHistory, SceneError> {
    Ok(parse_urdf(DOOR_URDF)?)
}

pub fn folding_door() -> Result<OperationHistory, SceneError> {
    Ok(parse_urdf(FOLDING_DOOR_URDF)?)
}

/// Garage door on a vertical rail at `x = 1.2` facing the robot. Door
/// variable `garage.a` (2 = closed), lock variable `garage.b` (0 = engaged).
pub fn garage(sharpness: f64) -> Result<OperationHistory, SceneError> {
    let mut h = OperationHistory::new();
    h.push(
        "create garage.rail",
        Operation::CreateBody(CreateBody {
            name: path("garage.rail"),
            pose: PoseRef::Literal(origin_transform([1.2, 0.0, 0.0], [0.0, 0.0, PI])),
        }),
    )?;
    h.push(
        "attach garage.door",
        Operation::AttachGarageDoor(AttachGarageDoor {
            parent: path("garage.rail"),
            door: path("garage.door"),
            rail_length: 2.0,
            var: "garage.a".into(),
            lock_var: "garage.b".into(),
            lock_threshold: 0.3,
            closed_threshold: 1.99,
            sharpness,
        }),
    )?;
    h.push(
        "shape garage.door",
        Operation::AttachShape(AttachShape {
            name: "garage.door".into(),
            attach_to: path("garage.door"),
            shape: Shape::Box {
                half_extents: [0.02, 0.5, 1.0],
            },
            pose: origin_transform([-0.02, 0.0, -1.0], [0.0; 3]),
        }),
    )?;
    Ok(h)
}

/// Replays the concatenation of several histories into one model.
pub fn combine(parts: &[OperationHistory]) -> Result<TaggedModel, SceneError> {
    let mut tm = TaggedModel::new();
    for h in parts {
        for e in h.entries() {
            tm.apply(e.tag.clone(), e.op.clone(), Placement::Append)?;
        }
    }
    Ok(tm)
}

/// Observation model of the estimation experiments: drawer, then door, then
/// garage door, one degree of freedom each. Returns the model and the
/// observed frames.
pub fn estimation_model(dof: usize) -> Result<(ArticulationModel, Vec<Path>), SceneError> {
    let parts: Vec<(OperationHistory, Path)> = vec![
        (drawer()?, path("drawer.body")),
        (door()?, path("door.panel")),
        (garage(DEFAULT_SHARPNESS)?, path("garage.door")),
    ];
    if !(1..=parts.len()).contains(&dof) {
        return Err(SceneError::UnsupportedDof(dof));
    }
    let (histories, frames): (Vec<_>, Vec<_>) = parts.into_iter().take(dof).unzip();
    Ok((combine(&histories)?.into_model(), frames))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Holonomic,
    DiffDrive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Grasp { ee: Path, grasp: Path },
    Push { robot_shape: String, object_shape: String },
}

/// A ready-to-run rollout: scene, start state, goal and task.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub scene: RolloutScene,
    pub q0: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_tolerance: f64,
    pub task: Task,
}

pub const SCENARIOS: [&str; 8] = [
    "grasp-drawer-open",
    "grasp-drawer-close",
    "grasp-drawer-open-diffdrive",
    "grasp-drawer-close-diffdrive",
    "push-drawer",
    "push-door",
    "push-folding-door",
    "push-garage-locked",
];

fn robot(base: Base) -> Result<(OperationHistory, Vec<Variable>), SceneError> {
    let arm = ARM_HOME.iter().map(|(n, _)| Variable::new(n));
    Ok(match base {
        Base::Holonomic => (
            holonomic_arm()?,
            ["robot.base_x", "robot.base_y", "robot.base_yaw"]
                .into_iter()
                .map(Variable::new)
                .chain(arm)
                .collect(),
        ),
        Base::DiffDrive => (
            diff_drive_arm()?,
            ["robot.lw", "robot.rw"].into_iter().map(Variable::new).chain(arm).collect(),
        ),
    })
}

/// Start state with the base at `(x, y, yaw)` and the arm at [`ARM_HOME`].
fn robot_start(base: Base, x: f64, y: f64, yaw: f64) -> Vec<(Variable, f64)> {
    let names = match base {
        Base::Holonomic => ["robot.base_x", "robot.base_y", "robot.base_yaw"],
        Base::DiffDrive => ["robot.x", "robot.y", "robot.theta"],
    };
    names
        .into_iter()
        .zip([x, y, yaw])
        .chain(ARM_HOME)
        .map(|(n, v)| (Variable::new(n), v))
        .collect()
}

struct Setup {
    base: Base,
    object: OperationHistory,
    object_vars: Vec<Variable>,
    start: Vec<(Variable, f64)>,
    goal: Vec<f64>,
    tolerance: f64,
    task: Task,
}

fn grasp_drawer(base: Base, from: f64, to: f64) -> Result<Setup, SceneError> {
    let mut start = robot_start(base, 0.068 - from, 0.0, 0.0);
    start.push((Variable::new("drawer.slide"), from));
    Ok(Setup {
        base,
        object: drawer()?,
        object_vars: vec![Variable::new("drawer.slide")],
        start,
        goal: vec![to],
        tolerance: 1e-2,
        task: Task::Grasp {
            ee: path("robot.ee"),
            grasp: path("drawer.handle"),
        },
    })
}

fn push_task(object_shape: &str) -> Task {
    Task::Push {
        robot_shape: "robot.ee".into(),
        object_shape: object_shape.into(),
    }
}

/// Places the fingertip `gap` off a panel's outer (−x) face: the panel is
/// hinged at `(1.2, 0.3)` about −z and opened by `angle`; the contact point
/// lies `s` along the panel.
fn panel_start(angle: f64, s: f64, gap: f64) -> (f64, f64) {
    let (sn, cs) = angle.sin_cos();
    let contact = (1.2 - s * sn, 0.3 - s * cs);
    let normal = (-cs, sn);
    let r = 0.03 + gap;
    (contact.0 + r * normal.0 - ARM_REACH, contact.1 + r * normal.1)
}

fn setup(name: &str) -> Result<Setup, SceneError> {
    let h = Base::Holonomic;
    Ok(match name {
        "grasp-drawer-open" => grasp_drawer(h, 0.0, 0.4)?,
        "grasp-drawer-close" => grasp_drawer(h, 0.4, 0.0)?,
        "grasp-drawer-open-diffdrive" => grasp_drawer(Base::DiffDrive, 0.0, 0.4)?,
        "grasp-drawer-close-diffdrive" => grasp_drawer(Base::DiffDrive, 0.4, 0.0)?,
        "push-drawer" => {
            // fingertip 5 cm in front of the open drawer, beside the handle
            let mut start = robot_start(h, 0.8 - 0.08 - ARM_REACH, 0.15, 0.0);
            start.push((Variable::new("drawer.slide"), 0.4));
            Setup {
                base: h,
                object: drawer()?,
                object_vars: vec![Variable::new("drawer.slide")],
                start,
                goal: vec![0.0],
                tolerance: 1e-2,
                task: push_task("drawer.body"),
            }
        }
        "push-door" => {
            let (x, y) = panel_start(0.4, 0.45, 0.05);
            let mut start = robot_start(h, x, y, 0.0);
            start.push((Variable::new("door.hinge"), 0.4));
            Setup {
                base: h,
                object: door()?,
                object_vars: vec![Variable::new("door.hinge")],
                start,
                goal: vec![0.0],
                tolerance: 2e-2,
                task: push_task("door.panel"),
            }
        }
        "push-folding-door" => {
            let (x, y) = panel_start(0.4, 0.15, 0.05);
            let mut start = robot_start(h, x, y, 0.0);
            start.push((Variable::new("folding.hinge"), 0.4));
            Setup {
                base: h,
                object: folding_door()?,
                object_vars: vec![Variable::new("folding.hinge")],
                start,
                goal: vec![0.0],
                tolerance: 2e-2,
                task: push_task("folding.inner"),
            }
        }
        "push-garage-locked" => {
            let mut start = robot_start(h, 1.2 - 0.08 - ARM_REACH, 0.0, 0.0);
            start.push((Variable::new("garage.a"), 1.999));
            start.push((Variable::new("garage.b"), 0.0));
            Setup {
                base: h,
                object: garage(LOCK_SHARPNESS)?,
                object_vars: vec![Variable::new("garage.a")],
                start,
                goal: vec![1.0],
                tolerance: 1e-2,
                task: push_task("garage.door"),
            }
        }
        other => return Err(SceneError::UnknownScenario(other.to_string())),
    })
}

/// Builds a named scenario from [`SCENARIOS`].
pub fn scenario(name: &str, dt: f64, step_limit: usize) -> Result<Scenario, SceneError> {
    let s = setup(name)?;
    let (robot_history, robot_vars) = robot(s.base)?;
    let model = combine(&[robot_history, s.object])?.into_model();
    let scene = RolloutScene::new(model, robot_vars, s.object_vars, dt, step_limit)?;
    let q0 = scene.state_from(s.start.iter().map(|(v, x)| (v, *x)))?;
    Ok(Scenario {
        name: name.to_string(),
        scene,
        q0,
        goal: s.goal,
        goal_tolerance: s.tolerance,
        task: s.task,
    })
}

impl Scenario {
    pub fn grasp_controller(&self, mut cfg: GraspConfig) -> Result<GraspController, ControlError> {
        let Task::Grasp { ee, grasp } = &self.task else {
            return Err(ControlError::InvalidScene(format!("{} is not a grasp task", self.name)));
        };
        cfg.goal_tolerance = self.goal_tolerance;
        GraspController::new(&self.scene, ee, grasp, self.goal.clone(), cfg)
    }

    pub fn push_controller(&self, mut cfg: PushConfig) -> Result<PushController, ControlError> {
        let Task::Push {
            robot_shape,
            object_shape,
        } = &self.task
        else {
            return Err(ControlError::InvalidScene(format!("{} is not a push task", self.name)));
        };
        cfg.goal_tolerance = self.goal_tolerance;
        PushController::new(&self.scene, robot_shape, object_shape, self.goal.clone(), cfg)
    }

    /// The task's controller with the given gains (the other config is ignored).
    pub fn controller(&self, grasp: GraspConfig, push: PushConfig) -> Result<Box<dyn Controller>, ControlError> {
        Ok(match self.task {
            Task::Grasp { .. } => Box::new(self.grasp_controller(grasp)?),
            Task::Push { .. } => Box::new(self.push_controller(push)?),
        })
    }

    /// Rolls out the task's controller with default gains.
    pub fn run(&self) -> Result<Trace, ControlError> {
        let mut c = self.controller(GraspConfig::default(), PushConfig::default())?;
        Ok(rollout(&self.scene, c.as_mut(), &self.q0))
    }

    /// Rolls out a controller that never moves.
    pub fn hold(&self) -> Trace {
        rollout(&self.scene, &mut HoldController, &self.q0)
    }
}

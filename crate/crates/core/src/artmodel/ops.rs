use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{ArticulationModel, Constraint, Definition, ModelError};
use super::Path;
use crate::geometry::{Shape, ShapeAttachment, IDENTITY_POSE};
use crate::symexpr::{
    constant_transform, rotation, softstep_lt, translation, ExtExpr, ExtMatrix, ScalarExpr, Variable,
    DEFAULT_SHARPNESS,
};

/// A deterministic model-building step. Serialized as
/// `{"kind": "<snake_case name>", "args": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum Operation {
    CreateBody(CreateBody),
    ConnectJoint(ConnectJoint),
    AttachDiffDrive(AttachDiffDrive),
    AttachGarageDoor(AttachGarageDoor),
    AddConstraint(AddConstraint),
    Define(Define),
    AttachShape(AttachShape),
}

/// Pose argument: a constant 4×4 transform or the current pose of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseRef {
    Literal([[f64; 4]; 4]),
    Frame(Path),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateBody {
    pub name: Path,
    #[serde(default = "identity_pose_ref")]
    pub pose: PoseRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Fixed,
    Revolute,
    Continuous,
    Prismatic,
}

/// Joint value `multiplier * joint + offset` taken from another joint variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mimic {
    pub joint: String,
    #[serde(default = "one")]
    pub multiplier: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectJoint {
    pub kind: JointKind,
    pub parent: Path,
    pub child: Path,
    #[serde(default = "identity_pose")]
    pub origin: [[f64; 4]; 4],
    #[serde(default = "x_axis")]
    pub axis: [f64; 3],
    /// Joint variable; unused for fixed and mimic joints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vel_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mimic: Option<Mimic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachDiffDrive {
    pub base: Path,
    pub wheel_radius: f64,
    pub axle_half_width: f64,
    pub x: String,
    pub y: String,
    pub theta: String,
    pub left_wheel: String,
    pub right_wheel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheel_vel_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachGarageDoor {
    pub parent: Path,
    pub door: Path,
    pub rail_length: f64,
    pub var: String,
    pub lock_var: String,
    #[serde(default = "default_lock_threshold")]
    pub lock_threshold: f64,
    #[serde(default = "default_closed_threshold")]
    pub closed_threshold: f64,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddConstraint {
    pub name: String,
    pub lb: ScalarExpr,
    pub ub: ScalarExpr,
    pub expr: ScalarExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Define {
    pub path: Path,
    pub value: Definition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachShape {
    pub name: String,
    pub attach_to: Path,
    pub shape: Shape,
    #[serde(default = "identity_pose")]
    pub pose: [[f64; 4]; 4],
}

fn identity_pose() -> [[f64; 4]; 4] {
    IDENTITY_POSE
}
fn identity_pose_ref() -> PoseRef {
    PoseRef::Literal(IDENTITY_POSE)
}
fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn one() -> f64 {
    1.0
}
fn default_lock_threshold() -> f64 {
    0.3
}
fn default_closed_threshold() -> f64 {
    1.99
}
fn default_sharpness() -> f64 {
    DEFAULT_SHARPNESS
}

/// Names an operation writes to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outputs {
    pub paths: BTreeSet<Path>,
    pub constraints: BTreeSet<String>,
    pub shapes: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub(crate) enum UndoEntry {
    Def(Path, Option<Definition>),
    Constraint(String, Option<Constraint>),
    Shape(String, Option<ShapeAttachment>),
}

/// Mutation front-end recording how to revert every write.
pub(crate) struct Recorder<'a> {
    pub(crate) model: &'a mut ArticulationModel,
    pub(crate) undo: Vec<UndoEntry>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(model: &'a mut ArticulationModel) -> Self {
        Recorder { model, undo: Vec::new() }
    }

    fn set_def(&mut self, path: Path, def: Definition) {
        let old = self.model.defs.insert(path.clone(), def);
        self.undo.push(UndoEntry::Def(path, old));
    }

    fn add_constraint(&mut self, name: String, c: Constraint) -> Result<(), ModelError> {
        if self.model.constraints.contains_key(&name) {
            return Err(ModelError::DuplicateName(name));
        }
        self.model.constraints.insert(name.clone(), c);
        self.undo.push(UndoEntry::Constraint(name, None));
        Ok(())
    }

    fn add_shape(&mut self, name: String, s: ShapeAttachment) -> Result<(), ModelError> {
        if self.model.shapes.contains_key(&name) {
            return Err(ModelError::DuplicateName(name));
        }
        self.model.shapes.insert(name.clone(), s);
        self.undo.push(UndoEntry::Shape(name, None));
        Ok(())
    }
}

pub(crate) fn revert(model: &mut ArticulationModel, undo: Vec<UndoEntry>) {
    for entry in undo.into_iter().rev() {
        match entry {
            UndoEntry::Def(p, Some(d)) => {
                model.defs.insert(p, d);
            }
            UndoEntry::Def(p, None) => {
                model.defs.remove(&p);
            }
            UndoEntry::Constraint(n, Some(c)) => {
                model.constraints.insert(n, c);
            }
            UndoEntry::Constraint(n, None) => {
                model.constraints.remove(&n);
            }
            UndoEntry::Shape(n, Some(s)) => {
                model.shapes.insert(n, s);
            }
            UndoEntry::Shape(n, None) => {
                model.shapes.remove(&n);
            }
        }
    }
}

fn variable(name: &str) -> Result<Variable, ModelError> {
    Variable::try_with_order(name, 0).map_err(|e| ModelError::InvalidArgument(e.to_string()))
}

fn finite(what: &str, v: f64) -> Result<f64, ModelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::InvalidArgument(format!("{what} must be finite")))
    }
}

fn check_transform(what: &str, m: &[[f64; 4]; 4]) -> Result<(), ModelError> {
    if m.iter().flatten().all(|v| v.is_finite()) && m[3] == [0.0, 0.0, 0.0, 1.0] {
        Ok(())
    } else {
        Err(ModelError::InvalidArgument(format!("{what} is not a homogeneous transform")))
    }
}

fn ext(e: ScalarExpr) -> ExtExpr {
    ExtExpr::lift(e)
}

impl ConnectJoint {
    fn joint_value(&self) -> Result<Option<ScalarExpr>, ModelError> {
        if self.kind == JointKind::Fixed {
            return Ok(None);
        }
        Ok(Some(match &self.mimic {
            Some(m) => {
                ScalarExpr::var(variable(&m.joint)?) * finite("mimic multiplier", m.multiplier)?
                    + finite("mimic offset", m.offset)?
            }
            None => {
                let name = self
                    .var
                    .as_deref()
                    .ok_or_else(|| ModelError::InvalidArgument("joint variable missing".into()))?;
                ScalarExpr::var(variable(name)?)
            }
        }))
    }

    fn unit_axis(&self) -> Result<[f64; 3], ModelError> {
        let [x, y, z] = self.axis;
        let n = (x * x + y * y + z * z).sqrt();
        if !(n > 1e-9) || !n.is_finite() {
            return Err(ModelError::InvalidArgument("joint axis has (near) zero norm".into()));
        }
        Ok([x / n, y / n, z / n])
    }

    fn has_position_constraint(&self) -> bool {
        self.mimic.is_none() && matches!(self.kind, JointKind::Revolute | JointKind::Prismatic)
    }

    fn has_velocity_constraint(&self) -> bool {
        self.mimic.is_none() && self.kind != JointKind::Fixed && self.vel_limit.is_some()
    }

    fn apply(&self, tag: &str, rec: &mut Recorder) -> Result<(), ModelError> {
        let parent = rec.model.fk(&self.parent)?.clone();
        check_transform("joint origin", &self.origin)?;
        let origin = constant_transform::<ExtExpr>(&self.origin);
        let joint: ExtMatrix = match self.joint_value()? {
            None => ExtMatrix::identity(4),
            Some(q) => {
                let k = self.unit_axis()?;
                let q = ext(q);
                match self.kind {
                    JointKind::Revolute | JointKind::Continuous => {
                        rotation([k[0].into(), k[1].into(), k[2].into()], q)
                    }
                    JointKind::Prismatic => translation(q.clone() * k[0], q.clone() * k[1], q * k[2]),
                    JointKind::Fixed => unreachable!(),
                }
            }
        };
        let fk = parent.compose(&origin)?.compose(&joint)?;
        rec.set_def(self.child.clone(), Definition::Matrix(fk));
        if self.has_position_constraint() {
            let [lo, hi] = self
                .limits
                .ok_or_else(|| ModelError::MissingLimits(tag.to_string()))?;
            if !(finite("lower limit", lo)? <= finite("upper limit", hi)?) {
                return Err(ModelError::InvalidArgument("lower limit exceeds upper limit".into()));
            }
            let q = self.joint_value()?.expect("non-fixed joint");
            rec.add_constraint(format!("{tag}/position"), Constraint::new(lo, hi, q))?;
        }
        if self.has_velocity_constraint() {
            let v = finite("velocity limit", self.vel_limit.unwrap_or_default())?.abs();
            let name = self.var.as_deref().expect("checked by joint_value");
            let qd = ScalarExpr::var(variable(name)?.derivative());
            rec.add_constraint(format!("{tag}/velocity"), Constraint::new(-v, v, qd))?;
        }
        Ok(())
    }
}

impl AttachDiffDrive {
    fn coordinate_paths(&self) -> Result<[Path; 3], ModelError> {
        let p = |s: &str| {
            self.base
                .join(s)
                .map_err(|e| ModelError::InvalidArgument(e.to_string()))
        };
        Ok([p("x")?, p("y")?, p("theta")?])
    }

    /// The base coordinates as extended expressions whose gradients carry the
    /// wheel-velocity entries.
    pub fn coordinates(&self) -> Result<[ExtExpr; 3], ModelError> {
        let r = finite("wheel radius", self.wheel_radius)?;
        let l = finite("axle half width", self.axle_half_width)?;
        if r <= 0.0 || l <= 0.0 {
            return Err(ModelError::InvalidArgument("wheel radius and axle width must be positive".into()));
        }
        let theta = ScalarExpr::var(variable(&self.theta)?);
        let lw = variable(&self.left_wheel)?.derivative();
        let rw = variable(&self.right_wheel)?.derivative();
        let half = r / 2.0;
        let cx = theta.cos() * half;
        let cy = theta.sin() * half;
        let x = ExtExpr::with_gradient(
            ScalarExpr::var(variable(&self.x)?),
            [(lw.clone(), cx.clone()), (rw.clone(), cx)],
        );
        let y = ExtExpr::with_gradient(
            ScalarExpr::var(variable(&self.y)?),
            [(lw.clone(), cy.clone()), (rw.clone(), cy)],
        );
        let w = r / (2.0 * l);
        let t = ExtExpr::with_gradient(
            theta,
            [(lw, ScalarExpr::constant(-w)), (rw, ScalarExpr::constant(w))],
        );
        Ok([x, y, t])
    }

    fn apply(&self, tag: &str, rec: &mut Recorder) -> Result<(), ModelError> {
        if let Some(existing) = rec.model.defs.get(&self.base) {
            if !existing.variables().is_empty() {
                return Err(ModelError::InvalidArgument(format!(
                    "base `{}` is already driven by variables",
                    self.base
                )));
            }
        }
        let [x, y, theta] = self.coordinates()?;
        let fk = translation(x.clone(), y.clone(), ExtExpr::constant(0.0))
            .compose(&rotation([0.0.into(), 0.0.into(), 1.0.into()], theta.clone()))?;
        rec.set_def(self.base.clone(), Definition::Matrix(fk));
        let [px, py, pt] = self.coordinate_paths()?;
        rec.set_def(px, Definition::Scalar(x));
        rec.set_def(py, Definition::Scalar(y));
        rec.set_def(pt, Definition::Scalar(theta));
        if let Some(v) = self.wheel_vel_limit {
            let v = finite("wheel velocity limit", v)?.abs();
            for (side, name) in [("left", &self.left_wheel), ("right", &self.right_wheel)] {
                let wd = ScalarExpr::var(variable(name)?.derivative());
                rec.add_constraint(format!("{tag}/{side}_velocity"), Constraint::new(-v, v, wd))?;
            }
        }
        Ok(())
    }
}

impl AttachGarageDoor {
    /// Door pose relative to the parent frame.
    pub fn local_transform(&self) -> Result<ExtMatrix, ModelError> {
        let l = finite("rail length", self.rail_length)?;
        if l <= 0.0 {
            return Err(ModelError::InvalidArgument("rail length must be positive".into()));
        }
        let a = ScalarExpr::var(variable(&self.var)?);
        let c = &a / l;
        let s = (1.0 - c.pow(2.0)).sqrt();
        let z = ScalarExpr::zero();
        let o = ScalarExpr::one();
        let entries = vec![
            c.clone(), z.clone(), s.clone(), z.clone(),
            z.clone(), o.clone(), z.clone(), z.clone(),
            -s, z.clone(), c, a,
            z.clone(), z.clone(), z, o,
        ];
        Ok(ExtMatrix::new(4, 4, entries.into_iter().map(ExtExpr::lift).collect())?)
    }

    /// `1 - (b ≺ lock_threshold)·(closed_threshold ≺ a)`: near 0 only when the
    /// lock is engaged and the door is (almost) closed.
    pub fn unlocked(&self) -> Result<ScalarExpr, ModelError> {
        if !(self.sharpness > 0.0) {
            return Err(ModelError::InvalidArgument("sharpness must be positive".into()));
        }
        let a = ScalarExpr::var(variable(&self.var)?);
        let b = ScalarExpr::var(variable(&self.lock_var)?);
        let locked = softstep_lt(b, finite("lock threshold", self.lock_threshold)?, self.sharpness)
            * softstep_lt(finite("closed threshold", self.closed_threshold)?, a, self.sharpness);
        Ok(1.0 - locked)
    }

    fn unlocked_path(&self) -> Result<Path, ModelError> {
        self.door
            .join("unlocked")
            .map_err(|e| ModelError::InvalidArgument(e.to_string()))
    }

    fn apply(&self, tag: &str, rec: &mut Recorder) -> Result<(), ModelError> {
        let parent = rec.model.fk(&self.parent)?.clone();
        let fk = parent.compose(&self.local_transform()?)?;
        let unlocked = self.unlocked()?;
        let a = ScalarExpr::var(variable(&self.var)?);
        rec.set_def(self.door.clone(), Definition::Matrix(fk));
        rec.set_def(self.unlocked_path()?, Definition::Scalar(ExtExpr::lift(unlocked.clone())));
        rec.add_constraint(format!("{tag}/position"), Constraint::new(0.0, self.rail_length, a.clone()))?;
        let ad = ScalarExpr::var(variable(&self.var)?.derivative());
        rec.add_constraint(format!("{tag}/lock"), Constraint::new(-unlocked.clone(), unlocked, ad))?;
        Ok(())
    }
}

impl Operation {
    pub fn kind(&self) -> &'static str {
        match self {
            Operation::CreateBody(_) => "create_body",
            Operation::ConnectJoint(_) => "connect_joint",
            Operation::AttachDiffDrive(_) => "attach_diff_drive",
            Operation::AttachGarageDoor(_) => "attach_garage_door",
            Operation::AddConstraint(_) => "add_constraint",
            Operation::Define(_) => "define",
            Operation::AttachShape(_) => "attach_shape",
        }
    }

    /// Declared outputs of this operation when applied under `tag`.
    pub fn outputs(&self, tag: &str) -> Outputs {
        let mut out = Outputs::default();
        match self {
            Operation::CreateBody(o) => {
                out.paths.insert(o.name.clone());
            }
            Operation::ConnectJoint(o) => {
                out.paths.insert(o.child.clone());
                if o.has_position_constraint() {
                    out.constraints.insert(format!("{tag}/position"));
                }
                if o.has_velocity_constraint() {
                    out.constraints.insert(format!("{tag}/velocity"));
                }
            }
            Operation::AttachDiffDrive(o) => {
                out.paths.insert(o.base.clone());
                if let Ok(ps) = o.coordinate_paths() {
                    out.paths.extend(ps);
                }
                if o.wheel_vel_limit.is_some() {
                    out.constraints.insert(format!("{tag}/left_velocity"));
                    out.constraints.insert(format!("{tag}/right_velocity"));
                }
            }
            Operation::AttachGarageDoor(o) => {
                out.paths.insert(o.door.clone());
                if let Ok(p) = o.unlocked_path() {
                    out.paths.insert(p);
                }
                out.constraints.insert(format!("{tag}/position"));
                out.constraints.insert(format!("{tag}/lock"));
            }
            Operation::AddConstraint(o) => {
                out.constraints.insert(o.name.clone());
            }
            Operation::Define(o) => {
                out.paths.insert(o.path.clone());
            }
            Operation::AttachShape(o) => {
                out.shapes.insert(o.name.clone());
            }
        }
        out
    }

    pub(crate) fn apply(&self, tag: &str, rec: &mut Recorder) -> Result<(), ModelError> {
        match self {
            Operation::CreateBody(o) => {
                if rec.model.contains(&o.name) {
                    return Err(ModelError::DuplicateName(o.name.to_string()));
                }
                let pose = match &o.pose {
                    PoseRef::Literal(m) => {
                        check_transform("body pose", m)?;
                        constant_transform(m)
                    }
                    PoseRef::Frame(p) => rec.model.fk(p)?.clone(),
                };
                rec.set_def(o.name.clone(), Definition::Matrix(pose));
                Ok(())
            }
            Operation::ConnectJoint(o) => o.apply(tag, rec),
            Operation::AttachDiffDrive(o) => o.apply(tag, rec),
            Operation::AttachGarageDoor(o) => o.apply(tag, rec),
            Operation::AddConstraint(o) => {
                rec.add_constraint(o.name.clone(), Constraint::new(o.lb.clone(), o.ub.clone(), o.expr.clone()))
            }
            Operation::Define(o) => {
                rec.set_def(o.path.clone(), o.value.clone());
                Ok(())
            }
            Operation::AttachShape(o) => {
                rec.model.fk(&o.attach_to)?;
                if !o.shape.is_valid() {
                    return Err(ModelError::InvalidArgument(format!("shape `{}` has non-positive size", o.name)));
                }
                check_transform("shape pose", &o.pose)?;
                rec.add_shape(
                    o.name.clone(),
                    ShapeAttachment {
                        path: o.attach_to.clone(),
                        shape: o.shape,
                        local_pose: o.pose,
                    },
                )
            }
        }
    }
}

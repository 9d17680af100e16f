use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Dim, Matrix, RawStorage, Vector3};
use serde::{Deserialize, Serialize};

use super::kin::{FrameEval, FrameKinematics};
use super::rollout::{Controller, RolloutScene, StepOutput};
use super::{solve_qp, velocity_bounds, ControlError, QProblem};
use crate::artmodel::Path;
use crate::geometry::{closest_points_at, ShapeAttachment};
use crate::symexpr::Variable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushConfig {
    pub kp: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Minimum `cos∠(−n, d)` for pushing.
    pub alignment: f64,
    pub contact_threshold: f64,
    pub avoidance_margin: f64,
    /// Fraction of a distance error closed per step by gap and avoidance rows.
    pub approach_gain: f64,
    pub slack_weight: f64,
    pub regularization: f64,
    pub goal_tolerance: f64,
    /// Other parts farther than margin plus this distance get no avoidance row.
    pub avoidance_horizon: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            kp: 1.0,
            lambda1: 1.0,
            lambda2: 0.5,
            alignment: 0.8,
            contact_threshold: 0.005,
            avoidance_margin: 0.02,
            approach_gain: 0.5,
            slack_weight: 1e4,
            regularization: 1e-3,
            goal_tolerance: 0.01,
            avoidance_horizon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushMode {
    /// Nothing left to do: the object is at its goal.
    Idle,
    /// Moving the contact point into a pushing position; the object is held.
    Approach,
    /// In contact and aligned; robot and object move together.
    Push,
}

/// Pushes an object part with one robot shape toward a goal configuration.
///
/// Every step re-queries the closest points `p` (object) and `r` (robot)
/// with normal `n` from `p` to `r`. While the robot is away or badly
/// aligned with the desired motion of `p`, it navigates along a blend of the
/// direction to `p` and a tangent that turns `−n` toward that motion. Once
/// touching and aligned, one QP moves robot and object together: contact
/// velocity rows keep them together, `ṗᵀn ≤ 0` forbids pulling and the
/// object velocity tracks a proportional term. In both modes the robot keeps
/// a margin to every other shape moved by the pushed part's variables.
#[derive(Debug, Clone)]
pub struct PushController {
    robot: ShapeAttachment,
    object: ShapeAttachment,
    others: Vec<ShapeAttachment>,
    goal: Vec<f64>,
    cfg: PushConfig,
    kin: BTreeMap<Path, FrameKinematics>,
    mode: PushMode,
}

impl PushController {
    pub fn new(
        scene: &RolloutScene,
        robot_shape: &str,
        object_shape: &str,
        goal: Vec<f64>,
        cfg: PushConfig,
    ) -> Result<Self, ControlError> {
        let model = scene.model();
        if goal.len() != scene.object_vars().len() {
            return Err(ControlError::InvalidScene(format!(
                "goal has {} entries for {} object variables",
                goal.len(),
                scene.object_vars().len()
            )));
        }
        let robot = model.shape(robot_shape)?.clone();
        let object = model.shape(object_shape)?.clone();
        let object_vars: BTreeSet<Variable> = scene.object_vars().iter().cloned().collect();
        let moving: BTreeSet<Variable> = model
            .get(&object.path)?
            .variables()
            .into_iter()
            .filter(|v| object_vars.contains(v))
            .collect();
        let parts = model.parts_moved_by(&moving);
        let others: Vec<ShapeAttachment> = model
            .shapes()
            .iter()
            .filter(|(name, s)| {
                name.as_str() != robot_shape && name.as_str() != object_shape && parts.contains(&s.path)
            })
            .map(|(_, s)| s.clone())
            .collect();
        let decision = scene.decision_vars();
        let mut kin = BTreeMap::new();
        for s in [&robot, &object].into_iter().chain(&others) {
            if !kin.contains_key(&s.path) {
                kin.insert(
                    s.path.clone(),
                    FrameKinematics::new(model, &s.path, scene.state_vars(), &decision)?,
                );
            }
        }
        Ok(Self {
            robot,
            object,
            others,
            goal,
            cfg,
            kin,
            mode: PushMode::Approach,
        })
    }

    pub fn config(&self) -> &PushConfig {
        &self.cfg
    }

    /// Mode chosen by the most recent step.
    pub fn mode(&self) -> PushMode {
        self.mode
    }

    /// Shapes the robot keeps its distance from.
    pub fn avoided(&self) -> &[ShapeAttachment] {
        &self.others
    }

    fn eval(&self, path: &Path, q: &[f64]) -> Result<FrameEval, ControlError> {
        self.kin[path].eval(q)
    }

    /// Hard rows keeping the robot shape `margin` away from the other parts.
    fn avoidance_rows(&self, p: &mut QProblem, q: &[f64], robot: &FrameEval, dt: f64) -> Result<(), ControlError> {
        for s in &self.others {
            let fs = self.eval(&s.path, q)?;
            let c = closest_points_at(s, fs.pose(), &self.robot, robot.pose())?;
            if c.distance > self.cfg.avoidance_margin + self.cfg.avoidance_horizon {
                continue;
            }
            let rel = robot.point_jacobian(&c.r_local) - fs.point_jacobian(&c.p_local);
            let a = row(&(c.n.transpose() * rel));
            let lb = self.cfg.approach_gain * (self.cfg.avoidance_margin - c.distance) / dt;
            p.add_row(a, lb, f64::INFINITY);
        }
        Ok(())
    }
}

fn row<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(m: &Matrix<f64, R, C, S>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn apply(j: &DMatrix<f64>, x: &[f64]) -> Vector3<f64> {
    Vector3::from_fn(|r, _| j.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
}

impl Controller for PushController {
    fn step(&mut self, scene: &RolloutScene, q: &[f64]) -> Result<StepOutput, ControlError> {
        let nr = scene.robot_vars().len();
        let n = nr + scene.object_vars().len();
        let dt = scene.dt;
        let cfg = self.cfg.clone();
        let decision = scene.decision_vars();
        let bounds = velocity_bounds(scene.model(), &decision, &scene.assignment(q), dt)?;

        let fr = self.eval(&self.robot.path, q)?;
        let fo = self.eval(&self.object.path, q)?;
        let c = closest_points_at(&self.object, fo.pose(), &self.robot, fr.pose())?;
        let jp = fo.point_jacobian(&c.p_local);
        let jr = fr.point_jacobian(&c.r_local);

        let des: Vec<f64> = scene
            .object_state(q)
            .iter()
            .zip(&self.goal)
            .zip(&bounds[nr..])
            .map(|((x, g), (lo, hi))| (cfg.kp * (g - x)).clamp(*lo, *hi))
            .collect();
        if des.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-9 {
            self.mode = PushMode::Idle;
            return Ok(StepOutput {
                qdot: vec![0.0; n],
                contact_distance: Some(c.distance),
                ppn: None,
            });
        }
        let mut des_full = vec![0.0; n];
        des_full[nr..].copy_from_slice(&des);
        let d = apply(&jp, &des_full);
        let align = if d.norm() > 1e-12 { -c.n.dot(&d) / d.norm() } else { -1.0 };
        self.mode = if c.distance <= cfg.contact_threshold && align >= cfg.alignment {
            PushMode::Push
        } else {
            PushMode::Approach
        };

        let mut p = QProblem::new(n);
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            p.set_bounds(i, *lo, *hi);
            if i < nr {
                p.w[i] = cfg.regularization;
            }
        }
        match self.mode {
            PushMode::Approach => {
                for i in nr..n {
                    p.set_bounds(i, 0.0, 0.0);
                }
                let gap = c.p - c.r;
                let u = if gap.norm() > 1e-9 { gap / gap.norm() } else { -c.n };
                let tangential = d - d.dot(&c.n) * c.n;
                let t_hat = if tangential.norm() > 1e-9 * d.norm().max(1e-12) {
                    -tangential / tangential.norm()
                } else {
                    Vector3::zeros()
                };
                let v = cfg.lambda1 * u + cfg.lambda2 * t_hat;
                for k in 0..3 {
                    p.add_soft_row(row(&jr.row(k)), v[k], v[k], cfg.slack_weight);
                }
                let toward = row(&(-c.n.transpose() * &jr));
                p.add_row(toward, f64::NEG_INFINITY, cfg.approach_gain * c.distance.max(0.0) / dt);
            }
            PushMode::Push => {
                for (i, x) in des.iter().enumerate() {
                    p.add_target(nr + i, *x, 1.0);
                }
                let rel = &jr - &jp;
                for k in 0..3 {
                    let target = -cfg.approach_gain * c.distance * c.n[k] / dt;
                    p.add_soft_row(row(&rel.row(k)), target, target, cfg.slack_weight);
                }
                p.add_row(row(&(c.n.transpose() * &jp)), f64::NEG_INFINITY, 0.0);
            }
            PushMode::Idle => unreachable!(),
        }
        self.avoidance_rows(&mut p, q, &fr, dt)?;
        let sol = solve_qp(&p)?;
        let qdot: Vec<f64> = sol
            .x
            .iter()
            .zip(&bounds)
            .enumerate()
            .map(|(i, (x, (lo, hi)))| {
                if self.mode == PushMode::Approach && i >= nr {
                    0.0
                } else {
                    x.clamp(*lo, *hi)
                }
            })
            .collect();
        let ppn = (self.mode == PushMode::Push).then(|| {
            apply(&jp, &qdot).dot(&c.n)
        });
        Ok(StepOutput {
            qdot,
            contact_distance: Some(c.distance),
            ppn,
        })
    }

    fn goal_reached(&self, scene: &RolloutScene, q: &[f64]) -> bool {
        scene
            .object_state(q)
            .iter()
            .zip(&self.goal)
            .all(|(x, g)| (x - g).abs() <= self.cfg.goal_tolerance)
    }
}

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::kin::FrameKinematics;
use super::rollout::{scale_into, Controller, RolloutScene, StepOutput};
use super::{pose_error, solve_qp, velocity_bounds, ControlError, QProblem};
use crate::artmodel::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    pub kp: f64,
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub max_iter: usize,
    pub slack_weight: f64,
    pub regularization: f64,
    pub stall_window: usize,
    pub stall_tol: f64,
    pub goal_tolerance: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            kp: 1.0,
            pos_tol: 1e-3,
            rot_tol: 1e-2,
            max_iter: 50,
            slack_weight: 1e4,
            regularization: 1e-6,
            stall_window: 5,
            stall_tol: 1e-8,
            goal_tolerance: 1e-2,
        }
    }
}

/// Drives a grasped object toward a goal configuration while keeping the
/// end effector `T_E` on the grasp frame `T_G`.
///
/// A first QP picks the object velocity from a proportional term inside the
/// object's velocity bounds. The object is advanced one step and a sequence
/// of QPs on the robot displacement (Gauss-Newton on the pose error) moves
/// `T_E` back onto `T_G`. The result is scaled uniformly into the robot's
/// velocity bounds; the object velocity gets the same factor so the grasp
/// stays closed.
#[derive(Debug, Clone)]
pub struct GraspController {
    goal: Vec<f64>,
    cfg: GraspConfig,
    ee: FrameKinematics,
    grasp: FrameKinematics,
}

impl GraspController {
    pub fn new(scene: &RolloutScene, ee: &Path, grasp: &Path, goal: Vec<f64>, cfg: GraspConfig) -> Result<Self, ControlError> {
        if goal.len() != scene.object_vars().len() {
            return Err(ControlError::InvalidScene(format!(
                "goal has {} entries for {} object variables",
                goal.len(),
                scene.object_vars().len()
            )));
        }
        let model = scene.model();
        Ok(Self {
            goal,
            ee: FrameKinematics::new(model, ee, scene.state_vars(), scene.robot_vars())?,
            grasp: FrameKinematics::new(model, grasp, scene.state_vars(), &[])?,
            cfg,
        })
    }

    pub fn config(&self) -> &GraspConfig {
        &self.cfg
    }

    /// World-frame translation and rotation error from `T_E` to `T_G`.
    pub fn grasp_error(&self, q: &[f64]) -> Result<(Vector3<f64>, Vector3<f64>), ControlError> {
        let e = self.ee.eval(q)?;
        let g = self.grasp.eval(q)?;
        let (t, r) = pose_error(&e.t, &g.t)?;
        let rot = e.rotation();
        Ok((rot * t, rot * r))
    }

    fn object_velocity(&self, scene: &RolloutScene, q: &[f64]) -> Result<Vec<f64>, ControlError> {
        let qa = scene.assignment(q);
        let bounds = velocity_bounds(scene.model(), scene.object_vars(), &qa, scene.dt)?;
        let q_obj = scene.object_state(q);
        if q_obj.is_empty() {
            return Ok(Vec::new());
        }
        let mut p = QProblem::new(q_obj.len());
        for (i, ((x, g), (lo, hi))) in q_obj.iter().zip(&self.goal).zip(&bounds).enumerate() {
            p.add_target(i, self.cfg.kp * (g - x), 1.0);
            p.set_bounds(i, *lo, *hi);
        }
        let sol = solve_qp(&p)?;
        Ok(sol.x.iter().zip(&bounds).map(|(x, (lo, hi))| x.clamp(*lo, *hi)).collect())
    }

    /// Accumulated robot displacement that puts `T_E` onto `T_G` at `q_plus`.
    fn track(&self, scene: &RolloutScene, q_plus: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>, ControlError> {
        let nr = scene.robot_vars().len();
        let no = scene.object_vars().len();
        let dt = scene.dt;
        let t_g = self.grasp.eval(q_plus)?.t;
        let mut acc = vec![0.0; nr];
        let mut cur = q_plus.to_vec();
        let mut history: Vec<f64> = Vec::new();
        for _ in 0..self.cfg.max_iter {
            let e = self.ee.eval(&cur)?;
            let (t, r) = pose_error(&e.t, &t_g)?;
            let rot = e.rotation();
            let (dp, dw) = (rot * t, rot * r);
            if dp.norm() <= self.cfg.pos_tol && dw.norm() <= self.cfg.rot_tol {
                break;
            }
            let err = (dp.norm_squared() + dw.norm_squared()).sqrt();
            history.push(err);
            let k = history.len();
            if k > self.cfg.stall_window && history[k - 1 - self.cfg.stall_window] - err < self.cfg.stall_tol {
                return Err(ControlError::IkStalled(err));
            }
            let jp = e.point_jacobian(&Vector3::zeros());
            let jw = e.angular_jacobian();
            let mut p = QProblem::new(nr);
            for i in 0..nr {
                p.w[i] = self.cfg.regularization;
                let (lo, hi) = bounds[i];
                p.set_bounds(i, lo * dt - acc[i], hi * dt - acc[i]);
            }
            for (jac, target) in [(&jp, dp), (&jw, dw)] {
                for row in 0..3 {
                    let a: Vec<f64> = jac.row(row).iter().copied().collect();
                    if a.iter().all(|x| x.abs() < 1e-12) {
                        continue;
                    }
                    p.add_soft_row(a, target[row], target[row], self.cfg.slack_weight);
                }
            }
            let sol = solve_qp(&p)?;
            let mut step = vec![0.0; nr + no];
            for i in 0..nr {
                let (lo, hi) = bounds[i];
                let d = sol.x[i].clamp(lo * dt - acc[i], hi * dt - acc[i]);
                step[i] = d;
                acc[i] += d;
            }
            cur = scene.integrate(&cur, &step, 1.0)?;
        }
        Ok(acc)
    }
}

impl Controller for GraspController {
    fn step(&mut self, scene: &RolloutScene, q: &[f64]) -> Result<StepOutput, ControlError> {
        let nr = scene.robot_vars().len();
        let dt = scene.dt;
        let qd_obj = self.object_velocity(scene, q)?;
        let mut obj_step = vec![0.0; nr];
        obj_step.extend(&qd_obj);
        let q_plus = scene.integrate(q, &obj_step, dt)?;

        let robot_bounds = velocity_bounds(scene.model(), scene.robot_vars(), &scene.assignment(q), dt)?;
        let acc = self.track(scene, &q_plus, &robot_bounds)?;
        let qd_robot: Vec<f64> = acc.iter().map(|d| d / dt).collect();
        let s = scale_into(&qd_robot, &robot_bounds);
        let mut qdot: Vec<f64> = qd_robot
            .iter()
            .zip(&robot_bounds)
            .map(|(x, (lo, hi))| (s * x).clamp(*lo, *hi))
            .collect();
        qdot.extend(qd_obj.iter().map(|x| s * x));
        Ok(StepOutput {
            qdot,
            contact_distance: None,
            ppn: None,
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

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use super::ControlError;
use crate::artmodel::ArticulationModel;
use crate::geometry::ShapeAttachment;
use crate::symexpr::{Assignment, CompiledExprs, Variable};

/// Position variable whose velocity is a state-dependent combination of
/// decision velocities (e.g. the pose of a differential-drive base).
#[derive(Debug, Clone)]
struct Coupling {
    target: usize,
    cols: Vec<usize>,
    tape: CompiledExprs,
}

/// A model with its decision variables, ready for kinematic rollouts.
#[derive(Debug, Clone)]
pub struct RolloutScene {
    model: ArticulationModel,
    robot_vars: Vec<Variable>,
    object_vars: Vec<Variable>,
    state_vars: Vec<Variable>,
    index: BTreeMap<Variable, usize>,
    couplings: Vec<Coupling>,
    pub dt: f64,
    pub step_limit: usize,
}

impl RolloutScene {
    pub fn new(
        model: ArticulationModel,
        robot_vars: Vec<Variable>,
        object_vars: Vec<Variable>,
        dt: f64,
        step_limit: usize,
    ) -> Result<Self, ControlError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ControlError::InvalidScene(format!("time step {dt} is not positive")));
        }
        let robot: BTreeSet<_> = robot_vars.iter().cloned().collect();
        let object: BTreeSet<_> = object_vars.iter().cloned().collect();
        if robot.len() != robot_vars.len() || object.len() != object_vars.len() {
            return Err(ControlError::InvalidScene("duplicate decision variable".into()));
        }
        if let Some(v) = robot.intersection(&object).next() {
            return Err(ControlError::InvalidScene(format!("{v} is both a robot and an object variable")));
        }
        if let Some(v) = robot.iter().chain(&object).find(|v| v.order() != 0) {
            return Err(ControlError::InvalidScene(format!("decision variable {v} is not a position")));
        }
        let mut all: BTreeSet<Variable> = model.variables().into_iter().filter(|v| v.order() == 0).collect();
        all.extend(robot.iter().cloned());
        all.extend(object.iter().cloned());
        let state_vars: Vec<Variable> = all.into_iter().collect();
        let index: BTreeMap<Variable, usize> = state_vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();

        let decision: Vec<Variable> = robot_vars.iter().chain(&object_vars).cloned().collect();
        let mut couplings = Vec::new();
        for (x, ext) in model.velocity_couplings() {
            if decision.contains(&x) {
                continue;
            }
            let mut cols = Vec::new();
            let mut exprs = Vec::new();
            for (j, v) in decision.iter().enumerate() {
                let e = ext.gradient_entry(&v.derivative());
                if e.as_const() != Some(0.0) {
                    cols.push(j);
                    exprs.push(e);
                }
            }
            if cols.is_empty() {
                continue;
            }
            let Some(&target) = index.get(&x) else { continue };
            couplings.push(Coupling {
                target,
                cols,
                tape: CompiledExprs::new(&exprs, &state_vars)?,
            });
        }
        Ok(Self {
            model,
            robot_vars,
            object_vars,
            state_vars,
            index,
            couplings,
            dt,
            step_limit,
        })
    }

    pub fn model(&self) -> &ArticulationModel {
        &self.model
    }

    pub fn robot_vars(&self) -> &[Variable] {
        &self.robot_vars
    }

    pub fn object_vars(&self) -> &[Variable] {
        &self.object_vars
    }

    /// Robot variables followed by object variables; the column order of
    /// every commanded velocity vector.
    pub fn decision_vars(&self) -> Vec<Variable> {
        self.robot_vars.iter().chain(&self.object_vars).cloned().collect()
    }

    /// Every position variable of the model, sorted; the layout of `q`.
    pub fn state_vars(&self) -> &[Variable] {
        &self.state_vars
    }

    pub fn shapes(&self) -> &BTreeMap<String, ShapeAttachment> {
        self.model.shapes()
    }

    pub fn index_of(&self, v: &Variable) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn assignment(&self, q: &[f64]) -> Assignment {
        self.state_vars.iter().cloned().zip(q.iter().copied()).collect()
    }

    /// State vector with the given values and zero elsewhere.
    pub fn state_from<'a>(&self, values: impl IntoIterator<Item = (&'a Variable, f64)>) -> Result<Vec<f64>, ControlError> {
        let mut q = vec![0.0; self.state_vars.len()];
        for (v, x) in values {
            let i = self
                .index_of(v)
                .ok_or_else(|| ControlError::InvalidScene(format!("{v} is not a state variable")))?;
            q[i] = x;
        }
        Ok(q)
    }

    pub fn robot_state(&self, q: &[f64]) -> Vec<f64> {
        self.robot_vars.iter().map(|v| q[self.index[v]]).collect()
    }

    pub fn object_state(&self, q: &[f64]) -> Vec<f64> {
        self.object_vars.iter().map(|v| q[self.index[v]]).collect()
    }

    /// One explicit Euler step: decision variables move by `dt·qdot`, coupled
    /// variables by `dt` times their gradient entries (at `q`) applied to `qdot`.
    pub fn integrate(&self, q: &[f64], qdot: &[f64], dt: f64) -> Result<Vec<f64>, ControlError> {
        let decision = self.robot_vars.iter().chain(&self.object_vars);
        assert_eq!(qdot.len(), self.robot_vars.len() + self.object_vars.len());
        let mut next = q.to_vec();
        for (v, qd) in decision.zip(qdot) {
            next[self.index[v]] += dt * qd;
        }
        for c in &self.couplings {
            let g = c.tape.eval(q)?;
            let rate: f64 = c.cols.iter().zip(&g).map(|(j, gj)| gj * qdot[*j]).sum();
            next[c.target] += dt * rate;
        }
        Ok(next)
    }
}

/// Output of one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Commanded velocity over [`RolloutScene::decision_vars`].
    pub qdot: Vec<f64>,
    pub contact_distance: Option<f64>,
    /// `ṗᵀn` of the pushed contact point while contact rows are active.
    pub ppn: Option<f64>,
}

pub trait Controller {
    fn step(&mut self, scene: &RolloutScene, q: &[f64]) -> Result<StepOutput, ControlError>;
    fn goal_reached(&self, scene: &RolloutScene, q: &[f64]) -> bool;
}

/// Commands zero velocity forever.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoldController;

impl Controller for HoldController {
    fn step(&mut self, scene: &RolloutScene, _q: &[f64]) -> Result<StepOutput, ControlError> {
        Ok(StepOutput {
            qdot: vec![0.0; scene.robot_vars.len() + scene.object_vars.len()],
            contact_distance: None,
            ppn: None,
        })
    }

    fn goal_reached(&self, _scene: &RolloutScene, _q: &[f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Running,
    GoalReached,
    StepLimit,
    Error(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Running => f.write_str("running"),
            Status::GoalReached => f.write_str("goal_reached"),
            Status::StepLimit => f.write_str("step_limit"),
            Status::Error(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time_s: f64,
    /// State after the step.
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub contact_distance: Option<f64>,
    pub ppn: Option<f64>,
    pub iter_ms: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub state_vars: Vec<Variable>,
    pub decision_vars: Vec<Variable>,
    pub q0: Vec<f64>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn status(&self) -> &Status {
        self.rows.last().map_or(&Status::Running, |r| &r.status)
    }

    pub fn final_state(&self) -> &[f64] {
        self.rows.last().map_or(&self.q0, |r| &r.q)
    }

    /// CSV header matching [`Trace::csv_record`].
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string(), "time_s".to_string()];
        h.extend(self.state_vars.iter().map(|v| v.to_string()));
        h.extend(["contact_distance", "ppn", "iter_ms", "status"].map(String::from));
        h
    }

    pub fn csv_record(row: &TraceRow) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut r = vec![row.step.to_string(), row.time_s.to_string()];
        r.extend(row.q.iter().map(|x| x.to_string()));
        r.push(opt(row.contact_distance));
        r.push(opt(row.ppn));
        r.push(row.iter_ms.to_string());
        r.push(row.status.to_string());
        r
    }
}

/// Runs `controller` from `q0` until the goal is reached, the step limit is
/// hit or the controller fails. A failure ends the trace with an
/// [`Status::Error`] row holding the unchanged state.
pub fn rollout(scene: &RolloutScene, controller: &mut dyn Controller, q0: &[f64]) -> Trace {
    let mut trace = Trace {
        state_vars: scene.state_vars.clone(),
        decision_vars: scene.decision_vars(),
        q0: q0.to_vec(),
        rows: Vec::new(),
    };
    if q0.len() != scene.state_vars.len() {
        trace.rows.push(TraceRow {
            step: 0,
            time_s: 0.0,
            q: q0.to_vec(),
            qdot: Vec::new(),
            contact_distance: None,
            ppn: None,
            iter_ms: 0.0,
            status: Status::Error(format!(
                "initial state has {} entries, expected {}",
                q0.len(),
                scene.state_vars.len()
            )),
        });
        return trace;
    }
    let mut q = q0.to_vec();
    for step in 0..scene.step_limit {
        let started = Instant::now();
        let out = controller
            .step(scene, &q)
            .and_then(|o| scene.integrate(&q, &o.qdot, scene.dt).map(|next| (o, next)));
        let iter_ms = started.elapsed().as_secs_f64() * 1e3;
        let time_s = (step + 1) as f64 * scene.dt;
        match out {
            Err(e) => {
                trace.rows.push(TraceRow {
                    step,
                    time_s,
                    q: q.clone(),
                    qdot: Vec::new(),
                    contact_distance: None,
                    ppn: None,
                    iter_ms,
                    status: Status::Error(e.to_string()),
                });
                return trace;
            }
            Ok((o, next)) => {
                q = next;
                let done = controller.goal_reached(scene, &q);
                trace.rows.push(TraceRow {
                    step,
                    time_s,
                    q: q.clone(),
                    qdot: o.qdot,
                    contact_distance: o.contact_distance,
                    ppn: o.ppn,
                    iter_ms,
                    status: if done { Status::GoalReached } else { Status::Running },
                });
                if done {
                    return trace;
                }
            }
        }
    }
    if let Some(last) = trace.rows.last_mut() {
        last.status = Status::StepLimit;
    }
    trace
}

/// Largest `s ∈ (0, 1]` with `s·qdot` inside `bounds`, ignoring components
/// whose interval excludes zero.
pub(crate) fn scale_into(qdot: &[f64], bounds: &[(f64, f64)]) -> f64 {
    let mut s: f64 = 1.0;
    for (x, (lo, hi)) in qdot.iter().zip(bounds) {
        if *x > *hi && *hi >= 0.0 {
            s = s.min(hi / x);
        } else if *x < *lo && *lo <= 0.0 {
            s = s.min(lo / x);
        }
    }
    s
}

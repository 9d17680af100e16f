//! Extended Kalman filter over a model's configuration space, observing the
//! world poses of selected frames.

mod harness;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use thiserror::Error;

use crate::artmodel::{ArticulationModel, ModelError, Path};
use crate::symexpr::{CompileError, CompiledExprs, EvalError, ScalarExpr, Variable};

pub use harness::{run_experiment, EkfExperiment, EkfRow, ExperimentSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("observed frames have no symbolic entries")]
    NoSymbolicEntries,
    #[error("bound of `{0}` depends on the state")]
    NonConstantBound(Variable),
    #[error("residual covariance is singular or badly conditioned")]
    SingularResidualCovariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Bounds for variables without position constraints.
pub const DEFAULT_BOUNDS: (f64, f64) = (-std::f64::consts::PI, std::f64::consts::PI);

/// Largest accepted condition number of the residual covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Fraction of a variable's range kept between the Jacobian evaluation point
/// and the bounds, where closed forms such as `sqrt(1 - x²)` have unbounded
/// slope.
pub const JACOBIAN_MARGIN: f64 = 1e-3;

/// The symbolic part of the stacked 4×4 poses of some frames.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    state_vars: Vec<Variable>,
    h: Vec<ScalarExpr>,
    frame_paths: Vec<Path>,
    entry_index: BTreeMap<(Path, usize, usize), usize>,
    entries: Vec<(usize, usize, usize)>,
    h_fn: CompiledExprs,
    jac_fn: CompiledExprs,
    pose_fn: CompiledExprs,
}

pub fn build_observation_model(
    model: &ArticulationModel,
    frame_paths: &[Path],
) -> Result<ObservationModel, EstimationError> {
    let mut h = Vec::new();
    let mut entry_index = BTreeMap::new();
    let mut entries = Vec::new();
    let mut poses = Vec::new();
    for (f, path) in frame_paths.iter().enumerate() {
        let fk = model.fk(path)?;
        for r in 0..4 {
            for c in 0..4 {
                let e = fk.get(r, c).expr().clone();
                if !e.variables().is_empty() {
                    entry_index.insert((path.clone(), r, c), h.len());
                    entries.push((f, r, c));
                    h.push(e.clone());
                }
                poses.push(e);
            }
        }
    }
    if h.is_empty() {
        return Err(EstimationError::NoSymbolicEntries);
    }
    let mut vars: Vec<Variable> = h
        .iter()
        .flat_map(|e| e.variables().iter().map(Variable::position))
        .collect();
    vars.sort();
    vars.dedup();
    let jac: Vec<ScalarExpr> = h
        .iter()
        .flat_map(|e| vars.iter().map(move |v| e.diff(v)))
        .collect();
    Ok(ObservationModel {
        h_fn: CompiledExprs::new(&h, &vars)?,
        jac_fn: CompiledExprs::new(&jac, &vars)?,
        pose_fn: CompiledExprs::new(&poses, &vars)?,
        state_vars: vars,
        h,
        frame_paths: frame_paths.to_vec(),
        entry_index,
        entries,
    })
}

impl ObservationModel {
    pub fn state_vars(&self) -> &[Variable] {
        &self.state_vars
    }

    pub fn h(&self) -> &[ScalarExpr] {
        &self.h
    }

    pub fn frame_paths(&self) -> &[Path] {
        &self.frame_paths
    }

    /// Position in `h` of each kept `(frame, row, col)` entry.
    pub fn entry_index(&self) -> &BTreeMap<(Path, usize, usize), usize> {
        &self.entry_index
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn eval_h(&self, q: &DVector<f64>) -> Result<DVector<f64>, EstimationError> {
        self.check_state(q)?;
        Ok(DVector::from_vec(self.h_fn.eval(q.as_slice())?))
    }

    /// Jacobian of `h` for the state variables at `q`.
    pub fn eval_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, EstimationError> {
        self.check_state(q)?;
        let flat = self.jac_fn.eval(q.as_slice())?;
        Ok(DMatrix::from_row_slice(self.h.len(), self.state_vars.len(), &flat))
    }

    /// World poses of the observed frames at `q`.
    pub fn frame_poses(&self, q: &DVector<f64>) -> Result<Vec<Matrix4<f64>>, EstimationError> {
        self.check_state(q)?;
        let flat = self.pose_fn.eval(q.as_slice())?;
        Ok(flat.chunks(16).map(Matrix4::from_row_slice).collect())
    }

    /// The symbolic entries of the given frame poses, stacked like `h`.
    pub fn extract(&self, poses: &[Matrix4<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|&(f, r, c)| poses[f][(r, c)]))
    }

    /// An observation of the frames at `q` with pose noise: per-axis
    /// translation noise `N(0, σ_t²)` and a rotation by `N(0, σ_r²)` about a
    /// uniformly random axis.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        q: &DVector<f64>,
        sigma_t: f64,
        sigma_r: f64,
        rng: &mut R,
    ) -> Result<DVector<f64>, EstimationError> {
        let poses = self.frame_poses(q)?;
        let noisy: Vec<Matrix4<f64>> = poses.iter().map(|p| perturb(p, sigma_t, sigma_r, rng)).collect();
        Ok(self.extract(&noisy))
    }

    fn check_state(&self, q: &DVector<f64>) -> Result<(), EstimationError> {
        if q.len() != self.state_vars.len() {
            return Err(EstimationError::Dimension {
                expected: self.state_vars.len(),
                got: q.len(),
            });
        }
        Ok(())
    }
}

fn perturb<R: Rng + ?Sized>(pose: &Matrix4<f64>, sigma_t: f64, sigma_r: f64, rng: &mut R) -> Matrix4<f64> {
    let nt = Normal::new(0.0, sigma_t).expect("finite sigma");
    let nr = Normal::new(0.0, sigma_r).expect("finite sigma");
    let dt = Vector3::new(nt.sample(rng), nt.sample(rng), nt.sample(rng));
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), nr.sample(rng));
    let mut out = *pose;
    let r = rot.matrix() * pose.fixed_view::<3, 3>(0, 0);
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    for i in 0..3 {
        out[(i, 3)] += dt[i];
    }
    out
}

/// Observation covariance from `n_samples` noisy observations at `q_nominal`,
/// plus `1e-9·I`.
pub fn estimate_r<R: Rng + ?Sized>(
    obs: &ObservationModel,
    q_nominal: &DVector<f64>,
    sigma_t: f64,
    sigma_r: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, EstimationError> {
    assert!(n_samples >= 2, "estimate_r needs at least two samples");
    let m = obs.dim();
    let samples = (0..n_samples)
        .map(|_| obs.observe(q_nominal, sigma_t, sigma_r, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = samples.iter().fold(DVector::zeros(m), |acc, s| acc + s) / n_samples as f64;
    let mut cov = DMatrix::zeros(m, m);
    for s in &samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n_samples - 1) as f64;
    Ok(symmetrize(cov) + DMatrix::identity(m, m) * 1e-9)
}

/// Filter state over the observation model's state variables.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub q: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl EkfState {
    fn clamp(&mut self) {
        for (x, (lb, ub)) in self.q.iter_mut().zip(&self.bounds) {
            *x = x.clamp(*lb, *ub);
        }
    }

    /// `q` pulled inside the bounds by [`JACOBIAN_MARGIN`] of each range.
    fn interior(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            q.len(),
            q.iter().zip(&self.bounds).map(|(x, (lb, ub))| {
                let m = JACOBIAN_MARGIN * (ub - lb);
                x.clamp(lb + m, ub - m)
            }),
        )
    }
}

/// Position bounds of `v` from the model's constraints on the bare variable.
pub fn variable_bounds(model: &ArticulationModel, v: &Variable) -> Result<Option<(f64, f64)>, EstimationError> {
    let mut out: Option<(f64, f64)> = None;
    let single = std::iter::once(v.clone()).collect();
    for (_, c) in model.constraints_for(&single) {
        if c.expr.as_var() != Some(v) {
            continue;
        }
        let (Some(lb), Some(ub)) = (c.lb.as_const(), c.ub.as_const()) else {
            return Err(EstimationError::NonConstantBound(v.clone()));
        };
        out = Some(match out {
            Some((l, u)) => (l.max(lb), u.min(ub)),
            None => (lb, ub),
        });
    }
    Ok(out)
}

/// Midpoint of the bounds with `Σ₀ = diag(((ub − lb)/2)²)`.
pub fn init_state(model: &ArticulationModel, obs: &ObservationModel) -> Result<EkfState, EstimationError> {
    let bounds = obs
        .state_vars()
        .iter()
        .map(|v| Ok(variable_bounds(model, v)?.unwrap_or(DEFAULT_BOUNDS)))
        .collect::<Result<Vec<_>, EstimationError>>()?;
    let n = bounds.len();
    let q = DVector::from_iterator(n, bounds.iter().map(|(l, u)| 0.5 * (l + u)));
    let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        bounds.iter().map(|(l, u)| (0.5 * (u - l)).powi(2)),
    ));
    Ok(EkfState { q, sigma, bounds })
}

fn check_obs(obs: &ObservationModel, z: &DVector<f64>) -> Result<(), EstimationError> {
    if z.len() != obs.dim() {
        return Err(EstimationError::Dimension {
            expected: obs.dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Projected gradient descent on `½‖h(q) − z₀‖²` with Armijo backtracking.
/// Past the first accepted step the step keeps halving while the cost drops.
/// The covariance is left untouched.
pub fn bootstrap(
    state: &EkfState,
    z0: &DVector<f64>,
    obs: &ObservationModel,
    steps: usize,
) -> Result<EkfState, EstimationError> {
    check_obs(obs, z0)?;
    let mut st = state.clone();
    st.clamp();
    let cost = |q: &DVector<f64>| -> Result<f64, EstimationError> { Ok(0.5 * (obs.eval_h(q)? - z0).norm_squared()) };
    let mut f = cost(&st.q)?;
    for _ in 0..steps {
        let r = obs.eval_h(&st.q)? - z0;
        let g = obs.eval_jacobian(&st.interior(&st.q))?.transpose() * r;
        if g.norm() == 0.0 {
            break;
        }
        let step = |t: f64| -> Result<(DVector<f64>, f64), EstimationError> {
            let mut cand = EkfState {
                q: &st.q - t * &g,
                ..st.clone()
            };
            cand.clamp();
            let fc = cost(&cand.q)?;
            Ok((cand.q, fc))
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let (q, fc) = step(t)?;
            if fc <= f + 1e-4 * g.dot(&(&q - &st.q)) {
                accepted = Some((q, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((mut q, mut fc)) = accepted else { break };
        // an accepted step can still overshoot a curved valley into a
        // 2-cycle; keep halving while the cost keeps dropping
        for _ in 0..60 {
            t *= 0.5;
            let (q2, f2) = step(t)?;
            if f2 >= fc {
                break;
            }
            (q, fc) = (q2, f2);
        }
        st.q = q;
        f = fc;
    }
    Ok(st)
}

/// `q ← q + Δt·q̇`, clamped; the prediction noise is zero.
pub fn predict(state: &EkfState, qdot: &DVector<f64>, dt: f64) -> EkfState {
    assert!(dt > 0.0, "predict needs a positive time step");
    let mut st = state.clone();
    st.q += dt * qdot;
    st.clamp();
    st
}

/// Standard EKF measurement update with the Jacobian evaluated at the
/// current estimate.
pub fn update(
    state: &EkfState,
    z: &DVector<f64>,
    obs: &ObservationModel,
    r: &DMatrix<f64>,
) -> Result<EkfState, EstimationError> {
    check_obs(obs, z)?;
    let h = obs.eval_jacobian(&state.interior(&state.q))?;
    let s = symmetrize(&h * &state.sigma * h.transpose() + r);
    let eig = s.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(EstimationError::SingularResidualCovariance);
    }
    let chol = s.cholesky().ok_or(EstimationError::SingularResidualCovariance)?;
    // K = Σ Hᵀ S⁻¹, computed as (S⁻¹ H Σ)ᵀ
    let k = chol.solve(&(&h * &state.sigma)).transpose();
    let innovation = z - obs.eval_h(&state.q)?;
    let mut st = state.clone();
    st.q += &k * innovation;
    st.clamp();
    let n = state.q.len();
    let a = DMatrix::identity(n, n) - &k * &h;
    // Joseph form keeps Σ positive semidefinite under round-off
    st.sigma = symmetrize(&a * &state.sigma * a.transpose() + &k * r * k.transpose());
    Ok(st)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests;

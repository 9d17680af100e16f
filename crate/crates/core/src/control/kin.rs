use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3};

use super::ControlError;
use crate::artmodel::{ArticulationModel, Path};
use crate::geometry::Pose;
use crate::symexpr::{CompiledExprs, JacobianRow, ScalarExpr, Variable};

/// Compiled pose of one frame and its derivatives for a list of columns.
///
/// Derivatives come from the extended gradients of the FK entries, so a
/// column can be a variable the pose depends on only through a velocity
/// coupling (a wheel of a differential drive, for instance).
#[derive(Debug, Clone)]
pub struct FrameKinematics {
    path: Path,
    n_cols: usize,
    tape: CompiledExprs,
}

/// [`FrameKinematics`] evaluated at one state.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub t: Matrix4<f64>,
    pub d: Vec<Matrix3x4<f64>>,
}

impl FrameKinematics {
    pub fn new(
        model: &ArticulationModel,
        path: &Path,
        state_vars: &[Variable],
        cols: &[Variable],
    ) -> Result<Self, ControlError> {
        let fk = model.fk(path)?;
        let mut exprs: Vec<ScalarExpr> = Vec::with_capacity(12 * (1 + cols.len()));
        for r in 0..3 {
            for c in 0..4 {
                exprs.push(fk.get(r, c).expr().clone());
            }
        }
        for v in cols {
            for r in 0..3 {
                for c in 0..4 {
                    exprs.push(fk.get(r, c).derivative_for(v));
                }
            }
        }
        Ok(Self {
            path: path.clone(),
            n_cols: cols.len(),
            tape: CompiledExprs::new(&exprs, state_vars)?,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn eval(&self, q: &[f64]) -> Result<FrameEval, ControlError> {
        let flat = self.tape.eval(q)?;
        let mut t = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                t[(r, c)] = flat[4 * r + c];
            }
        }
        let d = (0..self.n_cols)
            .map(|j| Matrix3x4::from_row_slice(&flat[12 * (j + 1)..12 * (j + 2)]))
            .collect();
        Ok(FrameEval { t, d })
    }
}

impl FrameEval {
    pub fn pose(&self) -> Pose {
        Pose::from_matrix(&self.t)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.t.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.t.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Jacobian (3×cols) of the world position of a point fixed in the frame.
    pub fn point_jacobian(&self, local: &Vector3<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(3, self.d.len());
        for (c, d) in self.d.iter().enumerate() {
            let col = d.fixed_view::<3, 3>(0, 0) * local + d.column(3);
            j.column_mut(c).copy_from(&col);
        }
        j
    }

    /// Jacobian (3×cols) of the frame's world angular velocity.
    pub fn angular_jacobian(&self) -> DMatrix<f64> {
        let rt = self.rotation().transpose();
        let mut j = DMatrix::zeros(3, self.d.len());
        for (c, d) in self.d.iter().enumerate() {
            let w = d.fixed_view::<3, 3>(0, 0) * rt;
            let v = Vector3::new(w[(2, 1)] - w[(1, 2)], w[(0, 2)] - w[(2, 0)], w[(1, 0)] - w[(0, 1)]) * 0.5;
            j.column_mut(c).copy_from(&v);
        }
        j
    }
}

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use thiserror::Error;

use super::eval::Evaluator;
use super::{Assignment, EvalError, ExtExpr, ScalarExpr, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("dimension mismatch: {op} on {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix needs {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
}

/// Scalar types usable as matrix entries: plain expressions and expressions
/// with extended gradients.
pub trait Symbolic:
    Clone
    + fmt::Debug
    + PartialEq
    + From<f64>
    + From<ScalarExpr>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
{
    fn scalar(&self) -> &ScalarExpr;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
}

impl Symbolic for ScalarExpr {
    fn scalar(&self) -> &ScalarExpr {
        self
    }
    fn sin(&self) -> Self {
        ScalarExpr::sin(self)
    }
    fn cos(&self) -> Self {
        ScalarExpr::cos(self)
    }
}

impl Symbolic for ExtExpr {
    fn scalar(&self) -> &ScalarExpr {
        self.expr()
    }
    fn sin(&self) -> Self {
        ExtExpr::sin(self)
    }
    fn cos(&self) -> Self {
        ExtExpr::cos(self)
    }
}

/// Row-major matrix of symbolic entries.
#[derive(Clone, PartialEq)]
pub struct Matrix<E> {
    rows: usize,
    cols: usize,
    entries: Vec<E>,
}

pub type MatrixExpr = Matrix<ScalarExpr>;
pub type ExtMatrix = Matrix<ExtExpr>;

impl<E: Symbolic> Matrix<E> {
    pub fn new(rows: usize, cols: usize, entries: Vec<E>) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(ShapeError::EntryCount {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(Matrix { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        Matrix { rows, cols, entries }
    }

    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self, ShapeError> {
        Self::new(rows, cols, values.iter().map(|v| E::from(*v)).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| E::from(if r == c { 1.0 } else { 0.0 }))
    }

    pub fn column(entries: Vec<E>) -> Self {
        let n = entries.len();
        Matrix {
            rows: n,
            cols: 1,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<E> {
        self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> &E {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        &self.entries[r * self.cols + c]
    }

    pub fn map<F: Symbolic>(&self, f: impl FnMut(&E) -> F) -> Matrix<F> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, ShapeError> {
        if self.cols != rhs.rows {
            return Err(ShapeError::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |r, c| {
            let mut acc = E::from(0.0);
            for k in 0..self.cols {
                acc = acc + self.get(r, k).clone() * rhs.get(k, c);
            }
            acc
        }))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, ShapeError> {
        if self.shape() != rhs.shape() {
            return Err(ShapeError::DimensionMismatch {
                op: "add",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c).clone() + rhs.get(r, c)
        }))
    }

    pub fn scale(&self, s: &E) -> Self {
        self.map(|e| e.clone() * s)
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c).clone())
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        self.entries
            .iter()
            .flat_map(|e| e.scalar().variables().iter().cloned())
            .collect()
    }

    pub fn scalars(&self) -> Matrix<ScalarExpr> {
        self.map(|e| e.scalar().clone())
    }

    /// Entrywise evaluation; shared sub-expressions are evaluated once.
    pub fn evaluate(&self, q: &Assignment) -> Result<DMatrix<f64>, EvalError> {
        let mut ev = Evaluator::new(q);
        let mut values = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            values.push(ev.eval(e.scalar())?);
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &values))
    }

    // homogeneous-transform helpers

    fn check_transform(&self, op: &'static str) -> Result<(), ShapeError> {
        if self.shape() != (4, 4) {
            return Err(ShapeError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: (4, 4),
            });
        }
        Ok(())
    }

    /// Product of two homogeneous transforms.
    pub fn compose(&self, rhs: &Self) -> Result<Self, ShapeError> {
        self.check_transform("compose")?;
        rhs.check_transform("compose")?;
        self.matmul(rhs)
    }

    /// Translation column of a 4×4 transform as a 3×1 matrix.
    pub fn position_of(&self) -> Result<Self, ShapeError> {
        self.check_transform("position_of")?;
        Ok(self.sub_matrix(0, 3, 3, 1))
    }

    pub fn rotation_of(&self) -> Result<Self, ShapeError> {
        self.check_transform("rotation_of")?;
        Ok(self.sub_matrix(0, 0, 3, 3))
    }

    /// Applies a 4×4 transform to a point given in its local frame.
    pub fn transform_point(&self, local: [f64; 3]) -> Result<Self, ShapeError> {
        self.check_transform("transform_point")?;
        Ok(Self::from_fn(3, 1, |r, _| {
            let mut acc = self.get(r, 3).clone();
            for (k, coord) in local.iter().enumerate() {
                if *coord != 0.0 {
                    acc = acc + self.get(r, k).clone() * &E::from(*coord);
                }
            }
            acc
        }))
    }
}

/// Homogeneous translation.
pub fn translation<E: Symbolic>(x: E, y: E, z: E) -> Matrix<E> {
    let mut m = Matrix::<E>::identity(4);
    m.entries[3] = x;
    m.entries[7] = y;
    m.entries[11] = z;
    m
}

/// Homogeneous rotation by `angle` about `axis` (right-handed, Rodrigues).
///
/// The axis must have unit norm wherever the result is evaluated. Constant
/// axes produce entries without the `c + (1 - c)` residue of the general
/// formula, so axis-aligned rotations keep their constant entries constant.
pub fn rotation<E: Symbolic>(axis: [E; 3], angle: E) -> Matrix<E> {
    let c = angle.cos();
    let s = angle.sin();
    let mut m = Matrix::<E>::identity(4);
    let consts: Option<Vec<f64>> = axis.iter().map(|a| a.scalar().as_const()).collect();
    match consts {
        Some(k) => {
            let skew = skew_numeric(&k);
            for i in 0..3 {
                for j in 0..3 {
                    let kk = k[i] * k[j];
                    let ccoef = if i == j { 1.0 } else { 0.0 } - kk;
                    let mut entry = E::from(kk);
                    if ccoef != 0.0 {
                        entry = E::from(ccoef) * &c + entry;
                    }
                    if skew[i][j] != 0.0 {
                        entry = entry + E::from(skew[i][j]) * &s;
                    }
                    m.entries[i * 4 + j] = entry;
                }
            }
        }
        None => {
            let one_minus_c = E::from(1.0) - c.clone();
            let [kx, ky, kz] = axis;
            let k = [kx, ky, kz];
            let skew = [
                [E::from(0.0), -k[2].clone(), k[1].clone()],
                [k[2].clone(), E::from(0.0), -k[0].clone()],
                [-k[1].clone(), k[0].clone(), E::from(0.0)],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    let mut entry =
                        one_minus_c.clone() * &(k[i].clone() * &k[j]) + skew[i][j].clone() * &s;
                    if i == j {
                        entry = c.clone() + &entry;
                    }
                    m.entries[i * 4 + j] = entry;
                }
            }
        }
    }
    m
}

fn skew_numeric(k: &[f64]) -> [[f64; 3]; 3] {
    [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
}

/// Homogeneous transform from a constant 4×4 row-major array.
pub fn constant_transform<E: Symbolic>(m: &[[f64; 4]; 4]) -> Matrix<E> {
    Matrix::from_fn(4, 4, |r, c| E::from(m[r][c]))
}

impl<E: Symbolic> fmt::Debug for Matrix<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{:?}", self.get(r, c))).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        f.write_str("]")
    }
}

impl From<MatrixExpr> for ExtMatrix {
    fn from(m: MatrixExpr) -> Self {
        m.map(|e| ExtExpr::lift(e.clone()))
    }
}

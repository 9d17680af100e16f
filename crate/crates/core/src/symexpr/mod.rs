//! Symbolic scalar and matrix expressions with evaluation, analytic
//! differentiation and extended gradients.

mod compile;
mod diff;
mod eval;
mod expr;
mod ext;
pub mod json;
mod matrix;
pub mod random;
mod variable;

pub use compile::{CompileError, CompiledExprs};
pub use eval::{Assignment, EvalError, Evaluator};
pub use expr::{sigmoid, softstep_lt, BinaryOp, ScalarExpr, UnaryOp};
pub use ext::{ExtExpr, ExtGradient};
pub use matrix::{
    constant_transform, rotation, translation, ExtMatrix, Matrix, MatrixExpr, ShapeError, Symbolic,
};
pub use variable::{InvalidVariable, Variable};

/// Runs a step of a recursive tree walk, growing the stack on demand so that
/// deep expression trees do not overflow small thread stacks.
pub(crate) fn grow<T>(f: impl FnOnce() -> T) -> T {
    stacker::maybe_grow(64 * 1024, 1024 * 1024, f)
}

/// Default sharpness of [`softstep_lt`].
pub const DEFAULT_SHARPNESS: f64 = 100.0;

/// Rows of a Jacobian: either plain expressions (analytic derivatives) or
/// extended expressions (gradient mapping entries).
pub trait JacobianRow {
    fn derivative_for(&self, v: &Variable) -> ScalarExpr;
}

impl JacobianRow for ScalarExpr {
    fn derivative_for(&self, v: &Variable) -> ScalarExpr {
        self.diff(v)
    }
}

impl JacobianRow for ExtExpr {
    fn derivative_for(&self, v: &Variable) -> ScalarExpr {
        self.gradient_entry(&v.derivative())
    }
}

/// Jacobian with entry `(i, j)` the derivative of row `i` for `vars[j]`.
///
/// For extended rows the entry is read from the gradient mapping under the
/// derivative key `vars[j]'`, so extra entries (e.g. wheel velocities of a
/// differential drive) show up as columns.
pub fn jacobian<R: JacobianRow>(rows: &[R], vars: &[Variable]) -> MatrixExpr {
    assert!(!vars.is_empty(), "jacobian needs at least one variable");
    assert!(!rows.is_empty(), "jacobian needs at least one row");
    Matrix::from_fn(rows.len(), vars.len(), |r, c| rows[r].derivative_for(&vars[c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_examples() {
        let (a, b) = (ScalarExpr::symbol("a"), ScalarExpr::symbol("b"));
        let (va, vb) = (Variable::new("a"), Variable::new("b"));
        let j = jacobian(&[a.sin() + b.pow(2.0)], &[va.clone(), vb.clone()]);
        assert_eq!(*j.get(0, 0), a.cos());
        assert_eq!(*j.get(0, 1), 2.0 * &b);
        let id = jacobian(&[a.clone(), b.clone()], &[va, vb]);
        assert_eq!(id, MatrixExpr::identity(2));
        let ext = ExtExpr::with_gradient(a.clone(), [(Variable::with_order("c", 1), ScalarExpr::constant(4.0))]);
        let jc = jacobian(&[ext], &[Variable::new("c")]);
        assert_eq!(jc.get(0, 0).as_const(), Some(4.0));
    }
}

use std::collections::HashMap;

use super::expr::{BinaryOp, Node, UnaryOp};
use super::{ScalarExpr, Variable};

/// d result / d arg for a unary node `result = op(arg)`.
pub(crate) fn unary_partial(op: UnaryOp, arg: &ScalarExpr, result: &ScalarExpr) -> ScalarExpr {
    match op {
        UnaryOp::Neg => ScalarExpr::constant(-1.0),
        UnaryOp::Sqrt => 0.5 / result,
        UnaryOp::Abs => arg.sign(),
        UnaryOp::Sin => arg.cos(),
        UnaryOp::Cos => -arg.sin(),
        UnaryOp::Tan => {
            let c = arg.cos();
            1.0 / (&c * &c)
        }
        UnaryOp::Asin => 1.0 / (1.0 - arg * arg).sqrt(),
        UnaryOp::Acos => -1.0 / (1.0 - arg * arg).sqrt(),
        UnaryOp::Exp => result.clone(),
        UnaryOp::Log => 1.0 / arg,
        UnaryOp::Sigmoid => result * (1.0 - result),
        UnaryOp::Sign => ScalarExpr::zero(),
    }
}

/// Applies the differentiation law of a binary node to the derivatives of its
/// operands. Works for both plain derivatives and extended-gradient entries.
pub(crate) fn binary_law(
    op: BinaryOp,
    a: &ScalarExpr,
    b: &ScalarExpr,
    result: &ScalarExpr,
    da: &ScalarExpr,
    db: &ScalarExpr,
) -> ScalarExpr {
    if da.is_zero() && db.is_zero() {
        return ScalarExpr::zero();
    }
    match op {
        BinaryOp::Add => da + db,
        BinaryOp::Sub => da - db,
        BinaryOp::Mul => b * da + a * db,
        BinaryOp::Div => da / b - a * db / (b * b),
        BinaryOp::Pow => {
            let base_term = if da.is_zero() {
                ScalarExpr::zero()
            } else {
                let reduced = match b.as_const() {
                    Some(c) => a.pow(c - 1.0),
                    None => a.pow(b - 1.0),
                };
                b * reduced * da
            };
            let exp_term = if db.is_zero() {
                ScalarExpr::zero()
            } else {
                result * a.ln() * db
            };
            base_term + exp_term
        }
        BinaryOp::Min => ScalarExpr::select(a.clone(), b.clone(), da.clone(), db.clone()),
        BinaryOp::Max => ScalarExpr::select(b.clone(), a.clone(), da.clone(), db.clone()),
        BinaryOp::Atan2 => (b * da - a * db) / (a * a + b * b),
    }
}

impl ScalarExpr {
    /// Analytic partial derivative with respect to `v`; zero if `v` does not occur.
    pub fn diff(&self, v: &Variable) -> ScalarExpr {
        diff_memo(self, v, &mut HashMap::new())
    }
}

pub(crate) fn diff_memo(
    e: &ScalarExpr,
    v: &Variable,
    memo: &mut HashMap<usize, ScalarExpr>,
) -> ScalarExpr {
    crate::symexpr::grow(|| diff_memo_inner(e, v, memo))
}

fn diff_memo_inner(
    e: &ScalarExpr,
    v: &Variable,
    memo: &mut HashMap<usize, ScalarExpr>,
) -> ScalarExpr {
    if !e.depends_on(v) {
        return ScalarExpr::zero();
    }
    if let Some(d) = memo.get(&e.ptr_id()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => ScalarExpr::zero(),
        Node::Var(x) => {
            if x == v {
                ScalarExpr::one()
            } else {
                ScalarExpr::zero()
            }
        }
        Node::Unary(op, a) => {
            let da = diff_memo(a, v, memo);
            if da.is_zero() {
                da
            } else {
                unary_partial(*op, a, e) * da
            }
        }
        Node::Binary(op, a, b) => {
            let da = diff_memo(a, v, memo);
            let db = diff_memo(b, v, memo);
            binary_law(*op, a, b, e, &da, &db)
        }
        Node::Select([l, r, t, o]) => {
            let dt = diff_memo(t, v, memo);
            let dof = diff_memo(o, v, memo);
            ScalarExpr::select(l.clone(), r.clone(), dt, dof)
        }
    };
    memo.insert(e.ptr_id(), d.clone());
    d
}

#[cfg(test)]
mod tests {
    use super::super::Assignment;
    use super::*;

    fn a() -> ScalarExpr {
        ScalarExpr::symbol("a")
    }
    fn b() -> ScalarExpr {
        ScalarExpr::symbol("b")
    }

    #[test]
    fn worked_derivatives() {
        let phi = a().sin() + b().pow(2.0);
        assert_eq!(phi.diff(&Variable::new("a")), a().cos());
        assert_eq!(phi.diff(&Variable::new("b")), 2.0 * b());
        assert!(ScalarExpr::constant(7.0).diff(&Variable::new("a")).is_zero());
        assert!(phi.diff(&Variable::new("c")).is_zero());
    }

    #[test]
    fn abs_and_min_conventions() {
        let va = Variable::new("a");
        let at = |e: &ScalarExpr, x: f64, y: f64| {
            e.evaluate(&Assignment::from_pairs([("a", x), ("b", y)])).unwrap()
        };
        let d_abs = a().abs().diff(&va);
        assert_eq!(at(&d_abs, 0.0, 0.0), 0.0);
        assert_eq!(at(&d_abs, -2.0, 0.0), -1.0);
        // ties pick the first argument
        let d_min = a().min(b()).diff(&va);
        assert_eq!(at(&d_min, 1.0, 1.0), 1.0);
        assert_eq!(at(&d_min, 2.0, 1.0), 0.0);
        let d_max = a().max(b()).diff(&va);
        assert_eq!(at(&d_max, 1.0, 1.0), 1.0);
        assert_eq!(at(&d_max, 0.0, 1.0), 0.0);
    }

    #[test]
    fn velocity_variables_are_independent_of_positions() {
        let vel = ScalarExpr::var(Variable::with_order("b", 1));
        assert!(vel.diff(&Variable::new("b")).is_zero());
        assert!(vel.diff(&Variable::with_order("b", 1)).is_one());
    }
}

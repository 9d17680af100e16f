use std::collections::HashMap;

use thiserror::Error;

use super::expr::{apply_binary, apply_unary, BinaryOp, Node, UnaryOp};
use super::{ScalarExpr, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no value assigned to variable `{0}`")]
    MissingVariable(Variable),
    #[error("domain error in `{op}` at argument {arg}")]
    DomainError { op: &'static str, arg: f64 },
}

/// A (possibly partial) mapping from variables to values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: HashMap<Variable, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an assignment from `(text form, value)` pairs, e.g. `("a'", 1.0)`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        pairs
            .into_iter()
            .map(|(name, v)| (name.parse::<Variable>().expect("valid variable"), v))
            .collect()
    }

    pub fn insert(&mut self, v: Variable, value: f64) -> Option<f64> {
        self.values.insert(v, value)
    }

    pub fn get(&self, v: &Variable) -> Option<f64> {
        self.values.get(v).copied()
    }

    pub fn contains(&self, v: &Variable) -> bool {
        self.values.contains_key(v)
    }

    pub fn remove(&mut self, v: &Variable) -> Option<f64> {
        self.values.remove(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    /// Whether every variable of `expr` has a value.
    pub fn is_full_for(&self, expr: &ScalarExpr) -> bool {
        expr.variables().iter().all(|v| self.contains(v))
    }

    /// Union; values in `other` win on conflicts.
    pub fn merged(&self, other: &Assignment) -> Assignment {
        let mut out = self.clone();
        out.values.extend(other.iter().map(|(k, v)| (k.clone(), v)));
        out
    }
}

impl FromIterator<(Variable, f64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (Variable, f64)>>(iter: T) -> Self {
        Assignment {
            values: iter.into_iter().collect(),
        }
    }
}

impl Extend<(Variable, f64)> for Assignment {
    fn extend<T: IntoIterator<Item = (Variable, f64)>>(&mut self, iter: T) {
        self.values.extend(iter)
    }
}

/// Recursive interpreter. Values of shared nodes are memoized for the lifetime
/// of the evaluator, so evaluating several entries of one matrix reuses work.
pub struct Evaluator<'q> {
    q: &'q Assignment,
    memo: HashMap<usize, f64>,
}

impl<'q> Evaluator<'q> {
    pub fn new(q: &'q Assignment) -> Self {
        Evaluator {
            q,
            memo: HashMap::new(),
        }
    }

    pub fn eval(&mut self, e: &ScalarExpr) -> Result<f64, EvalError> {
        crate::symexpr::grow(|| self.eval_inner(e))
    }

    fn eval_inner(&mut self, e: &ScalarExpr) -> Result<f64, EvalError> {
        let shared = e.is_shared();
        if shared {
            if let Some(v) = self.memo.get(&e.ptr_id()) {
                return Ok(*v);
            }
        }
        let value = match e.node() {
            Node::Const(c) => *c,
            Node::Var(v) => self
                .q
                .get(v)
                .ok_or_else(|| EvalError::MissingVariable(v.clone()))?,
            Node::Unary(op, a) => {
                let x = self.eval(a)?;
                unary_checked(*op, x)?
            }
            Node::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                binary_checked(*op, x, y)?
            }
            Node::Select([l, r, t, o]) => {
                if self.eval(l)? <= self.eval(r)? {
                    self.eval(t)?
                } else {
                    self.eval(o)?
                }
            }
        };
        if shared {
            self.memo.insert(e.ptr_id(), value);
        }
        Ok(value)
    }
}

pub(crate) fn unary_checked(op: UnaryOp, x: f64) -> Result<f64, EvalError> {
    apply_unary(op, x).ok_or(EvalError::DomainError {
        op: op.name(),
        arg: x,
    })
}

pub(crate) fn binary_checked(op: BinaryOp, x: f64, y: f64) -> Result<f64, EvalError> {
    apply_binary(op, x, y).ok_or(EvalError::DomainError {
        op: op.name(),
        arg: if op == BinaryOp::Div { y } else { x },
    })
}

impl ScalarExpr {
    /// Evaluates under `q`, which must cover [`ScalarExpr::variables`].
    pub fn evaluate(&self, q: &Assignment) -> Result<f64, EvalError> {
        Evaluator::new(q).eval(self)
    }

    /// Replaces the variables bound in `partial` by constants and folds.
    pub fn substitute(&self, partial: &Assignment) -> ScalarExpr {
        let map: HashMap<Variable, ScalarExpr> = partial
            .iter()
            .map(|(k, v)| (k.clone(), ScalarExpr::constant(v)))
            .collect();
        self.substitute_exprs(&map)
    }

    /// Replaces variables by expressions.
    pub fn substitute_exprs(&self, map: &HashMap<Variable, ScalarExpr>) -> ScalarExpr {
        substitute_memo(self, map, &mut HashMap::new())
    }
}

pub(crate) fn substitute_memo(
    e: &ScalarExpr,
    map: &HashMap<Variable, ScalarExpr>,
    memo: &mut HashMap<usize, ScalarExpr>,
) -> ScalarExpr {
    crate::symexpr::grow(|| substitute_memo_inner(e, map, memo))
}

fn substitute_memo_inner(
    e: &ScalarExpr,
    map: &HashMap<Variable, ScalarExpr>,
    memo: &mut HashMap<usize, ScalarExpr>,
) -> ScalarExpr {
    if !e.variables().iter().any(|v| map.contains_key(v)) {
        return e.clone();
    }
    if let Some(done) = memo.get(&e.ptr_id()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Var(v) => map.get(v).cloned().unwrap_or_else(|| e.clone()),
        Node::Unary(op, a) => ScalarExpr::unary(*op, substitute_memo(a, map, memo)),
        Node::Binary(op, a, b) => {
            let a = substitute_memo(a, map, memo);
            let b = substitute_memo(b, map, memo);
            ScalarExpr::binary(*op, a, b)
        }
        Node::Select([l, r, t, o]) => ScalarExpr::select(
            substitute_memo(l, map, memo),
            substitute_memo(r, map, memo),
            substitute_memo(t, map, memo),
            substitute_memo(o, map, memo),
        ),
    };
    memo.insert(e.ptr_id(), out.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> ScalarExpr {
        ScalarExpr::symbol("a").sin() + ScalarExpr::symbol("b").pow(2.0)
    }

    #[test]
    fn evaluates_worked_example() {
        let q = Assignment::from_pairs([("a", 0.0), ("b", 3.0)]);
        assert_eq!(phi().evaluate(&q).unwrap(), 9.0);
        assert_eq!(ScalarExpr::constant(5.0).evaluate(&Assignment::new()).unwrap(), 5.0);
    }

    #[test]
    fn missing_variable_is_reported() {
        let q = Assignment::from_pairs([("a", 0.0)]);
        assert_eq!(
            phi().evaluate(&q),
            Err(EvalError::MissingVariable(Variable::new("b")))
        );
    }

    #[test]
    fn domain_errors() {
        let x = ScalarExpr::symbol("x");
        let q = Assignment::from_pairs([("x", -1.0)]);
        assert!(matches!(x.sqrt().evaluate(&q), Err(EvalError::DomainError { op: "sqrt", .. })));
        assert!(matches!(x.ln().evaluate(&q), Err(EvalError::DomainError { op: "log", .. })));
        let q2 = Assignment::from_pairs([("x", 1.5)]);
        assert!(x.asin().evaluate(&q2).is_err());
        assert!(x.acos().evaluate(&q2).is_err());
        let q0 = Assignment::from_pairs([("x", 0.0)]);
        assert!(matches!((1.0 / &x).evaluate(&q0), Err(EvalError::DomainError { op: "div", .. })));
        assert!(x.pow(-1.0).evaluate(&q0).is_err());
        assert!(x.pow(0.5).evaluate(&q).is_err());
        assert_eq!(x.pow(2.0).evaluate(&q).unwrap(), 1.0);
    }

    #[test]
    fn substitution_folds_constants() {
        let s = phi().substitute(&Assignment::from_pairs([("b", 2.0)]));
        assert_eq!(s, ScalarExpr::symbol("a").sin() + 4.0);
        assert_eq!(phi().substitute(&Assignment::new()), phi());
        let vars: Vec<_> = s.variables().iter().cloned().collect();
        assert_eq!(vars, vec![Variable::new("a")]);
    }

    #[test]
    fn min_max_tie_rules() {
        let a = ScalarExpr::symbol("a");
        let b = ScalarExpr::symbol("b");
        let q = Assignment::from_pairs([("a", 1.0), ("b", 1.0)]);
        assert_eq!(a.min(&b).evaluate(&q).unwrap(), 1.0);
        assert_eq!(a.max(&b).evaluate(&q).unwrap(), 1.0);
    }
}

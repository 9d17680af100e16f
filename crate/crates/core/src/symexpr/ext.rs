use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::diff::{binary_law, unary_partial};
use super::expr::{BinaryOp, UnaryOp};
use super::{Assignment, EvalError, ScalarExpr, Variable};

/// Gradient as a mapping from derivative variables to expressions. Missing
/// keys mean a zero derivative.
pub type ExtGradient = BTreeMap<Variable, ScalarExpr>;

/// An expression paired with an extended gradient.
///
/// Only the *explicit* entries are stored: overrides of analytic derivatives
/// and extra entries for variables the expression does not contain. Every
/// other key `v'` implicitly maps to `diff(expr, v)`. Arithmetic propagates
/// the explicit entries through the laws of differentiation, so an override
/// never falls back to the analytic derivative.
#[derive(Clone, PartialEq)]
pub struct ExtExpr {
    expr: ScalarExpr,
    explicit: ExtGradient,
}

impl ExtExpr {
    /// Plain expression with its analytic gradient.
    pub fn lift(expr: impl Into<ScalarExpr>) -> Self {
        ExtExpr {
            expr: expr.into(),
            explicit: BTreeMap::new(),
        }
    }

    /// Expression whose gradient entries for the given derivative keys are
    /// replaced (if the variable occurs) or added (if it does not).
    pub fn with_gradient(
        expr: impl Into<ScalarExpr>,
        entries: impl IntoIterator<Item = (Variable, ScalarExpr)>,
    ) -> Self {
        let explicit: ExtGradient = entries.into_iter().collect();
        assert!(
            explicit.keys().all(|k| k.order() >= 1),
            "gradient keys must be derivative variables"
        );
        ExtExpr {
            expr: expr.into(),
            explicit,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::lift(ScalarExpr::constant(value))
    }

    pub fn expr(&self) -> &ScalarExpr {
        &self.expr
    }

    pub fn into_expr(self) -> ScalarExpr {
        self.expr
    }

    /// The overridden and extra entries.
    pub fn explicit_gradient(&self) -> &ExtGradient {
        &self.explicit
    }

    pub fn has_explicit_gradient(&self) -> bool {
        !self.explicit.is_empty()
    }

    /// True when `key` is explicitly stored and `key`'s variable occurs in the
    /// expression, i.e. the analytic derivative is replaced.
    pub fn is_override(&self, key: &Variable) -> bool {
        self.explicit.contains_key(key)
            && key
                .integral()
                .is_some_and(|v| self.expr.depends_on(&v))
    }

    pub fn variables(&self) -> &BTreeSet<Variable> {
        self.expr.variables()
    }

    /// Gradient entry for a derivative key such as `a'`.
    pub fn gradient_entry(&self, key: &Variable) -> ScalarExpr {
        if let Some(e) = self.explicit.get(key) {
            return e.clone();
        }
        match key.integral() {
            Some(v) => self.expr.diff(&v),
            None => ScalarExpr::zero(),
        }
    }

    pub fn gradient_keys(&self) -> BTreeSet<Variable> {
        let mut keys: BTreeSet<Variable> = self.expr.variables().iter().map(Variable::derivative).collect();
        keys.extend(self.explicit.keys().cloned());
        keys
    }

    /// The full gradient mapping.
    pub fn gradient(&self) -> ExtGradient {
        let mut memo = HashMap::new();
        self.gradient_keys()
            .into_iter()
            .map(|k| {
                let entry = match self.explicit.get(&k) {
                    Some(e) => e.clone(),
                    None => {
                        memo.clear();
                        let v = k.integral().expect("derivative key");
                        super::diff::diff_memo(&self.expr, &v, &mut memo)
                    }
                };
                (k, entry)
            })
            .collect()
    }

    pub fn evaluate(&self, q: &Assignment) -> Result<f64, EvalError> {
        self.expr.evaluate(q)
    }

    /// Binds variables to constants in the expression and its explicit entries.
    pub fn substitute(&self, partial: &Assignment) -> ExtExpr {
        ExtExpr {
            expr: self.expr.substitute(partial),
            explicit: self
                .explicit
                .iter()
                .map(|(k, e)| (k.clone(), e.substitute(partial)))
                .collect(),
        }
    }

    pub fn unary(op: UnaryOp, a: &ExtExpr) -> ExtExpr {
        let expr = ScalarExpr::unary(op, a.expr.clone());
        let explicit = if a.explicit.is_empty() {
            BTreeMap::new()
        } else {
            let partial = unary_partial(op, &a.expr, &expr);
            a.explicit
                .iter()
                .map(|(k, g)| (k.clone(), &partial * g))
                .collect()
        };
        ExtExpr { expr, explicit }
    }

    pub fn binary(op: BinaryOp, a: &ExtExpr, b: &ExtExpr) -> ExtExpr {
        let expr = ScalarExpr::binary(op, a.expr.clone(), b.expr.clone());
        let mut explicit = BTreeMap::new();
        if !(a.explicit.is_empty() && b.explicit.is_empty()) {
            let keys: BTreeSet<&Variable> = a.explicit.keys().chain(b.explicit.keys()).collect();
            for k in keys {
                let ga = a.gradient_entry(k);
                let gb = b.gradient_entry(k);
                explicit.insert(k.clone(), binary_law(op, &a.expr, &b.expr, &expr, &ga, &gb));
            }
        }
        ExtExpr { expr, explicit }
    }

    pub fn pow(&self, exponent: impl Into<ExtExpr>) -> Self {
        Self::binary(BinaryOp::Pow, self, &exponent.into())
    }
    pub fn sqrt(&self) -> Self {
        Self::unary(UnaryOp::Sqrt, self)
    }
    pub fn abs(&self) -> Self {
        Self::unary(UnaryOp::Abs, self)
    }
    pub fn sin(&self) -> Self {
        Self::unary(UnaryOp::Sin, self)
    }
    pub fn cos(&self) -> Self {
        Self::unary(UnaryOp::Cos, self)
    }
    pub fn tan(&self) -> Self {
        Self::unary(UnaryOp::Tan, self)
    }
    pub fn asin(&self) -> Self {
        Self::unary(UnaryOp::Asin, self)
    }
    pub fn acos(&self) -> Self {
        Self::unary(UnaryOp::Acos, self)
    }
    pub fn exp(&self) -> Self {
        Self::unary(UnaryOp::Exp, self)
    }
    pub fn ln(&self) -> Self {
        Self::unary(UnaryOp::Log, self)
    }
    pub fn sigmoid(&self) -> Self {
        Self::unary(UnaryOp::Sigmoid, self)
    }
    pub fn min(&self, other: impl Into<ExtExpr>) -> Self {
        Self::binary(BinaryOp::Min, self, &other.into())
    }
    pub fn max(&self, other: impl Into<ExtExpr>) -> Self {
        Self::binary(BinaryOp::Max, self, &other.into())
    }
    pub fn atan2(&self, x: impl Into<ExtExpr>) -> Self {
        Self::binary(BinaryOp::Atan2, self, &x.into())
    }
}

impl From<ScalarExpr> for ExtExpr {
    fn from(e: ScalarExpr) -> Self {
        ExtExpr::lift(e)
    }
}

impl From<f64> for ExtExpr {
    fn from(v: f64) -> Self {
        ExtExpr::constant(v)
    }
}

impl From<&ExtExpr> for ExtExpr {
    fn from(e: &ExtExpr) -> Self {
        e.clone()
    }
}

impl fmt::Debug for ExtExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExtExpr({}", self.expr)?;
        if !self.explicit.is_empty() {
            f.write_str(", {")?;
            for (i, (k, e)) in self.explicit.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k} -> {e}")?;
            }
            f.write_str("}")?;
        }
        f.write_str(")")
    }
}

macro_rules! ext_binary_impl {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<ExtExpr> for ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, &self, &rhs)
            }
        }
        impl $trait<&ExtExpr> for ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: &ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, &self, rhs)
            }
        }
        impl $trait<ExtExpr> for &ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, self, &rhs)
            }
        }
        impl $trait<&ExtExpr> for &ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: &ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, self, rhs)
            }
        }
        impl $trait<f64> for ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: f64) -> ExtExpr {
                ExtExpr::binary($op, &self, &ExtExpr::constant(rhs))
            }
        }
        impl $trait<f64> for &ExtExpr {
            type Output = ExtExpr;
            fn $method(self, rhs: f64) -> ExtExpr {
                ExtExpr::binary($op, self, &ExtExpr::constant(rhs))
            }
        }
        impl $trait<ExtExpr> for f64 {
            type Output = ExtExpr;
            fn $method(self, rhs: ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, &ExtExpr::constant(self), &rhs)
            }
        }
        impl $trait<&ExtExpr> for f64 {
            type Output = ExtExpr;
            fn $method(self, rhs: &ExtExpr) -> ExtExpr {
                ExtExpr::binary($op, &ExtExpr::constant(self), rhs)
            }
        }
    };
}

ext_binary_impl!(Add, add, BinaryOp::Add);
ext_binary_impl!(Sub, sub, BinaryOp::Sub);
ext_binary_impl!(Mul, mul, BinaryOp::Mul);
ext_binary_impl!(Div, div, BinaryOp::Div);

impl Neg for ExtExpr {
    type Output = ExtExpr;
    fn neg(self) -> ExtExpr {
        ExtExpr::unary(UnaryOp::Neg, &self)
    }
}

impl Neg for &ExtExpr {
    type Output = ExtExpr;
    fn neg(self) -> ExtExpr {
        ExtExpr::unary(UnaryOp::Neg, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Variable {
        s.parse().unwrap()
    }
    fn s(name: &str) -> ScalarExpr {
        ScalarExpr::symbol(name)
    }

    #[test]
    fn lifted_gradient_is_analytic() {
        let phi = ExtExpr::lift(s("a").sin() + s("b").pow(2.0));
        let g = phi.gradient();
        assert_eq!(g.len(), 2);
        assert_eq!(g[&v("a'")], s("a").cos());
        assert_eq!(g[&v("b'")], 2.0 * s("b"));
        assert!(ExtExpr::constant(3.0).gradient().is_empty());
    }

    #[test]
    fn overrides_and_extras() {
        let phi = ExtExpr::with_gradient(
            s("a").sin() + s("b").pow(2.0),
            [(v("b'"), ScalarExpr::one()), (v("c'"), ScalarExpr::constant(4.0))],
        );
        let g = phi.gradient();
        assert_eq!(g[&v("a'")], s("a").cos());
        assert!(g[&v("b'")].is_one());
        assert_eq!(g[&v("c'")].as_const(), Some(4.0));
        assert!(phi.is_override(&v("b'")));
        assert!(!phi.is_override(&v("c'")));
        assert!(!phi.variables().contains(&v("c")));
    }

    #[test]
    fn product_propagates_overrides() {
        let phi = ExtExpr::with_gradient(
            s("a").sin() + s("b").pow(2.0),
            [(v("b'"), ScalarExpr::one()), (v("c'"), ScalarExpr::constant(4.0))],
        );
        let psi = ExtExpr::lift(4.0 * s("a"));
        let prod = &phi * &psi;
        let g = prod.gradient();
        let q = Assignment::from_pairs([("a", 0.7), ("b", -1.3)]);
        let (a, b) = (0.7f64, -1.3f64);
        let ev = |e: &ScalarExpr| e.evaluate(&q).unwrap();
        assert!((ev(&g[&v("a'")]) - 4.0 * (a.sin() + a * a.cos() + b * b)).abs() < 1e-12);
        assert!((ev(&g[&v("b'")]) - 4.0 * a).abs() < 1e-12);
        assert!((ev(&g[&v("c'")]) - 16.0 * a).abs() < 1e-12);
    }

    #[test]
    fn sum_and_annihilation() {
        let sum = ExtExpr::lift(s("a")) + ExtExpr::lift(s("b"));
        let g = sum.gradient();
        assert!(g[&v("a'")].is_one() && g[&v("b'")].is_one());
        let zero = ExtExpr::lift(s("a")) * ExtExpr::constant(0.0);
        assert!(zero.gradient().values().all(|e| e.is_zero()));
    }

    #[test]
    fn chain_rule_on_extra_entries() {
        let theta = ExtExpr::with_gradient(s("t"), [(v("w'"), ScalarExpr::constant(2.0))]);
        let c = theta.cos();
        let q = Assignment::from_pairs([("t", 0.4)]);
        let got = c.gradient_entry(&v("w'")).evaluate(&q).unwrap();
        assert!((got - (-(0.4f64).sin() * 2.0)).abs() < 1e-15);
    }
}

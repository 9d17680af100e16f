use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use super::Variable;

/// Single-argument node kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Exp,
    Log,
    Sigmoid,
    /// sign(x) with sign(0) = 0. Appears as the derivative of `abs`.
    Sign,
}

/// Two-argument node kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    /// `atan2(y, x)` with the first argument as `y`.
    Atan2,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 12] = [
        UnaryOp::Neg,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Asin,
        UnaryOp::Acos,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sigmoid,
        UnaryOp::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Asin => "asin",
            UnaryOp::Acos => "acos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Sign => "sign",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 8] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
        BinaryOp::Min,
        BinaryOp::Max,
        BinaryOp::Atan2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
            BinaryOp::Atan2 => "atan2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug)]
pub(crate) enum Node {
    Const(f64),
    Var(Variable),
    Unary(UnaryOp, ScalarExpr),
    Binary(BinaryOp, ScalarExpr, ScalarExpr),
    /// `if lhs <= rhs { then } else { otherwise }`; the derivative of min/max.
    Select([ScalarExpr; 4]),
}

pub(crate) struct Inner {
    pub(crate) node: Node,
    vars: Arc<BTreeSet<Variable>>,
    hash: u64,
}

/// An immutable symbolic expression evaluating to a real number.
///
/// Nodes are reference counted, so cloning is cheap and sub-expressions are
/// shared between the expressions built from them. Construction applies a
/// small canonical simplification: constant folding, elimination of additive
/// zeros and multiplicative ones/zeros, and double negation.
#[derive(Clone)]
pub struct ScalarExpr(pub(crate) Arc<Inner>);

fn empty_vars() -> Arc<BTreeSet<Variable>> {
    static EMPTY: OnceLock<Arc<BTreeSet<Variable>>> = OnceLock::new();
    EMPTY.get_or_init(|| Arc::new(BTreeSet::new())).clone()
}

fn union_vars(parts: &[&ScalarExpr]) -> Arc<BTreeSet<Variable>> {
    let mut best: Option<&Arc<BTreeSet<Variable>>> = None;
    for p in parts {
        let vars = &p.0.vars;
        if vars.is_empty() {
            continue;
        }
        match best {
            None => best = Some(vars),
            Some(b) if Arc::ptr_eq(b, vars) || vars.is_subset(b) => {}
            Some(b) if b.is_subset(vars) => best = Some(vars),
            Some(_) => {
                let mut all = BTreeSet::new();
                for p in parts {
                    all.extend(p.0.vars.iter().cloned());
                }
                return Arc::new(all);
            }
        }
    }
    best.cloned().unwrap_or_else(empty_vars)
}

fn node_hash(node: &Node) -> u64 {
    let mut h = DefaultHasher::new();
    match node {
        Node::Const(c) => {
            0u8.hash(&mut h);
            c.to_bits().hash(&mut h);
        }
        Node::Var(v) => {
            1u8.hash(&mut h);
            v.hash(&mut h);
        }
        Node::Unary(op, a) => {
            2u8.hash(&mut h);
            op.hash(&mut h);
            a.0.hash.hash(&mut h);
        }
        Node::Binary(op, a, b) => {
            3u8.hash(&mut h);
            op.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Select(args) => {
            4u8.hash(&mut h);
            for a in args {
                a.0.hash.hash(&mut h);
            }
        }
    }
    h.finish()
}

pub(crate) fn apply_unary(op: UnaryOp, x: f64) -> Option<f64> {
    let v = match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sqrt if x < 0.0 => return None,
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Abs => x.abs(),
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Asin | UnaryOp::Acos if !(-1.0..=1.0).contains(&x) => return None,
        UnaryOp::Asin => x.asin(),
        UnaryOp::Acos => x.acos(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log if x <= 0.0 => return None,
        UnaryOp::Log => x.ln(),
        UnaryOp::Sigmoid => sigmoid(x),
        UnaryOp::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    };
    v.is_finite().then_some(v)
}

pub(crate) fn apply_binary(op: BinaryOp, a: f64, b: f64) -> Option<f64> {
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div if b == 0.0 => return None,
        BinaryOp::Div => a / b,
        BinaryOp::Pow => {
            if (a < 0.0 && b.fract() != 0.0) || (a == 0.0 && b < 0.0) {
                return None;
            }
            a.powf(b)
        }
        // ties pick the first argument
        BinaryOp::Min => {
            if a <= b {
                a
            } else {
                b
            }
        }
        BinaryOp::Max => {
            if a >= b {
                a
            } else {
                b
            }
        }
        BinaryOp::Atan2 => a.atan2(b),
    };
    v.is_finite().then_some(v)
}

/// Logistic function with the exponent clamped to ±500.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).clamp(-500.0, 500.0).exp())
}

impl ScalarExpr {
    fn from_node(node: Node) -> Self {
        let vars = match &node {
            Node::Const(_) => empty_vars(),
            Node::Var(v) => Arc::new(BTreeSet::from([v.clone()])),
            Node::Unary(_, a) => a.0.vars.clone(),
            Node::Binary(_, a, b) => union_vars(&[a, b]),
            Node::Select(args) => union_vars(&[&args[0], &args[1], &args[2], &args[3]]),
        };
        let hash = node_hash(&node);
        ScalarExpr(Arc::new(Inner { node, vars, hash }))
    }

    pub(crate) fn node(&self) -> &Node {
        &self.0.node
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub(crate) fn is_shared(&self) -> bool {
        Arc::strong_count(&self.0) > 1
    }

    pub fn constant(value: f64) -> Self {
        // -0.0 and 0.0 are the same canonical constant
        let value = if value == 0.0 { 0.0 } else { value };
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        static ZERO: OnceLock<ScalarExpr> = OnceLock::new();
        ZERO.get_or_init(|| ScalarExpr::constant(0.0)).clone()
    }

    pub fn one() -> Self {
        static ONE: OnceLock<ScalarExpr> = OnceLock::new();
        ONE.get_or_init(|| ScalarExpr::constant(1.0)).clone()
    }

    pub fn var(v: Variable) -> Self {
        Self::from_node(Node::Var(v))
    }

    /// Shorthand for a position variable leaf.
    pub fn symbol(name: &str) -> Self {
        Self::var(Variable::new(name))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// The set of variable leaves.
    pub fn variables(&self) -> &BTreeSet<Variable> {
        &self.0.vars
    }

    pub fn depends_on(&self, v: &Variable) -> bool {
        self.0.vars.contains(v)
    }

    pub fn unary(op: UnaryOp, a: ScalarExpr) -> Self {
        if let Some(c) = a.as_const() {
            if let Some(v) = apply_unary(op, c) {
                return Self::constant(v);
            }
        }
        if op == UnaryOp::Neg {
            if let Node::Unary(UnaryOp::Neg, inner) = a.node() {
                return inner.clone();
            }
        }
        Self::from_node(Node::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: ScalarExpr, b: ScalarExpr) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(v) = apply_binary(op, x, y) {
                return Self::constant(v);
            }
        }
        match op {
            BinaryOp::Add => {
                if a.is_zero() {
                    return b;
                }
                if b.is_zero() {
                    return a;
                }
            }
            BinaryOp::Sub => {
                if b.is_zero() {
                    return a;
                }
                if a.is_zero() {
                    return Self::unary(UnaryOp::Neg, b);
                }
            }
            BinaryOp::Mul => {
                if a.is_zero() || b.is_zero() {
                    return Self::zero();
                }
                if a.is_one() {
                    return b;
                }
                if b.is_one() {
                    return a;
                }
                if a.as_const() == Some(-1.0) {
                    return Self::unary(UnaryOp::Neg, b);
                }
                if b.as_const() == Some(-1.0) {
                    return Self::unary(UnaryOp::Neg, a);
                }
            }
            BinaryOp::Div => {
                if b.is_one() {
                    return a;
                }
                if a.is_zero() {
                    return Self::zero();
                }
            }
            BinaryOp::Pow => {
                if b.is_one() {
                    return a;
                }
                if b.is_zero() {
                    return Self::one();
                }
            }
            BinaryOp::Min | BinaryOp::Max | BinaryOp::Atan2 => {}
        }
        Self::from_node(Node::Binary(op, a, b))
    }

    /// `if lhs <= rhs { then } else { otherwise }`.
    pub fn select(lhs: ScalarExpr, rhs: ScalarExpr, then: ScalarExpr, otherwise: ScalarExpr) -> Self {
        if let (Some(l), Some(r)) = (lhs.as_const(), rhs.as_const()) {
            return if l <= r { then } else { otherwise };
        }
        if then == otherwise {
            return then;
        }
        Self::from_node(Node::Select([lhs, rhs, then, otherwise]))
    }

    pub fn pow(&self, exponent: impl Into<ScalarExpr>) -> Self {
        Self::binary(BinaryOp::Pow, self.clone(), exponent.into())
    }
    pub fn sqrt(&self) -> Self {
        Self::unary(UnaryOp::Sqrt, self.clone())
    }
    pub fn abs(&self) -> Self {
        Self::unary(UnaryOp::Abs, self.clone())
    }
    pub fn sin(&self) -> Self {
        Self::unary(UnaryOp::Sin, self.clone())
    }
    pub fn cos(&self) -> Self {
        Self::unary(UnaryOp::Cos, self.clone())
    }
    pub fn tan(&self) -> Self {
        Self::unary(UnaryOp::Tan, self.clone())
    }
    pub fn asin(&self) -> Self {
        Self::unary(UnaryOp::Asin, self.clone())
    }
    pub fn acos(&self) -> Self {
        Self::unary(UnaryOp::Acos, self.clone())
    }
    pub fn exp(&self) -> Self {
        Self::unary(UnaryOp::Exp, self.clone())
    }
    pub fn ln(&self) -> Self {
        Self::unary(UnaryOp::Log, self.clone())
    }
    pub fn sigmoid(&self) -> Self {
        Self::unary(UnaryOp::Sigmoid, self.clone())
    }
    pub fn sign(&self) -> Self {
        Self::unary(UnaryOp::Sign, self.clone())
    }
    pub fn min(&self, other: impl Into<ScalarExpr>) -> Self {
        Self::binary(BinaryOp::Min, self.clone(), other.into())
    }
    pub fn max(&self, other: impl Into<ScalarExpr>) -> Self {
        Self::binary(BinaryOp::Max, self.clone(), other.into())
    }
    /// `atan2(self, x)`.
    pub fn atan2(&self, x: impl Into<ScalarExpr>) -> Self {
        Self::binary(BinaryOp::Atan2, self.clone(), x.into())
    }

    /// Number of nodes in the shared graph (each shared node counted once).
    pub fn node_count(&self) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr_id()) {
                continue;
            }
            stack.extend(e.children());
        }
        seen.len()
    }

    pub(crate) fn children(&self) -> Vec<&ScalarExpr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Unary(_, a) => vec![a],
            Node::Binary(_, a, b) => vec![a, b],
            Node::Select(args) => args.iter().collect(),
        }
    }

    fn eq_memo(&self, other: &ScalarExpr, memo: &mut HashSet<(usize, usize)>) -> bool {
        super::grow(|| self.eq_memo_inner(other, memo))
    }

    fn eq_memo_inner(&self, other: &ScalarExpr, memo: &mut HashSet<(usize, usize)>) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        let key = (self.ptr_id(), other.ptr_id());
        if memo.contains(&key) {
            return true;
        }
        let equal = match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Unary(o1, a), Node::Unary(o2, b)) => o1 == o2 && a.eq_memo(b, memo),
            (Node::Binary(o1, a1, b1), Node::Binary(o2, a2, b2)) => {
                o1 == o2 && a1.eq_memo(a2, memo) && b1.eq_memo(b2, memo)
            }
            (Node::Select(x), Node::Select(y)) => {
                x.iter().zip(y.iter()).all(|(a, b)| a.eq_memo(b, memo))
            }
            _ => false,
        };
        if equal {
            memo.insert(key);
        }
        equal
    }
}

/// Structural equality (same tree after canonical simplification).
impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        self.eq_memo(other, &mut HashSet::new())
    }
}

impl Hash for ScalarExpr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state);
    }
}

impl From<f64> for ScalarExpr {
    fn from(v: f64) -> Self {
        ScalarExpr::constant(v)
    }
}

impl From<Variable> for ScalarExpr {
    fn from(v: Variable) -> Self {
        ScalarExpr::var(v)
    }
}

impl From<&ScalarExpr> for ScalarExpr {
    fn from(v: &ScalarExpr) -> Self {
        v.clone()
    }
}

fn precedence(e: &ScalarExpr) -> u8 {
    match e.node() {
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        Node::Unary(UnaryOp::Neg, _) => 3,
        Node::Binary(BinaryOp::Pow, ..) => 4,
        Node::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn fmt_operand(f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min_prec: u8) -> fmt::Result {
    super::grow(|| fmt_operand_inner(f, e, min_prec))
}

fn fmt_operand_inner(f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min_prec: u8) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(v) => write!(f, "{v}"),
            Node::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                fmt_operand(f, a, 3)
            }
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinaryOp::Add => ("+", 1, 1),
                    BinaryOp::Sub => ("-", 1, 2),
                    BinaryOp::Mul => ("*", 2, 2),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 4),
                    _ => return write!(f, "{}({a}, {b})", op.name()),
                };
                fmt_operand(f, a, lp)?;
                write!(f, " {sym} ")?;
                fmt_operand(f, b, rp)
            }
            Node::Select([l, r, t, o]) => write!(f, "select({l} <= {r}, {t}, {o})"),
        }
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({self})")
    }
}

macro_rules! binary_impl {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, self, rhs)
            }
        }
        impl $trait<&ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, self, rhs.clone())
            }
        }
        impl $trait<ScalarExpr> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, self.clone(), rhs)
            }
        }
        impl $trait<&ScalarExpr> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, self.clone(), rhs.clone())
            }
        }
        impl $trait<f64> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: f64) -> ScalarExpr {
                ScalarExpr::binary($op, self, ScalarExpr::constant(rhs))
            }
        }
        impl $trait<f64> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: f64) -> ScalarExpr {
                ScalarExpr::binary($op, self.clone(), ScalarExpr::constant(rhs))
            }
        }
        impl $trait<ScalarExpr> for f64 {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, ScalarExpr::constant(self), rhs)
            }
        }
        impl $trait<&ScalarExpr> for f64 {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::binary($op, ScalarExpr::constant(self), rhs.clone())
            }
        }
    };
}

binary_impl!(Add, add, BinaryOp::Add);
binary_impl!(Sub, sub, BinaryOp::Sub);
binary_impl!(Mul, mul, BinaryOp::Mul);
binary_impl!(Div, div, BinaryOp::Div);

impl Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::unary(UnaryOp::Neg, self)
    }
}

impl Neg for &ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::unary(UnaryOp::Neg, self.clone())
    }
}

/// `x ≺ t`: a high-contrast sigmoid that is above 0.5 iff `x < t`.
pub fn softstep_lt(x: impl Into<ScalarExpr>, t: impl Into<ScalarExpr>, sharpness: f64) -> ScalarExpr {
    assert!(sharpness > 0.0, "softstep sharpness must be positive");
    (sharpness * (t.into() - x.into())).sigmoid()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> ScalarExpr {
        ScalarExpr::symbol("a")
    }
    fn b() -> ScalarExpr {
        ScalarExpr::symbol("b")
    }

    #[test]
    fn variables_are_the_leaves() {
        let e = a().sin() + b().pow(2.0);
        let vars: Vec<_> = e.variables().iter().map(|v| v.to_string()).collect();
        assert_eq!(vars, ["a", "b"]);
        assert!(ScalarExpr::constant(3.0).variables().is_empty());
    }

    #[test]
    fn canonical_simplification() {
        assert_eq!(a() + 0.0, a());
        assert_eq!(0.0 + a(), a());
        assert_eq!(a() * 1.0, a());
        assert!((a() * 0.0).is_zero());
        assert_eq!(-(-a()), a());
        assert_eq!(ScalarExpr::constant(2.0) * 3.0, ScalarExpr::constant(6.0));
        assert_eq!(a().pow(1.0), a());
        assert!(a().pow(0.0).is_one());
        assert_eq!(0.0 - a(), -a());
        // no algebra beyond the identities
        assert_ne!(a() - a(), ScalarExpr::zero());
    }

    #[test]
    fn invalid_constant_folds_are_kept_symbolic() {
        let e = ScalarExpr::constant(-1.0).sqrt();
        assert!(e.as_const().is_none());
        let d = ScalarExpr::constant(1.0) / 0.0;
        assert!(d.as_const().is_none());
    }

    #[test]
    fn structural_equality_and_display() {
        let e1 = a().sin() + b() * b();
        let e2 = a().sin() + b() * b();
        assert_eq!(e1, e2);
        assert_ne!(e1, a().cos() + b() * b());
        assert_eq!(e1.to_string(), "sin(a) + b * b");
        assert_eq!((a() - (b() - a())).to_string(), "a - (b - a)");
    }

    #[test]
    fn softstep_midpoint_and_tails() {
        use super::super::Assignment;
        let x = ScalarExpr::symbol("x");
        let s = softstep_lt(x.clone(), 0.3, 100.0);
        let at = |v: f64| s.evaluate(&Assignment::from_pairs([("x", v)])).unwrap();
        assert!((at(0.3) - 0.5).abs() < 1e-15);
        assert!(at(0.0) >= 0.999);
        assert!(at(0.6) <= 0.001);
        assert_eq!(sigmoid(1e6), 1.0);
        assert!(sigmoid(-1e6) > 0.0);
    }
}

//! Canonical JSON AST.
//!
//! Nodes are `{"op": name, "args": [...]}`, variable leaves `{"var": "a'"}`
//! and constants `{"c": number}`. Extended expressions serialize as
//! `{"expr": ast, "grad": {"b'": ast, ...}}` holding only the explicit
//! (overridden or extra) gradient entries; analytic entries are re-derived
//! on load, which keeps the round trip structurally exact.

use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::expr::{BinaryOp, Node, UnaryOp};
use super::{ExtExpr, Matrix, ScalarExpr, Symbolic, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct AstError {
    /// JSON-pointer-like location of the first violation.
    pub path: String,
    pub message: String,
}

impl AstError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        AstError {
            path: if path.is_empty() { "/".into() } else { path.into() },
            message: message.into(),
        }
    }
}

pub fn expr_to_json(e: &ScalarExpr) -> Value {
    super::grow(|| expr_to_json_inner(e))
}

fn expr_to_json_inner(e: &ScalarExpr) -> Value {
    match e.node() {
        Node::Const(c) => json!({ "c": c }),
        Node::Var(v) => json!({ "var": v.to_string() }),
        Node::Unary(op, a) => json!({ "op": op.name(), "args": [expr_to_json(a)] }),
        Node::Binary(op, a, b) => {
            json!({ "op": op.name(), "args": [expr_to_json(a), expr_to_json(b)] })
        }
        Node::Select(args) => json!({
            "op": "select",
            "args": args.iter().map(expr_to_json).collect::<Vec<_>>(),
        }),
    }
}

pub fn expr_from_json(v: &Value) -> Result<ScalarExpr, AstError> {
    expr_at(v, "")
}

fn expr_at(v: &Value, path: &str) -> Result<ScalarExpr, AstError> {
    super::grow(|| expr_at_inner(v, path))
}

fn expr_at_inner(v: &Value, path: &str) -> Result<ScalarExpr, AstError> {
    let obj = v
        .as_object()
        .ok_or_else(|| AstError::new(path, "expected an expression object"))?;
    if let Some(c) = obj.get("c") {
        let c = c
            .as_f64()
            .ok_or_else(|| AstError::new(&format!("{path}/c"), "constant must be a number"))?;
        return Ok(ScalarExpr::constant(c));
    }
    if let Some(name) = obj.get("var") {
        let name = name
            .as_str()
            .ok_or_else(|| AstError::new(&format!("{path}/var"), "variable must be a string"))?;
        let var: Variable = name
            .parse()
            .map_err(|e| AstError::new(&format!("{path}/var"), format!("{e}")))?;
        return Ok(ScalarExpr::var(var));
    }
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| AstError::new(path, "expected one of `c`, `var`, `op`"))?;
    let args = obj
        .get("args")
        .and_then(Value::as_array)
        .ok_or_else(|| AstError::new(&format!("{path}/args"), "missing argument list"))?;
    let parsed = args
        .iter()
        .enumerate()
        .map(|(i, a)| expr_at(a, &format!("{path}/args/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let arity = |n: usize| {
        if parsed.len() == n {
            Ok(())
        } else {
            Err(AstError::new(
                &format!("{path}/args"),
                format!("`{op}` takes {n} arguments, got {}", parsed.len()),
            ))
        }
    };
    if let Some(u) = UnaryOp::from_name(op) {
        arity(1)?;
        return Ok(ScalarExpr::unary(u, parsed[0].clone()));
    }
    if let Some(b) = BinaryOp::from_name(op) {
        arity(2)?;
        return Ok(ScalarExpr::binary(b, parsed[0].clone(), parsed[1].clone()));
    }
    if op == "select" {
        arity(4)?;
        let [l, r, t, o]: [ScalarExpr; 4] = parsed.try_into().expect("arity checked");
        return Ok(ScalarExpr::select(l, r, t, o));
    }
    Err(AstError::new(&format!("{path}/op"), format!("unknown operator `{op}`")))
}

pub fn ext_to_json(e: &ExtExpr) -> Value {
    if !e.has_explicit_gradient() {
        return expr_to_json(e.expr());
    }
    let grad: Map<String, Value> = e
        .explicit_gradient()
        .iter()
        .map(|(k, g)| (k.to_string(), expr_to_json(g)))
        .collect();
    json!({ "expr": expr_to_json(e.expr()), "grad": grad })
}

pub fn ext_from_json(v: &Value) -> Result<ExtExpr, AstError> {
    ext_at(v, "")
}

fn ext_at(v: &Value, path: &str) -> Result<ExtExpr, AstError> {
    let Some(inner) = v.get("expr") else {
        return Ok(ExtExpr::lift(expr_at(v, path)?));
    };
    let expr = expr_at(inner, &format!("{path}/expr"))?;
    let mut entries = Vec::new();
    if let Some(grad) = v.get("grad") {
        let grad = grad
            .as_object()
            .ok_or_else(|| AstError::new(&format!("{path}/grad"), "gradient must be an object"))?;
        for (k, g) in grad {
            let key: Variable = k
                .parse()
                .map_err(|e| AstError::new(&format!("{path}/grad"), format!("{e}")))?;
            if key.order() == 0 {
                return Err(AstError::new(
                    &format!("{path}/grad/{k}"),
                    "gradient keys must be derivative variables",
                ));
            }
            entries.push((key, expr_at(g, &format!("{path}/grad/{k}"))?));
        }
    }
    Ok(ExtExpr::with_gradient(expr, entries))
}

// Matrices serialize as `{"rows": r, "cols": c, "entries": [...]}`, row-major.

/// Parses JSON text without serde_json's nesting limit; expression trees of
/// long kinematic chains nest deeper than 128 levels.
pub fn parse_json(text: &str) -> Result<Value, serde_json::Error> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let v = Value::deserialize(serde_stacker::Deserializer::new(&mut de))?;
    de.end()?;
    Ok(v)
}

impl serde::Serialize for ScalarExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        expr_to_json(self).serialize(s)
    }
}

/// Accepts the AST form and, as a shorthand for constants, plain numbers.
impl<'de> serde::Deserialize<'de> for ScalarExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Some(c) = v.as_f64() {
            return Ok(ScalarExpr::constant(c));
        }
        expr_from_json(&v).map_err(serde::de::Error::custom)
    }
}

impl serde::Serialize for ExtExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ext_to_json(self).serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for ExtExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Some(c) = v.as_f64() {
            return Ok(ExtExpr::constant(c));
        }
        ext_from_json(&v).map_err(serde::de::Error::custom)
    }
}

impl<E: Symbolic + serde::Serialize> serde::Serialize for Matrix<E> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Matrix", 3)?;
        st.serialize_field("rows", &self.rows())?;
        st.serialize_field("cols", &self.cols())?;
        st.serialize_field("entries", self.entries())?;
        st.end()
    }
}

impl<'de, E: Symbolic + serde::Deserialize<'de>> serde::Deserialize<'de> for Matrix<E> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw<E> {
            rows: usize,
            cols: usize,
            entries: Vec<E>,
        }
        let raw = Raw::<E>::deserialize(d)?;
        Matrix::new(raw.rows, raw.cols, raw.entries).map_err(serde::de::Error::custom)
    }
}

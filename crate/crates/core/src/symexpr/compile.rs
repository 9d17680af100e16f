use std::collections::HashMap;

use thiserror::Error;

use super::eval::{binary_checked, unary_checked};
use super::expr::{BinaryOp, Node, UnaryOp};
use super::{EvalError, ScalarExpr, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("variable `{0}` is not among the evaluator inputs")]
    UncoveredVariable(Variable),
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Unary(UnaryOp, u32),
    Binary(BinaryOp, u32, u32),
    Select(u32, u32, u32, u32),
}

/// Flat instruction tape evaluating a list of expressions for a fixed ordered
/// set of input variables. Shared sub-expressions are computed once.
///
/// Slots `0..n_inputs` hold the inputs; slot `n_inputs + i` holds the result
/// of instruction `i`.
#[derive(Debug, Clone)]
pub struct CompiledExprs {
    inputs: Vec<Variable>,
    tape: Vec<Instr>,
    outputs: Vec<u32>,
}

struct Builder<'a> {
    index: &'a HashMap<Variable, u32>,
    n_inputs: u32,
    tape: Vec<Instr>,
    seen: HashMap<usize, u32>,
    consts: HashMap<u64, u32>,
}

impl Builder<'_> {
    fn push(&mut self, instr: Instr) -> u32 {
        self.tape.push(instr);
        self.n_inputs + self.tape.len() as u32 - 1
    }

    fn slot(&mut self, e: &ScalarExpr) -> Result<u32, CompileError> {
        super::grow(|| self.slot_inner(e))
    }

    fn slot_inner(&mut self, e: &ScalarExpr) -> Result<u32, CompileError> {
        if let Some(s) = self.seen.get(&e.ptr_id()) {
            return Ok(*s);
        }
        let slot = match e.node() {
            Node::Const(c) => match self.consts.get(&c.to_bits()) {
                Some(s) => *s,
                None => {
                    let s = self.push(Instr::Const(*c));
                    self.consts.insert(c.to_bits(), s);
                    s
                }
            },
            Node::Var(v) => *self
                .index
                .get(v)
                .ok_or_else(|| CompileError::UncoveredVariable(v.clone()))?,
            Node::Unary(op, a) => {
                let a = self.slot(a)?;
                self.push(Instr::Unary(*op, a))
            }
            Node::Binary(op, a, b) => {
                let a = self.slot(a)?;
                let b = self.slot(b)?;
                self.push(Instr::Binary(*op, a, b))
            }
            Node::Select([l, r, t, o]) => {
                let l = self.slot(l)?;
                let r = self.slot(r)?;
                let t = self.slot(t)?;
                let o = self.slot(o)?;
                self.push(Instr::Select(l, r, t, o))
            }
        };
        self.seen.insert(e.ptr_id(), slot);
        Ok(slot)
    }
}

impl CompiledExprs {
    pub fn new(exprs: &[ScalarExpr], inputs: &[Variable]) -> Result<Self, CompileError> {
        let index: HashMap<Variable, u32> = inputs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32))
            .collect();
        let mut b = Builder {
            index: &index,
            n_inputs: inputs.len() as u32,
            tape: Vec::new(),
            seen: HashMap::new(),
            consts: HashMap::new(),
        };
        let outputs = exprs.iter().map(|e| b.slot(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledExprs {
            inputs: inputs.to_vec(),
            tape: b.tape,
            outputs,
        })
    }

    pub fn inputs(&self) -> &[Variable] {
        &self.inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    /// Evaluates all expressions; `values` is ordered like the inputs.
    pub fn eval(&self, values: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(values, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant for inner loops.
    pub fn eval_into(
        &self,
        values: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        assert_eq!(values.len(), self.inputs.len(), "input count mismatch");
        assert_eq!(out.len(), self.outputs.len(), "output count mismatch");
        scratch.clear();
        scratch.extend_from_slice(values);
        for instr in &self.tape {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Unary(op, a) => unary_checked(op, scratch[a as usize])?,
                Instr::Binary(op, a, b) => binary_checked(op, scratch[a as usize], scratch[b as usize])?,
                Instr::Select(l, r, t, o) => {
                    if scratch[l as usize] <= scratch[r as usize] {
                        scratch[t as usize]
                    } else {
                        scratch[o as usize]
                    }
                }
            };
            scratch.push(v);
        }
        for (o, slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[*slot as usize];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::Assignment;

    #[test]
    fn empty_list() {
        let c = CompiledExprs::new(&[], &[]).unwrap();
        assert!(c.eval(&[]).unwrap().is_empty());
    }

    #[test]
    fn uncovered_variable() {
        let e = ScalarExpr::symbol("a") + ScalarExpr::symbol("b");
        let err = CompiledExprs::new(&[e], &[Variable::new("a")]).unwrap_err();
        assert_eq!(err, CompileError::UncoveredVariable(Variable::new("b")));
    }

    #[test]
    fn shared_nodes_compile_once() {
        let a = ScalarExpr::symbol("a");
        let s = a.sin();
        let e = &s * &s + &s;
        let c = CompiledExprs::new(&[e.clone(), s.clone()], &[Variable::new("a")]).unwrap();
        // sin, mul, add
        assert_eq!(c.tape_len(), 3);
        let got = c.eval(&[0.5]).unwrap();
        let q = Assignment::from_pairs([("a", 0.5)]);
        assert_eq!(got[0], e.evaluate(&q).unwrap());
        assert_eq!(got[1], s.evaluate(&q).unwrap());
    }

    #[test]
    fn domain_errors_propagate() {
        let a = ScalarExpr::symbol("a");
        let c = CompiledExprs::new(&[a.sqrt()], &[Variable::new("a")]).unwrap();
        assert!(c.eval(&[-1.0]).is_err());
    }
}

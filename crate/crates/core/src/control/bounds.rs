use std::collections::BTreeSet;

use super::ControlError;
use crate::artmodel::ArticulationModel;
use crate::symexpr::{Assignment, Variable};

/// Admissible velocity interval of each position variable in `vars`.
///
/// Intersects the velocity constraints on `v'` with the position constraints
/// on `v` pushed through one explicit Euler step of length `dt`. Bounds that
/// are expressions (locks, for instance) are evaluated at `q`.
pub fn velocity_bounds(
    model: &ArticulationModel,
    vars: &[Variable],
    q: &Assignment,
    dt: f64,
) -> Result<Vec<(f64, f64)>, ControlError> {
    assert!(dt > 0.0, "velocity_bounds needs a positive time step");
    vars.iter()
        .map(|v| {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            let vd = v.derivative();
            let keys: BTreeSet<Variable> = [v.clone(), vd.clone()].into();
            for (_, c) in model.constraints_for(&keys) {
                let Some(target) = c.expr.as_var() else { continue };
                let lb = c.lb.evaluate(q)?;
                let ub = c.ub.evaluate(q)?;
                if *target == vd {
                    lo = lo.max(lb);
                    hi = hi.min(ub);
                } else if target == v {
                    let x = q.get(v).ok_or_else(|| crate::symexpr::EvalError::MissingVariable(v.clone()))?;
                    lo = lo.max((lb - x) / dt);
                    hi = hi.min((ub - x) / dt);
                }
            }
            if lo > hi {
                return Err(ControlError::EmptyInterval(v.clone()));
            }
            Ok((lo, hi))
        })
        .collect()
}

//! Random expression generator for differentiation and evaluation checks.
//!
//! Generated expressions are finite and smooth (up to measure-zero kinks of
//! `abs`, `min` and `max`) for every real assignment: operators with a
//! restricted domain only receive arguments that are mapped into it.

use rand::Rng;

use super::{ScalarExpr, Variable};

pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, vars: &[Variable], depth: u32) -> ScalarExpr {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.75) {
            ScalarExpr::var(vars[rng.random_range(0..vars.len())].clone())
        } else {
            ScalarExpr::constant(rng.random_range(-2.0..2.0))
        };
    }
    let a = random_expr(rng, vars, depth - 1);
    match rng.random_range(0..17) {
        0 => a.sin(),
        1 => a.cos(),
        2 => -a,
        3 => a.sin().exp(),
        4 => a.sigmoid(),
        5 => (a.pow(2.0) + 1.0).sqrt(),
        6 => (a.pow(2.0) + 1.0).ln(),
        7 => (a.sin() * 0.9).asin(),
        8 => (a.cos() * 0.9).acos(),
        9 => (a.sin() * 1.2).tan(),
        10 => a.abs(),
        n => {
            let b = random_expr(rng, vars, depth - 1);
            match n {
                11 => a + b,
                12 => a - b,
                13 => a * b,
                14 => a / (b.pow(2.0) + 1.0),
                15 => (a.pow(2.0) + 1.0).pow(b.sin()),
                _ => match rng.random_range(0..3) {
                    0 => a.atan2(b.pow(2.0) + 0.5),
                    1 => a.min(b),
                    _ => a.max(b),
                },
            }
        }
    }
}

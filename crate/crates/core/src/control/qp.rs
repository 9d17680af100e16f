//! Dense convex QP: `min ½xᵀWx − gᵀx` with diagonal `W ≥ 0`, two-sided
//! linear rows and box bounds, solved by ADMM (operator splitting with ρ
//! adaptation) followed by active-set polishing.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("problem is primal infeasible")]
    Infeasible,
    #[error("no convergence after {0} iterations")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// One linear row `lb ≤ aᵀx ≤ ub`. Soft rows get a slack `s` with penalty
/// `½·weight·s²`, i.e. `lb ≤ aᵀx + s ≤ ub`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: Vec<f64>,
    pub lb: f64,
    pub ub: f64,
    pub soft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    pub w: Vec<f64>,
    pub g: Vec<f64>,
    pub rows: Vec<Row>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl QProblem {
    /// `n` unbounded variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            w: vec![0.0; n],
            g: vec![0.0; n],
            rows: Vec::new(),
            lb: vec![f64::NEG_INFINITY; n],
            ub: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn add_row(&mut self, a: Vec<f64>, lb: f64, ub: f64) {
        self.rows.push(Row { a, lb, ub, soft: None });
    }

    pub fn add_soft_row(&mut self, a: Vec<f64>, lb: f64, ub: f64, weight: f64) {
        self.rows.push(Row {
            a,
            lb,
            ub,
            soft: Some(weight),
        });
    }

    pub fn set_bounds(&mut self, i: usize, lb: f64, ub: f64) {
        self.lb[i] = lb;
        self.ub[i] = ub;
    }

    /// Adds `½·weight·(x_i − target)²` to the objective.
    pub fn add_target(&mut self, i: usize, target: f64, weight: f64) {
        self.w[i] += weight;
        self.g[i] += weight * target;
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.w)
            .zip(&self.g)
            .map(|((x, w), g)| 0.5 * w * x * x - g * x)
            .sum()
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: String| Err(QpError::Malformed(m));
        if self.g.len() != n || self.lb.len() != n || self.ub.len() != n {
            return bad("vector lengths differ".into());
        }
        if self.w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("W must be finite and nonnegative".into());
        }
        if self.g.iter().any(|g| !g.is_finite()) {
            return bad("g must be finite".into());
        }
        for (i, (l, u)) in self.lb.iter().zip(&self.ub).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return bad(format!("box bounds of variable {i} are inverted"));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != n || r.a.iter().any(|a| !a.is_finite()) {
                return bad(format!("row {i} has a bad coefficient vector"));
            }
            if r.lb.is_nan() || r.ub.is_nan() || r.lb > r.ub {
                return bad(format!("row {i} bounds are inverted"));
            }
            if let Some(w) = r.soft {
                if !(w.is_finite() && w > 0.0) {
                    return bad(format!("row {i} has a bad slack weight"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_infeasible: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_iter: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_infeasible: 1e-7,
        }
    }
}

/// Largest violations of the optimality conditions of the original problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Slack of each soft row (zero for hard rows).
    pub slack: Vec<f64>,
    /// Multipliers of the rows followed by those of the box bounds.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub kkt: KktResidual,
}

/// The problem in the solver's standard form `min ½zᵀPz + cᵀz, l ≤ Az ≤ u`
/// over `z = (x, slacks)`.
struct Standard {
    n: usize,
    p: DVector<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    slack_of_row: Vec<Option<usize>>,
    /// Row index in `A` for each original row and for each boxed variable.
    row_map: Vec<Option<usize>>,
}

fn standard_form(p: &QProblem) -> Standard {
    let n = p.n();
    let n_soft = p.rows.iter().filter(|r| r.soft.is_some()).count();
    let nz = n + n_soft;
    let mut pd = DVector::zeros(nz);
    let mut c = DVector::zeros(nz);
    for i in 0..n {
        pd[i] = p.w[i];
        c[i] = -p.g[i];
    }
    let mut rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    let mut slack_of_row = Vec::with_capacity(p.rows.len());
    let mut row_map = Vec::with_capacity(p.rows.len() + n);
    let mut k = n;
    for r in &p.rows {
        let mut a = DVector::zeros(nz);
        a.rows_mut(0, n).copy_from_slice(&r.a);
        if let Some(w) = r.soft {
            pd[k] = w;
            a[k] = 1.0;
            slack_of_row.push(Some(k));
            k += 1;
        } else {
            slack_of_row.push(None);
        }
        if r.lb == f64::NEG_INFINITY && r.ub == f64::INFINITY {
            row_map.push(None);
        } else {
            row_map.push(Some(rows.len()));
            rows.push((a, r.lb, r.ub));
        }
    }
    for i in 0..n {
        if p.lb[i] == f64::NEG_INFINITY && p.ub[i] == f64::INFINITY {
            row_map.push(None);
            continue;
        }
        let mut a = DVector::zeros(nz);
        a[i] = 1.0;
        row_map.push(Some(rows.len()));
        rows.push((a, p.lb[i], p.ub[i]));
    }
    let m = rows.len();
    let mut a = DMatrix::zeros(m, nz);
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    for (i, (row, lo, hi)) in rows.into_iter().enumerate() {
        a.row_mut(i).copy_from(&row.transpose());
        l[i] = lo;
        u[i] = hi;
    }
    Standard {
        n,
        p: pd,
        c,
        a,
        l,
        u,
        slack_of_row,
        row_map,
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(l.iter().zip(u.iter())).map(|(x, (l, u))| x.clamp(*l, *u)))
}

impl Standard {
    fn rho_vector(&self, rho: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.l.len(),
            self.l.iter().zip(self.u.iter()).map(|(l, u)| if l == u { 1e3 * rho } else { rho }),
        )
    }

    fn factor(&self, rho: &DVector<f64>, sigma: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let nz = self.p.len();
        let mut k = self.a.transpose() * DMatrix::from_diagonal(rho) * &self.a;
        for i in 0..nz {
            k[(i, i)] += self.p[i] + sigma;
        }
        k.cholesky()
    }

    fn residuals(&self, z: &DVector<f64>, y: &DVector<f64>, w: &DVector<f64>) -> (f64, f64, f64, f64) {
        let az = &self.a * z;
        let pz = self.p.component_mul(z);
        let aty = self.a.transpose() * y;
        let prim = inf_norm(&(&az - w));
        let dual = inf_norm(&(&pz + &self.c + &aty));
        let prim_scale = inf_norm(&az).max(inf_norm(w));
        let dual_scale = inf_norm(&pz).max(inf_norm(&aty)).max(inf_norm(&self.c));
        (prim, dual, prim_scale, dual_scale)
    }

    /// Whether `δy` certifies primal infeasibility.
    fn infeasibility_certificate(&self, dy: &DVector<f64>, eps: f64) -> bool {
        let norm = inf_norm(dy);
        if norm < 1e-12 {
            return false;
        }
        if inf_norm(&(self.a.transpose() * dy)) > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let d = dy[i];
            if d > 0.0 {
                if self.u[i] == f64::INFINITY {
                    if d > eps * norm {
                        return false;
                    }
                } else {
                    support += self.u[i] * d;
                }
            } else if d < 0.0 {
                if self.l[i] == f64::NEG_INFINITY {
                    if -d > eps * norm {
                        return false;
                    }
                } else {
                    support += self.l[i] * d;
                }
            }
        }
        support < -eps * norm
    }

    /// Solves the equality-constrained problem on a guessed active set.
    fn polish(&self, w: &DVector<f64>, y: &DVector<f64>, tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let nz = self.p.len();
        let mut active = Vec::new();
        for i in 0..self.l.len() {
            let lower = self.l[i] > f64::NEG_INFINITY && (self.l[i] == self.u[i] || w[i] - self.l[i] < -y[i]);
            let upper = self.u[i] < f64::INFINITY && (self.l[i] == self.u[i] || self.u[i] - w[i] < y[i]);
            if lower {
                active.push((i, self.l[i]));
            } else if upper {
                active.push((i, self.u[i]));
            }
        }
        let na = active.len();
        let dim = nz + na;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..nz {
            kkt[(i, i)] = self.p[i];
            rhs[i] = -self.c[i];
        }
        for (k, &(row, b)) in active.iter().enumerate() {
            for j in 0..nz {
                let a = self.a[(row, j)];
                kkt[(nz + k, j)] = a;
                kkt[(j, nz + k)] = a;
            }
            rhs[nz + k] = b;
        }
        let delta = 1e-9;
        let mut reg = kkt.clone();
        for i in 0..dim {
            reg[(i, i)] += if i < nz { delta } else { -delta };
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let r = &rhs - &kkt * &sol;
            sol += lu.solve(&r)?;
        }
        let zp = sol.rows(0, nz).into_owned();
        let mut yp = DVector::zeros(self.l.len());
        for (k, &(row, _)) in active.iter().enumerate() {
            yp[row] = sol[nz + k];
        }
        let az = &self.a * &zp;
        for i in 0..self.l.len() {
            if az[i] < self.l[i] - tol || az[i] > self.u[i] + tol {
                return None;
            }
            if self.l[i] != self.u[i] {
                let at_lower = active.iter().any(|&(r, b)| r == i && b == self.l[i]);
                if at_lower && yp[i] > tol {
                    return None;
                }
                if !at_lower && yp[i] < -tol {
                    return None;
                }
            }
        }
        let dual = inf_norm(&(self.p.component_mul(&zp) + &self.c + self.a.transpose() * &yp));
        (dual <= tol && zp.iter().all(|v| v.is_finite())).then_some((zp, yp))
    }
}

/// Solves `p`; deterministic for identical input.
pub fn solve_qp(p: &QProblem) -> Result<QpSolution, QpError> {
    solve_qp_with(p, &QpSettings::default())
}

pub fn solve_qp_with(p: &QProblem, s: &QpSettings) -> Result<QpSolution, QpError> {
    p.validate()?;
    let st = standard_form(p);
    let nz = st.p.len();
    let m = st.l.len();
    let polish_tol = 1e-9;
    let mut rho = s.rho;
    let mut rho_vec = st.rho_vector(rho);
    let mut chol = st.factor(&rho_vec, s.sigma).ok_or_else(|| QpError::Malformed("singular KKT matrix".into()))?;
    let mut z = DVector::zeros(nz);
    let mut w = project(&DVector::zeros(m), &st.l, &st.u);
    let mut y = DVector::zeros(m);
    let mut last_active: Option<Vec<bool>> = None;
    for iter in 1..=s.max_iter {
        let rhs = s.sigma * &z - &st.c + st.a.transpose() * (rho_vec.component_mul(&w) - &y);
        let z_tilde = chol.solve(&rhs);
        let w_tilde = &st.a * &z_tilde;
        let z_next = s.alpha * &z_tilde + (1.0 - s.alpha) * &z;
        let w_relax = s.alpha * &w_tilde + (1.0 - s.alpha) * &w;
        let w_next = project(&(&w_relax + y.component_div(&rho_vec)), &st.l, &st.u);
        let y_next = &y + rho_vec.component_mul(&(&w_relax - &w_next));
        let dy = &y_next - &y;
        z = z_next;
        w = w_next;
        y = y_next;

        if iter % 10 != 0 && iter != s.max_iter {
            continue;
        }
        if st.infeasibility_certificate(&dy, s.eps_infeasible) {
            return Err(QpError::Infeasible);
        }
        let active: Vec<bool> = (0..m)
            .map(|i| w[i] - st.l[i] < -y[i] || st.u[i] - w[i] < y[i])
            .collect();
        if last_active.as_ref() != Some(&active) || iter % 50 == 0 {
            if let Some((zp, yp)) = st.polish(&w, &y, polish_tol) {
                return Ok(finish(p, &st, zp, yp, iter));
            }
            last_active = Some(active);
        }
        let (prim, dual, prim_scale, dual_scale) = st.residuals(&z, &y, &w);
        if prim <= s.eps && dual <= s.eps {
            return Ok(finish(p, &st, z, y, iter));
        }
        if iter % 50 == 0 {
            let ratio = ((prim / prim_scale.max(1e-12)) / (dual / dual_scale.max(1e-12)).max(1e-12)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                rho_vec = st.rho_vector(rho);
                chol = st
                    .factor(&rho_vec, s.sigma)
                    .ok_or_else(|| QpError::Malformed("singular KKT matrix".into()))?;
            }
        }
    }
    Err(QpError::IterationLimit(s.max_iter))
}

fn finish(p: &QProblem, st: &Standard, z: DVector<f64>, y: DVector<f64>, iterations: usize) -> QpSolution {
    let n = st.n;
    let x: Vec<f64> = z.rows(0, n).iter().copied().collect();
    let slack = st.slack_of_row.iter().map(|k| k.map_or(0.0, |k| z[k])).collect();
    let y_orig = st.row_map.iter().map(|r| r.map_or(0.0, |r| y[r])).collect();
    let az = &st.a * &z;
    let mut kkt = KktResidual::default();
    for i in 0..st.l.len() {
        let v = (st.l[i] - az[i]).max(az[i] - st.u[i]).max(0.0);
        kkt.primal = kkt.primal.max(v);
        let gap = if y[i] > 0.0 {
            y[i] * (st.u[i] - az[i]).abs().min(1e12)
        } else if y[i] < 0.0 {
            -y[i] * (az[i] - st.l[i]).abs().min(1e12)
        } else {
            0.0
        };
        kkt.complementarity = kkt.complementarity.max(gap);
    }
    kkt.dual = inf_norm(&(st.p.component_mul(&z) + &st.c + st.a.transpose() * &y));
    QpSolution {
        objective: p.objective(&x),
        x,
        slack,
        y: y_orig,
        iterations,
        kkt,
    }
}

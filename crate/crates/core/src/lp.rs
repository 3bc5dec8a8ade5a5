//! Dense revised simplex for small equality-form linear programs.
//!
//! Solves `min c·x  s.t.  A x = b, x >= 0` with an explicit basis inverse,
//! two phases, Dantzig pricing with a Bland fallback after degenerate
//! stalls, and warm starts from a previously optimal basis. Desk scale:
//! a few hundred constraints, tens of thousands of variables. The
//! martingale-transport polytope (row sums, column sums, conditional-mean
//! constraints) is deliberately rank-deficient by one; redundant rows are
//! handled by keeping their artificial variables basic at zero.
//!
//! This backend sits behind plain functions so it can be swapped out
//! without touching callers: everything upstream only needs
//! [`solve`], [`solve_warm`] and [`find_feasible`].

use crate::{Error, Result};

/// Equality-form LP: `min c·x` subject to `A x = b`, `x >= 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    objective: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_vars: usize) -> Self {
        LpProblem { n: n_vars, rows: Vec::new(), rhs: Vec::new(), objective: vec![0.0; n_vars] }
    }

    /// Add `Σ coef * x_col = rhs`; returns the row index.
    pub fn add_constraint(&mut self, entries: Vec<(usize, f64)>, rhs: f64) -> usize {
        debug_assert!(entries.iter().all(|&(j, _)| j < self.n));
        self.rows.push(entries);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// Set the objective (minimized).
    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n);
        self.objective = c;
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic variable index per row (artificial ids are `>= num_vars`).
    pub basis: Vec<usize>,
    /// Dual multipliers of the equality constraints.
    pub duals: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;

struct Tableau {
    m: usize,
    n: usize,
    /// Sparse columns of A (real variables only).
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    /// Column-major basis inverse: `binv[r*m + i] = (B^{-1})_{i,r}`.
    binv: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    xb: Vec<f64>,
    iter_cap: usize,
}

impl Tableau {
    fn from_problem(p: &LpProblem) -> Tableau {
        let m = p.rows.len();
        let n = p.n;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = p.rhs.clone();
        let mut sign = vec![1.0; m];
        for r in 0..m {
            if b[r] < 0.0 {
                b[r] = -b[r];
                sign[r] = -1.0;
            }
        }
        for (r, row) in p.rows.iter().enumerate() {
            for &(j, v) in row {
                if v != 0.0 {
                    cols[j].push((r, sign[r] * v));
                }
            }
        }
        // start from the all-artificial basis
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut in_basis = vec![false; n + m];
        for j in n..n + m {
            in_basis[j] = true;
        }
        Tableau {
            m,
            n,
            cols,
            b: b.clone(),
            binv,
            basis: (n..n + m).collect(),
            in_basis,
            xb: b,
            iter_cap: 2_000 + 60 * (m + n.min(2_000)),
        }
    }

    #[inline]
    fn binv_col(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    /// `B^{-1} A_j` (artificial columns are unit vectors).
    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        if j >= self.n {
            d.copy_from_slice(self.binv_col(j - self.n));
            return d;
        }
        for &(r, v) in &self.cols[j] {
            let col = self.binv_col(r);
            for i in 0..self.m {
                d[i] += v * col[i];
            }
        }
        d
    }

    /// `y = c_B^T B^{-1}` for the given per-variable costs.
    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost(j)).collect();
        (0..self.m)
            .map(|r| {
                let col = self.binv_col(r);
                cb.iter().zip(col).map(|(c, v)| c * v).sum()
            })
            .collect()
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost: &dyn Fn(usize) -> f64) -> f64 {
        let mut rc = cost(j);
        for &(r, v) in &self.cols[j] {
            rc -= y[r] * v;
        }
        rc
    }

    fn pivot(&mut self, enter: usize, leave_row: usize, d: &[f64]) {
        let dp = d[leave_row];
        debug_assert!(dp.abs() > PIVOT_TOL);
        let step = self.xb[leave_row] / dp;
        for i in 0..self.m {
            self.xb[i] -= step * d[i];
        }
        self.xb[leave_row] = step;
        for r in 0..self.m {
            let col = &mut self.binv[r * self.m..(r + 1) * self.m];
            let cp = col[leave_row] / dp;
            col[leave_row] = cp;
            for i in 0..self.m {
                if i != leave_row {
                    col[i] -= d[i] * cp;
                }
            }
        }
        self.in_basis[self.basis[leave_row]] = false;
        self.in_basis[enter] = true;
        self.basis[leave_row] = enter;
    }

    /// Primal simplex on the given costs; `allow_artificial` permits
    /// artificials to enter (phase 1 never needs that; it starts basic).
    fn run(&mut self, cost: &dyn Fn(usize) -> f64) -> Result<()> {
        let mut degenerate_streak = 0usize;
        for _ in 0..self.iter_cap {
            let y = self.duals(cost);
            let use_bland = degenerate_streak > 40;
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.in_basis[j] {
                    continue;
                }
                let rc = self.reduced_cost(j, &y, cost);
                if rc < -RC_TOL {
                    if use_bland {
                        enter = Some((j, rc));
                        break;
                    }
                    match enter {
                        Some((_, best)) if rc >= best => {}
                        _ => enter = Some((j, rc)),
                    }
                }
            }
            let Some((j, _)) = enter else {
                return Ok(());
            };
            let d = self.ftran(j);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                if d[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / d[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-12
                                || (ratio < best_ratio + 1e-12 && self.basis[i] > self.basis[l])
                        }
                    };
                    // ties broken towards kicking out artificials first
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(l) = leave else {
                return Err(Error::LpFailure("unbounded direction in simplex".into()));
            };
            if best_ratio <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(j, l, &d);
        }
        Err(Error::LpFailure("simplex iteration cap exceeded".into()))
    }

    /// After phase 1, pivot artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.n {
                continue;
            }
            // row r of B^{-1} A over real columns
            let mut found = None;
            'cols: for j in 0..self.n {
                if self.in_basis[j] {
                    continue;
                }
                let mut v = 0.0;
                for &(rr, a) in &self.cols[j] {
                    v += self.binv[rr * self.m + r] * a;
                }
                if v.abs() > 1e-7 {
                    found = Some((j, v));
                    break 'cols;
                }
            }
            if let Some((j, _)) = found {
                let d = self.ftran(j);
                if d[r].abs() > PIVOT_TOL {
                    self.pivot(j, r, &d);
                }
            }
            // otherwise the row is redundant; the artificial stays basic at 0
        }
    }

    fn extract(&self, p: &LpProblem) -> LpSolution {
        let mut x = vec![0.0; self.n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[i].max(0.0);
            }
        }
        let cost = |j: usize| if j < self.n { p.objective[j] } else { 0.0 };
        let mut duals = self.duals(&cost);
        // undo the sign flips applied to rows with negative rhs
        for (r, d) in duals.iter_mut().enumerate() {
            if p.rhs[r] < 0.0 {
                *d = -*d;
            }
        }
        let objective = x.iter().zip(&p.objective).map(|(xi, ci)| xi * ci).sum();
        LpSolution { x, objective, basis: self.basis.clone(), duals }
    }

    fn phase1(&mut self) -> Result<f64> {
        let n = self.n;
        let cost = move |j: usize| if j >= n { 1.0 } else { 0.0 };
        self.run(&cost)?;
        let infeas: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| j >= self.n)
            .map(|(_, &v)| v.max(0.0))
            .sum();
        Ok(infeas)
    }
}

/// Solve to optimality (two-phase).
pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    let mut t = Tableau::from_problem(p);
    let scale = 1.0 + t.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let infeas = t.phase1()?;
    if infeas > FEAS_TOL * scale {
        return Err(Error::LpInfeasible(format!("phase-1 residual {infeas:.3e}")));
    }
    t.expel_artificials();
    let c = p.objective.clone();
    let n = t.n;
    let cost = move |j: usize| if j < n { c[j] } else { 0.0 };
    t.run(&cost)?;
    Ok(t.extract(p))
}

/// Solve starting from a previously optimal basis of the same polytope
/// (costs may differ). Falls back to a cold solve when the basis is stale.
pub fn solve_warm(p: &LpProblem, basis: &[usize]) -> Result<LpSolution> {
    let m = p.rows.len();
    if basis.len() != m {
        return solve(p);
    }
    let mut t = Tableau::from_problem(p);
    if !refactor(&mut t, basis) {
        return solve(p);
    }
    if t.xb.iter().any(|&v| v < -FEAS_TOL) {
        return solve(p);
    }
    for v in t.xb.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let c = p.objective.clone();
    let n = t.n;
    let cost = move |j: usize| if j < n { c[j] } else { 0.0 };
    if t.run(&cost).is_err() {
        return solve(p);
    }
    Ok(t.extract(p))
}

/// Phase-1 only: find any feasible point of the polytope.
pub fn find_feasible(p: &LpProblem) -> Result<LpSolution> {
    let mut t = Tableau::from_problem(p);
    let scale = 1.0 + t.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let infeas = t.phase1()?;
    if infeas > FEAS_TOL * scale {
        return Err(Error::LpInfeasible(format!("phase-1 residual {infeas:.3e}")));
    }
    t.expel_artificials();
    Ok(t.extract(p))
}

/// A simplex instance kept alive across objective changes on a fixed
/// polytope. The optimal basis of one solve primes the next, which is what
/// makes the conditional-gradient loop cheap: re-solves typically take a
/// handful of pivots instead of a cold two-phase run.
pub struct WarmSimplex {
    t: Tableau,
    pivots_since_refactor: usize,
}

impl WarmSimplex {
    /// Phase-1 initialize on the polytope of `p` (objective ignored).
    pub fn new(p: &LpProblem) -> Result<Self> {
        let mut t = Tableau::from_problem(p);
        let scale = 1.0 + t.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let infeas = t.phase1()?;
        if infeas > FEAS_TOL * scale {
            return Err(Error::LpInfeasible(format!("phase-1 residual {infeas:.3e}")));
        }
        t.expel_artificials();
        Ok(WarmSimplex { t, pivots_since_refactor: 0 })
    }

    /// Minimize `c·x` over the polytope, reusing the current basis.
    /// Returns the optimal vertex as sparse `(index, value)` pairs.
    pub fn minimize(&mut self, c: &[f64]) -> Result<Vec<(usize, f64)>> {
        assert_eq!(c.len(), self.t.n);
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor > 50 {
            // guard against basis-inverse drift on long runs
            let basis = self.t.basis.clone();
            if !refactor(&mut self.t, &basis) {
                return Err(Error::LpFailure("warm basis became singular".into()));
            }
            self.pivots_since_refactor = 0;
        }
        let c = c.to_vec();
        let n = self.t.n;
        let cost = move |j: usize| if j < n { c[j] } else { 0.0 };
        self.t.run(&cost)?;
        let mut out = Vec::with_capacity(self.t.m);
        for (i, &j) in self.t.basis.iter().enumerate() {
            if j < self.t.n && self.t.xb[i] > 1e-14 {
                out.push((j, self.t.xb[i]));
            }
        }
        out.sort_unstable_by_key(|&(j, _)| j);
        Ok(out)
    }
}

/// Rebuild the basis inverse by Gauss-Jordan; false when singular.
fn refactor(t: &mut Tableau, basis: &[usize]) -> bool {
    let m = t.m;
    // dense basis matrix, column k = A_{basis[k]}
    let mut mat = vec![0.0; m * m]; // row-major
    for (k, &j) in basis.iter().enumerate() {
        if j >= t.n + m {
            return false;
        }
        if j >= t.n {
            mat[(j - t.n) * m + k] = 1.0;
        } else {
            for &(r, v) in &t.cols[j] {
                mat[r * m + k] = v;
            }
        }
    }
    let mut inv = vec![0.0; m * m]; // row-major inverse accumulator
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        let mut best = mat[col * m + col].abs();
        for r in col + 1..m {
            let v = mat[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-11 {
            return false;
        }
        if piv != col {
            for k in 0..m {
                mat.swap(col * m + k, piv * m + k);
                inv.swap(col * m + k, piv * m + k);
            }
        }
        let d = mat[col * m + col];
        for k in 0..m {
            mat[col * m + k] /= d;
            inv[col * m + k] /= d;
        }
        for r in 0..m {
            if r != col {
                let f = mat[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= f * mat[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
    }
    // store column-major binv and recompute xb
    for r in 0..m {
        for i in 0..m {
            t.binv[r * m + i] = inv[i * m + r];
        }
    }
    t.basis = basis.to_vec();
    t.in_basis = vec![false; t.n + m];
    for &j in basis {
        t.in_basis[j] = true;
    }
    let b = t.b.clone();
    let mut xb = vec![0.0; m];
    for r in 0..m {
        let col = &t.binv[r * m..(r + 1) * m];
        for i in 0..m {
            xb[i] += col[i] * b[r];
        }
    }
    t.xb = xb;
    true
}

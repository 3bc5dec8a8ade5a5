//! The static weak transport problem over martingale kernels:
//!
//! ```text
//! WT(mu, nu) = max  Σ_x mu(x) H(pi_x)
//!        over  pi_x(y) >= 0,  Σ_y pi_x(y) = 1,  Σ_y pi_x(y) y = x,
//!              Σ_x mu(x) pi_x(y) = nu(y)
//! ```
//!
//! solved by conditional gradients (Frank–Wolfe) on the joint coupling
//! `p(x,y) = mu(x) pi_x(y)`: the supergradient of the concave objective is
//! the per-row dual potential of `H`, the linearized subproblem is a linear
//! program over the martingale polytope (solved warm-started), and an exact
//! concave line search picks the step. Pairwise (away-vertex) steps keep an
//! active vertex set so the iterates do not stall zig-zagging near the
//! optimum. The duality gap `<g, s - p>` is a true optimality bound because
//! the clipped dual extension stays a valid conjugate (up to a ~1e-16 tail
//! term, see the maxcorr module).

use crate::gaussian::GaussianDiscretization;
use crate::maxcorr::{self, value_dual_on_sorted_grid};
use crate::measures::{self, DiscreteMeasure};
use crate::verify::CertificateReport;
use crate::{lp, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

// ---------------------------------------------------------------------------
// Martingale kernels
// ---------------------------------------------------------------------------

/// Validation tolerances for a martingale kernel.
#[derive(Debug, Clone, Copy)]
pub struct KernelTols {
    /// Row sums must be 1 within this.
    pub row_sum: f64,
    /// `|Σ_y pi_x(y) y - x|` per row, relative to `1 + max |atom|`.
    pub mean: f64,
    /// `|Σ_x mu(x) pi_x(y) - nu(y)|` per column.
    pub marginal: f64,
}

impl Default for KernelTols {
    fn default() -> Self {
        KernelTols { row_sum: 1e-10, mean: 1e-8, marginal: 1e-8 }
    }
}

/// A family `{pi_x}` of conditional laws over `atoms(nu)`, indexed by the
/// atoms of `mu`, with `mean(pi_x) = x` and `Σ_x mu(x) pi_x = nu`.
#[derive(Debug, Clone)]
pub struct MartingaleKernel {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    /// Row-major `len(mu) x len(nu)` conditional weights.
    pi: Vec<f64>,
}

impl MartingaleKernel {
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, pi: Vec<f64>) -> Result<Self> {
        Self::new_with_tols(mu, nu, pi, KernelTols::default())
    }

    pub fn new_with_tols(
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        pi: Vec<f64>,
        tols: KernelTols,
    ) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
        }
        if pi.len() != mu.len() * nu.len() {
            return Err(Error::InvalidArgument(format!(
                "kernel matrix has {} entries, want {}",
                pi.len(),
                mu.len() * nu.len()
            )));
        }
        let k = MartingaleKernel { mu, nu, pi };
        let (rs, mean, marg) = k.defects();
        if rs > tols.row_sum {
            return Err(Error::InvalidArgument(format!("kernel row-sum defect {rs:.3e}")));
        }
        let scale = 1.0 + k.atom_scale();
        if mean > tols.mean * scale {
            return Err(Error::InvalidArgument(format!("kernel mean defect {mean:.3e}")));
        }
        if marg > tols.marginal {
            return Err(Error::InvalidArgument(format!("kernel marginal defect {marg:.3e}")));
        }
        Ok(k)
    }

    /// Identity kernel (only feasible when `mu = nu`).
    pub fn identity(m: &DiscreteMeasure) -> Result<Self> {
        let n = m.len();
        let mut pi = vec![0.0; n * n];
        for i in 0..n {
            pi[i * n + i] = 1.0;
        }
        Self::new(m.clone(), m.clone(), pi)
    }

    fn atom_scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.nu.len() {
            for c in self.nu.atom(i) {
                s = s.max(c.abs());
            }
        }
        s
    }

    /// `(max row-sum defect, max row-mean defect, max column defect)`.
    pub fn defects(&self) -> (f64, f64, f64) {
        let (n, m, d) = (self.mu.len(), self.nu.len(), self.mu.dim());
        let mut rs: f64 = 0.0;
        let mut mean: f64 = 0.0;
        for i in 0..n {
            let row = self.row(i);
            rs = rs.max((row.iter().sum::<f64>() - 1.0).abs());
            for k in 0..d {
                let mk: f64 = (0..m).map(|j| row[j] * self.nu.atom(j)[k]).sum();
                mean = mean.max((mk - self.mu.atom(i)[k]).abs());
            }
        }
        let mut marg: f64 = 0.0;
        for j in 0..m {
            let col: f64 = (0..n).map(|i| self.mu.weight(i) * self.pi[i * m + j]).sum();
            marg = marg.max((col - self.nu.weight(j)).abs());
        }
        (rs, mean, marg)
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.pi[i * self.nu.len()..(i + 1) * self.nu.len()]
    }

    /// The conditional law `pi_x` at row `i` as a measure (zero weights
    /// dropped).
    pub fn row_measure(&self, i: usize) -> Result<DiscreteMeasure> {
        let m = self.nu.len();
        let atoms: Vec<Vec<f64>> = (0..m).map(|j| self.nu.atom(j).to_vec()).collect();
        DiscreteMeasure::new(atoms, self.row(i).to_vec())
    }

    /// Objective value `Σ_x mu(x) H(pi_x)` under the exact 1-d oracle.
    pub fn value_1d(&self) -> Result<f64> {
        if self.mu.dim() != 1 {
            return Err(Error::NotOneDimensional(self.mu.dim()));
        }
        let grid = self.nu.atoms1();
        let mut v = 0.0;
        for i in 0..self.mu.len() {
            let (h, _) = value_dual_on_sorted_grid(grid, self.row(i));
            v += self.mu.weight(i) * h;
        }
        Ok(v)
    }

    /// Sparse triplets `(i, j, pi_x_i(y_j))` of the nonzero entries.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let m = self.nu.len();
        let mut out = Vec::new();
        for i in 0..self.mu.len() {
            for j in 0..m {
                let v = self.pi[i * m + j];
                if v > 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// CSV `x,y,mass` of the joint coupling `mu(x) pi_x(y)`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("x,y,mass\n");
        for (i, j, v) in self.triplets() {
            s.push_str(&format!(
                "{},{},{}\n",
                crate::report::fmt_f64(self.mu.atom1(i)),
                crate::report::fmt_f64(self.nu.atom1(j)),
                crate::report::fmt_f64(self.mu.weight(i) * v),
            ));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Frank–Wolfe solver
// ---------------------------------------------------------------------------

/// Which oracle evaluates `H` and its dual on kernel rows.
#[derive(Debug, Clone)]
pub enum Oracle {
    /// Exact comonotone formula (`dim = 1` only).
    Exact1d,
    /// Finite transportation problem against a Gaussian discretization.
    Discretized(GaussianDiscretization),
}

/// Starting point for the solver.
#[derive(Debug, Clone)]
pub enum FwInit {
    /// Any feasible vertex from the phase-1 program.
    Phase1,
    /// Vertex optimizing a seeded random linear objective; used to probe
    /// uniqueness from distinct starts.
    RandomVertex(u64),
    /// Start from a given feasible kernel (e.g. a fixed-point solution).
    Kernel(Box<MartingaleKernel>),
}

#[derive(Debug, Clone)]
pub struct FwOptions {
    /// Stop when the duality gap drops below `gap_tol_rel * (1 + |value|)`.
    pub gap_tol_rel: f64,
    pub max_iter: usize,
    /// Golden-section iterations per line search.
    pub line_search_iters: usize,
    /// Enable pairwise (away-vertex) steps.
    pub pairwise: bool,
    pub init: FwInit,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            gap_tol_rel: 1e-6,
            max_iter: 500,
            line_search_iters: 60,
            pairwise: true,
            init: FwInit::Phase1,
        }
    }
}

/// Solver output: feasible kernel, value, final duality gap, trace.
#[derive(Debug, Clone)]
pub struct WotSolution {
    pub kernel: MartingaleKernel,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Objective value per iteration (nondecreasing).
    pub trace: Vec<f64>,
    /// False when the iteration cap was hit before the gap tolerance.
    pub converged: bool,
}

impl WotSolution {
    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct SolJson<'a> {
            value: f64,
            gap: f64,
            iterations: usize,
            converged: bool,
            kernel_triplets: Vec<(usize, usize, f64)>,
            mu_atoms: Vec<Vec<f64>>,
            nu_atoms: Vec<Vec<f64>>,
            trace: &'a [f64],
        }
        crate::report::to_json_string(&SolJson {
            value: self.value,
            gap: self.gap,
            iterations: self.iterations,
            converged: self.converged,
            kernel_triplets: self.kernel.triplets(),
            mu_atoms: (0..self.kernel.mu().len())
                .map(|i| self.kernel.mu().atom(i).to_vec())
                .collect(),
            nu_atoms: (0..self.kernel.nu().len())
                .map(|j| self.kernel.nu().atom(j).to_vec())
                .collect(),
            trace: &self.trace,
        })
    }
}

struct FwState<'a> {
    nu: &'a DiscreteMeasure,
    oracle: &'a Oracle,
    n: usize,
    m: usize,
}

impl<'a> FwState<'a> {
    /// Objective `Σ_i mu_i H(p_i / mu_i)` for a joint coupling `p`; `H` is
    /// positively homogeneous, so rows are weighted by their actual mass
    /// (equal to `mu_i` on the polytope, up to clamping noise in the line
    /// search).
    fn objective(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut row = vec![0.0; self.m];
        for i in 0..self.n {
            let s: f64 = p[i * self.m..(i + 1) * self.m].iter().sum();
            if s <= 0.0 {
                continue;
            }
            for j in 0..self.m {
                row[j] = p[i * self.m + j] / s;
            }
            total += s * self.row_value(&row);
        }
        total
    }

    fn row_value(&self, row: &[f64]) -> f64 {
        match self.oracle {
            Oracle::Exact1d => value_dual_on_sorted_grid(self.nu.atoms1(), row).0,
            Oracle::Discretized(g) => {
                let meas = DiscreteMeasure::new(
                    (0..self.m).map(|j| self.nu.atom(j).to_vec()).collect(),
                    row.to_vec(),
                )
                .expect("row weights sum to one");
                maxcorr::maxcorr_disc(&meas, g).map(|r| r.value).unwrap_or(f64::NEG_INFINITY)
            }
        }
    }

    /// Supergradient `g(i,j) = phi_i(y_j)` of the objective at `p`.
    fn gradient(&self, p: &[f64], g_out: &mut [f64]) -> Result<()> {
        for i in 0..self.n {
            let s: f64 = p[i * self.m..(i + 1) * self.m].iter().sum();
            let row: Vec<f64> = if s > 0.0 {
                p[i * self.m..(i + 1) * self.m].iter().map(|v| v / s).collect()
            } else {
                vec![1.0 / self.m as f64; self.m]
            };
            match self.oracle {
                Oracle::Exact1d => {
                    let (_, dual) = value_dual_on_sorted_grid(self.nu.atoms1(), &row);
                    g_out[i * self.m..(i + 1) * self.m].copy_from_slice(&dual);
                }
                Oracle::Discretized(g) => {
                    // keep zero-weight atoms in the transport call so dual
                    // values cover the whole grid
                    let sol = crate::transport::solve_dense(&row, g.weights(), |a, b| {
                        let m = self.nu.atom(a);
                        let node = g.node(b);
                        -(0..self.nu.dim()).map(|k| m[k] * node[k]).sum::<f64>()
                    })?;
                    for j in 0..self.m {
                        g_out[i * self.m + j] = -sol.u[j];
                    }
                }
            }
        }
        Ok(())
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, hi: f64, iters: usize) -> (f64, f64) {
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Solve the static weak transport problem between `mu` and `nu`.
///
/// Checks convex order first (`dim = 1` by potentials, otherwise by the
/// feasibility LP). Returns a feasible kernel with its value, final duality
/// gap and trace; hitting the iteration cap is reported via
/// [`WotSolution::converged`], not as an error.
pub fn solve_wot(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    oracle: &Oracle,
    opts: &FwOptions,
) -> Result<WotSolution> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if let Oracle::Exact1d = oracle {
        if mu.dim() != 1 {
            return Err(Error::NotOneDimensional(mu.dim()));
        }
    }
    let in_order = if mu.dim() == 1 {
        measures::convex_order_1d(mu, nu)?
    } else {
        measures::convex_order_lp(mu, nu)?
    };
    if !in_order {
        return Err(Error::NotInConvexOrder("solve_wot requires mu ⪯_c nu".into()));
    }

    let (n, m) = (mu.len(), nu.len());
    let state = FwState { nu, oracle, n, m };
    let prob = measures::martingale_polytope(mu, nu);
    let mut warm = lp::WarmSimplex::new(&prob).map_err(|e| match e {
        // convex order held, so an infeasible polytope is an internal bug
        Error::LpInfeasible(msg) => {
            Error::LpFailure(format!("martingale polytope empty despite convex order: {msg}"))
        }
        other => other,
    })?;

    // iterates mix the start with exact vertices, so any infeasibility of a
    // caller-provided start can only shrink; remember it for the final gate
    let mut inherited_marginal = 0.0f64;
    // initial point
    let mut p: Vec<f64> = match &opts.init {
        FwInit::Phase1 => {
            let sparse = warm.minimize(&vec![0.0; n * m])?;
            let mut p = vec![0.0; n * m];
            for (j, v) in sparse {
                p[j] = v;
            }
            p
        }
        FwInit::RandomVertex(seed) => {
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            let c: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sparse = warm.minimize(&c)?;
            let mut p = vec![0.0; n * m];
            for (j, v) in sparse {
                p[j] = v;
            }
            p
        }
        FwInit::Kernel(k) => {
            if k.mu().len() != n || k.nu().len() != m {
                return Err(Error::InvalidArgument("init kernel has wrong shape".into()));
            }
            inherited_marginal = k.defects().2;
            let mut p = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    p[i * m + j] = mu.weight(i) * k.row(i)[j];
                }
            }
            p
        }
    };

    // active vertex set for pairwise steps; the initial point acts as a
    // pseudo-vertex with weight one
    let mut vertices: Vec<(Vec<(usize, f64)>, f64)> = vec![(dense_to_sparse(&p), 1.0)];

    let mut value = state.objective(&p);
    let mut trace = vec![value];
    let mut grad = vec![0.0; n * m];
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        state.gradient(&p, &mut grad)?;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let s_vertex = warm.minimize(&neg)?;
        let dot_s: f64 = s_vertex.iter().map(|&(j, v)| grad[j] * v).sum();
        let dot_p: f64 = grad.iter().zip(p.iter()).map(|(g, v)| g * v).sum();
        gap = dot_s - dot_p;
        let gap_tol = opts.gap_tol_rel * (1.0 + value.abs());
        if gap <= gap_tol {
            converged = true;
            break;
        }

        // pick direction: pairwise (towards s, away from the worst active
        // vertex) when it dominates the plain step
        let mut direction: Vec<f64> = vec![0.0; n * m];
        let mut max_step = 1.0;
        let mut away_idx = None;
        if opts.pairwise && vertices.len() > 1 {
            let mut worst = 0;
            let mut worst_dot = f64::INFINITY;
            for (k, (v, _)) in vertices.iter().enumerate() {
                let d: f64 = v.iter().map(|&(j, val)| grad[j] * val).sum();
                if d < worst_dot {
                    worst_dot = d;
                    worst = k;
                }
            }
            if dot_s - worst_dot > gap {
                away_idx = Some(worst);
            }
        }
        match away_idx {
            Some(k) => {
                for &(j, v) in &s_vertex {
                    direction[j] += v;
                }
                for &(j, v) in &vertices[k].0 {
                    direction[j] -= v;
                }
                max_step = vertices[k].1;
            }
            None => {
                for &(j, v) in &s_vertex {
                    direction[j] += v;
                }
                for (j, d) in direction.iter_mut().enumerate() {
                    *d -= p[j];
                }
            }
        }

        let obj_along = |t: f64| {
            let cand: Vec<f64> =
                p.iter().zip(direction.iter()).map(|(pv, dv)| (pv + t * dv).max(0.0)).collect();
            state.objective(&cand)
        };
        let (mut t_best, mut v_best) = golden_section(&obj_along, max_step, opts.line_search_iters);
        let v_full = obj_along(max_step);
        if v_full > v_best {
            t_best = max_step;
            v_best = v_full;
        }
        if v_best <= value {
            if away_idx.is_some() {
                // retry as a plain step before giving up
                let mut d2 = vec![0.0; n * m];
                for &(j, v) in &s_vertex {
                    d2[j] += v;
                }
                for (j, d) in d2.iter_mut().enumerate() {
                    *d -= p[j];
                }
                let obj2 = |t: f64| {
                    let cand: Vec<f64> =
                        p.iter().zip(d2.iter()).map(|(pv, dv)| (pv + t * dv).max(0.0)).collect();
                    state.objective(&cand)
                };
                let (t2, v2) = golden_section(&obj2, 1.0, opts.line_search_iters);
                if v2 > value {
                    for (j, pv) in p.iter_mut().enumerate() {
                        *pv = (*pv + t2 * d2[j]).max(0.0);
                    }
                    for (_, w) in vertices.iter_mut() {
                        *w *= 1.0 - t2;
                    }
                    vertices.push((s_vertex.clone(), t2));
                    value = v2;
                    trace.push(value);
                    prune_vertices(&mut vertices);
                    continue;
                }
            }
            // no ascent available along either direction: numerically done
            converged = gap <= 10.0 * gap_tol;
            break;
        }

        for (j, pv) in p.iter_mut().enumerate() {
            *pv = (*pv + t_best * direction[j]).max(0.0);
        }
        match away_idx {
            Some(k) => {
                vertices[k].1 -= t_best;
                merge_vertex(&mut vertices, &s_vertex, t_best);
            }
            None => {
                for (_, w) in vertices.iter_mut() {
                    *w *= 1.0 - t_best;
                }
                merge_vertex(&mut vertices, &s_vertex, t_best);
            }
        }
        prune_vertices(&mut vertices);
        value = v_best;
        trace.push(value);
    }

    // final feasible kernel: normalize rows of p
    let mut pi = vec![0.0; n * m];
    for i in 0..n {
        let s: f64 = p[i * m..(i + 1) * m].iter().sum();
        if s > 0.0 {
            for j in 0..m {
                pi[i * m + j] = p[i * m + j] / s;
            }
        }
    }
    let kernel = MartingaleKernel::new_with_tols(
        mu.clone(),
        nu.clone(),
        pi,
        KernelTols {
            row_sum: 1e-9,
            mean: 1e-7,
            marginal: (1e-7f64).max(1.05 * inherited_marginal),
        },
    )?;
    Ok(WotSolution { kernel, value, gap, iterations, trace, converged })
}

fn dense_to_sparse(p: &[f64]) -> Vec<(usize, f64)> {
    p.iter().enumerate().filter(|(_, &v)| v > 1e-14).map(|(j, &v)| (j, v)).collect()
}

fn merge_vertex(vertices: &mut Vec<(Vec<(usize, f64)>, f64)>, v: &[(usize, f64)], w: f64) {
    for (existing, weight) in vertices.iter_mut() {
        if existing.len() == v.len()
            && existing.iter().zip(v.iter()).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() < 1e-12)
        {
            *weight += w;
            return;
        }
    }
    vertices.push((v.to_vec(), w));
}

fn prune_vertices(vertices: &mut Vec<(Vec<(usize, f64)>, f64)>) {
    vertices.retain(|(_, w)| *w > 1e-13);
    if vertices.len() > 200 {
        // cap the active set; drop the lightest vertices
        vertices.sort_by(|a, b| b.1.total_cmp(&a.1));
        vertices.truncate(150);
    }
}

// ---------------------------------------------------------------------------
// Component-wise solve and derived quantities
// ---------------------------------------------------------------------------

/// How each irreducible component is solved in
/// [`solve_wot_1d_by_components`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentMethod {
    /// Frank–Wolfe from a phase-1 vertex.
    FrankWolfe,
    /// Fixed-point construction of the monotone-map parametrisation.
    Bass,
    /// Fixed point first, then a Frank–Wolfe polish from that kernel.
    Auto,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: ComponentMethod,
    pub fw: FwOptions,
    pub bass: crate::bass::BassOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: ComponentMethod::Auto,
            fw: FwOptions::default(),
            bass: crate::bass::BassOptions::default(),
        }
    }
}

/// Decompose a one-dimensional pair, solve each irreducible component
/// independently, and glue: the identity on the static part, the
/// per-component optimizer inside each interval. Value is the mass-weighted
/// sum of component values.
pub fn solve_wot_1d_by_components(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: &SolveOptions,
) -> Result<WotSolution> {
    let dec = crate::decompose::decompose(mu, nu)?;
    let mut kernels = Vec::new();
    let mut value = 0.0;
    let mut gap = 0.0;
    let mut iterations = 0;
    let mut converged = true;
    for c in &dec.components {
        let sol = solve_component(&c.mu_k, &c.nu_k, opts)?;
        value += c.mass * sol.value;
        gap += c.mass * sol.gap.max(0.0);
        iterations = iterations.max(sol.iterations);
        converged &= sol.converged;
        kernels.push(sol.kernel);
    }
    let kernel = crate::decompose::glue(&dec, &kernels)?;
    Ok(WotSolution { kernel, value, gap, iterations, trace: vec![value], converged })
}

/// Solve a single irreducible component with the chosen method.
pub fn solve_component(
    mu_k: &DiscreteMeasure,
    nu_k: &DiscreteMeasure,
    opts: &SolveOptions,
) -> Result<WotSolution> {
    match opts.method {
        ComponentMethod::FrankWolfe => solve_wot(mu_k, nu_k, &Oracle::Exact1d, &opts.fw),
        ComponentMethod::Bass => crate::bass::solve_component_bass(mu_k, nu_k, &opts.bass),
        ComponentMethod::Auto => {
            let bass_sol = crate::bass::solve_component_bass(mu_k, nu_k, &opts.bass)?;
            if bass_sol.gap <= opts.fw.gap_tol_rel * (1.0 + bass_sol.value.abs()) {
                return Ok(bass_sol);
            }
            let mut fw = opts.fw.clone();
            fw.init = FwInit::Kernel(Box::new(bass_sol.kernel.clone()));
            let polished = solve_wot(mu_k, nu_k, &Oracle::Exact1d, &fw)?;
            if polished.value >= bass_sol.value {
                Ok(polished)
            } else {
                Ok(bass_sol)
            }
        }
    }
}

/// Rewrites the maximization value as the weak-transport minimization value
/// `d + ∫ |y|^2 dnu - 2 WT` (the mean squared Wasserstein distance of the
/// conditional kernels to the standard Gaussian).
pub fn wt_to_weak_gozlan(value: f64, nu: &DiscreteMeasure) -> f64 {
    nu.dim() as f64 + nu.second_moment() - 2.0 * value
}

// ---------------------------------------------------------------------------
// Two-point monotonicity certificate
// ---------------------------------------------------------------------------

/// Optimality certificate from the two-point exchange principle: for random
/// pairs `x, x'` of the support of `mu`, re-optimize the two-row problem
/// with the same pooled conditional mass `(pi_x + pi_x')/2` and record the
/// best improvement found. An optimal kernel admits none (up to solver
/// tolerance); a genuinely suboptimal kernel is exposed by some pair.
pub fn certify_monotonicity(
    sol: &WotSolution,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    certify_monotonicity_kernel(&sol.kernel, sol.value, trials, seed)
}

pub fn certify_monotonicity_kernel(
    kernel: &MartingaleKernel,
    value: f64,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let mu = kernel.mu();
    let threshold = 1e-5 * (1.0 + value.abs());
    if mu.len() < 2 {
        return Ok(CertificateReport::new(
            "monotonicity",
            0.0,
            threshold,
            Some(seed),
            "vacuous: single-atom support".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut skipped = 0usize;
    let mut tested = 0usize;
    for _ in 0..trials {
        let i = rng.gen_range(0..mu.len());
        let mut j = rng.gen_range(0..mu.len());
        if i == j {
            j = (j + 1) % mu.len();
        }
        match two_point_improvement(kernel, i, j) {
            Ok(imp) => {
                tested += 1;
                worst = worst.max(imp);
            }
            Err(_) => skipped += 1,
        }
    }
    Ok(CertificateReport::new(
        "monotonicity",
        worst,
        threshold,
        Some(seed),
        format!("pairs tested {tested}, skipped {skipped}"),
    ))
}

/// Best objective improvement of the two-row exchange problem at rows
/// `(i, j)`; the current rows are feasible so the polytope is never empty.
fn two_point_improvement(kernel: &MartingaleKernel, i: usize, j: usize) -> Result<f64> {
    let nu = kernel.nu();
    let m = nu.len();
    let mu2 = DiscreteMeasure::new(
        vec![kernel.mu().atom(i).to_vec(), kernel.mu().atom(j).to_vec()],
        vec![0.5, 0.5],
    )?;
    let mut pooled: Vec<f64> = vec![0.0; m];
    for k in 0..m {
        pooled[k] = 0.5 * (kernel.row(i)[k] + kernel.row(j)[k]);
    }
    let nu2 = DiscreteMeasure::new((0..m).map(|k| nu.atom(k).to_vec()).collect(), pooled)?;
    // initial point = the kernel's own rows, restricted to nu2's support
    let mut pi0 = vec![0.0; 2 * nu2.len()];
    for (col, a) in (0..nu2.len()).map(|c| (c, nu2.atom(c))) {
        let orig = (0..m).find(|&k| nu.atom(k) == a).expect("atom subset");
        pi0[col] = kernel.row(i)[orig];
        pi0[nu2.len() + col] = kernel.row(j)[orig];
    }
    let init = MartingaleKernel::new_with_tols(
        mu2.clone(),
        nu2.clone(),
        pi0,
        KernelTols { row_sum: 1e-8, mean: 1e-6, marginal: 1e-6 },
    )?;
    let before = init.value_1d()?;
    let opts = FwOptions {
        gap_tol_rel: 1e-9,
        max_iter: 400,
        line_search_iters: 60,
        pairwise: true,
        init: FwInit::Kernel(Box::new(init)),
    };
    let sol = solve_wot(&mu2, &nu2, &Oracle::Exact1d, &opts)?;
    Ok((sol.value - before).max(0.0))
}

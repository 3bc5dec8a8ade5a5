//! Finitely supported probability measures on R^d.
//!
//! `DiscreteMeasure` is the universal input/output currency of the crate:
//! atoms plus positive weights, deduplicated (bit-exact coordinates only;
//! callers pre-round if they want fuzzy merging), weights normalized to sum
//! to one, atoms sorted (ascending for d = 1, lexicographic otherwise).
//!
//! The potential function of a one-dimensional measure,
//! `u_a(x) = ∫ |x - y| da(y)`, is piecewise linear with kinks exactly at the
//! atoms; convex order `mu ⪯_c nu` for equal means is equivalent to
//! `u_mu ≤ u_nu`, and since both potentials are piecewise linear it suffices
//! to compare them on the union of the atom sets.

use crate::{lp, transport, Error, Result};
use serde::{Deserialize, Serialize};

/// Default support cap for LP-backed distances (`rows x cols` both ≤ cap).
pub const DEFAULT_LP_CAP: usize = 400;

/// A finitely supported probability measure on R^dim.
///
/// Invariants enforced at construction: weights strictly positive and summing
/// to one (within one rounding fixup), atoms pairwise distinct, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major coordinates, `len = n * dim`.
    coords: Vec<f64>,
    weights: Vec<f64>,
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl DiscreteMeasure {
    /// Build a measure from points and nonnegative weights.
    ///
    /// Zero-weight atoms are dropped, duplicate points (bit-equal
    /// coordinates) are merged, weights are normalized.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coordinate".into()));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::BadWeights);
        }

        let mut idx: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
        if idx.is_empty() {
            return Err(Error::BadWeights);
        }
        idx.sort_by(|&a, &b| {
            points[a]
                .iter()
                .zip(points[b].iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut coords: Vec<f64> = Vec::with_capacity(idx.len() * dim);
        let mut ws: Vec<f64> = Vec::with_capacity(idx.len());
        for &i in &idx {
            let same_as_last = !ws.is_empty()
                && coords[coords.len() - dim..]
                    .iter()
                    .zip(points[i].iter())
                    .all(|(a, b)| a == b);
            if same_as_last {
                let last = ws.len() - 1;
                ws[last] += weights[i];
            } else {
                coords.extend_from_slice(&points[i]);
                ws.push(weights[i]);
            }
        }

        let total = neumaier_sum(&ws);
        if !(total > 0.0) {
            return Err(Error::BadWeights);
        }
        for w in ws.iter_mut() {
            *w /= total;
        }
        // one exact fixup so the weights sum to 1 to the last bit
        let defect = 1.0 - neumaier_sum(&ws);
        let argmax = ws
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        ws[argmax] += defect;

        Ok(DiscreteMeasure { dim, coords, weights: ws })
    }

    /// Convenience constructor for one-dimensional measures.
    pub fn new_1d(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(atoms.into_iter().map(|a| vec![a]).collect(), weights)
    }

    /// Unit mass at a single point of R^1.
    pub fn dirac(x: f64) -> Self {
        Self::new_1d(vec![x], vec![1.0]).expect("dirac is always valid")
    }

    /// Midpoint-quantile discretization of N(mean, var) on `n` equal-mass
    /// atoms: atom_i = mean + sqrt(var) * Phi^-1((i + 1/2)/n).
    pub fn gaussian_quantile(mean: f64, var: f64, n: usize) -> Result<Self> {
        if n == 0 || var < 0.0 {
            return Err(Error::InvalidArgument("need n >= 1 and var >= 0".into()));
        }
        let s = var.sqrt();
        let atoms = (0..n)
            .map(|i| mean + s * crate::gaussian::norm_ppf((i as f64 + 0.5) / n as f64))
            .collect();
        Self::new_1d(atoms, vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Atom coordinate in dimension one.
    pub fn atom1(&self, i: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.coords[i]
    }

    /// All atom positions of a one-dimensional measure (sorted ascending).
    pub fn atoms1(&self) -> &[f64] {
        debug_assert_eq!(self.dim, 1);
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += self.weights[i] * self.atom(i)[k];
            }
        }
        m
    }

    pub fn mean1(&self) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.coords
            .iter()
            .zip(self.weights.iter())
            .map(|(x, w)| x * w)
            .sum()
    }

    /// Second moment `Σ w_i |x_i|^2`.
    pub fn second_moment(&self) -> f64 {
        (0..self.len())
            .map(|i| self.weights[i] * self.atom(i).iter().map(|c| c * c).sum::<f64>())
            .sum()
    }

    /// Cumulative weights `c_i = w_1 + ... + w_i`, with `c_n` forced to 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            c.push(acc);
        }
        if let Some(last) = c.last_mut() {
            *last = 1.0;
        }
        c
    }

    /// Generalized inverse CDF: `F^{-1}(u) = inf { x : F(x) >= u }`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional(self.dim));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::QuantileLevel(u));
        }
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weights[i];
            if acc >= u {
                return Ok(self.coords[i]);
            }
        }
        Ok(self.coords[self.len() - 1])
    }

    /// Translate every atom by `c`.
    pub fn translate(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: c.len() });
        }
        let points = (0..self.len())
            .map(|i| self.atom(i).iter().zip(c).map(|(x, d)| x + d).collect())
            .collect();
        Self::new(points, self.weights.clone())
    }

    /// Pushforward under `x -> s * x`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument("scale must be finite".into()));
        }
        let points = (0..self.len())
            .map(|i| self.atom(i).iter().map(|x| s * x).collect())
            .collect();
        Self::new(points, self.weights.clone())
    }
}

// ---------------------------------------------------------------------------
// Potential functions
// ---------------------------------------------------------------------------

/// The potential `u_a(x) = Σ_i w_i |x - a_i|` of a one-dimensional measure.
///
/// Convex, piecewise linear with kinks exactly at the atoms, asymptotic to
/// `|x - mean|`; evaluated exactly via prefix sums in O(log n).
#[derive(Debug, Clone)]
pub struct PotentialFunction {
    base: DiscreteMeasure,
    prefix_w: Vec<f64>,
    prefix_m: Vec<f64>,
    total_m: f64,
}

/// Build the potential function of a `dim = 1` measure.
pub fn potential(m: &DiscreteMeasure) -> Result<PotentialFunction> {
    if m.dim() != 1 {
        return Err(Error::NotOneDimensional(m.dim()));
    }
    let mut prefix_w = Vec::with_capacity(m.len());
    let mut prefix_m = Vec::with_capacity(m.len());
    let (mut aw, mut am) = (0.0, 0.0);
    for i in 0..m.len() {
        aw += m.weight(i);
        am += m.weight(i) * m.atom1(i);
        prefix_w.push(aw);
        prefix_m.push(am);
    }
    let total_m = am;
    Ok(PotentialFunction { base: m.clone(), prefix_w, prefix_m, total_m })
}

impl PotentialFunction {
    pub fn base(&self) -> &DiscreteMeasure {
        &self.base
    }

    /// Exact evaluation of `u(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        // k = number of atoms <= x
        let atoms = self.base.atoms1();
        let k = atoms.partition_point(|&a| a <= x);
        let (wk, mk) = if k == 0 { (0.0, 0.0) } else { (self.prefix_w[k - 1], self.prefix_m[k - 1]) };
        x * (2.0 * wk - 1.0) + self.total_m - 2.0 * mk
    }
}

/// Exact `u_m(x)` without building a `PotentialFunction` first.
pub fn eval_potential(m: &DiscreteMeasure, x: f64) -> Result<f64> {
    Ok(potential(m)?.eval(x))
}

// ---------------------------------------------------------------------------
// Convex order
// ---------------------------------------------------------------------------

pub const CONVEX_ORDER_TOL: f64 = 1e-9;

/// Potential-function test of `mu ⪯_c nu` for one-dimensional measures.
///
/// True iff `|mean(mu) - mean(nu)| <= tol` and `u_mu <= u_nu + tol` at every
/// atom of either measure (sufficient because both potentials are piecewise
/// linear with kinks at atoms and agree at infinity when the means agree).
pub fn convex_order_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<bool> {
    convex_order_1d_tol(mu, nu, CONVEX_ORDER_TOL)
}

pub fn convex_order_1d_tol(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<bool> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(nu.dim())));
    }
    if (mu.mean1() - nu.mean1()).abs() > tol {
        return Ok(false);
    }
    let u_mu = potential(mu)?;
    let u_nu = potential(nu)?;
    for &x in mu.atoms1().iter().chain(nu.atoms1().iter()) {
        if u_mu.eval(x) > u_nu.eval(x) + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact feasibility test of the martingale polytope
/// `{ pi >= 0, rows = mu, cols = nu, Σ_y pi(x,y)(y - x) = 0 }` in any
/// dimension, via a phase-1 linear program.
///
/// Returns `Ok(false)` on certified infeasibility; solver breakdown is
/// reported as an error, not as a negative verdict.
pub fn convex_order_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<bool> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let prob = martingale_polytope(mu, nu);
    match lp::find_feasible(&prob) {
        Ok(_) => Ok(true),
        Err(Error::LpInfeasible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// The equality-form description of the martingale transport polytope.
///
/// Variables are `pi(i,j)` in row-major order over `atoms(mu) x atoms(nu)`.
pub fn martingale_polytope(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> lp::LpProblem {
    let (n, m, d) = (mu.len(), nu.len(), mu.dim());
    let mut prob = lp::LpProblem::new(n * m);
    for i in 0..n {
        let cols: Vec<(usize, f64)> = (0..m).map(|j| (i * m + j, 1.0)).collect();
        prob.add_constraint(cols, mu.weight(i));
    }
    for j in 0..m {
        let cols: Vec<(usize, f64)> = (0..n).map(|i| (i * m + j, 1.0)).collect();
        prob.add_constraint(cols, nu.weight(j));
    }
    for i in 0..n {
        for k in 0..d {
            let cols: Vec<(usize, f64)> = (0..m)
                .map(|j| (i * m + j, nu.atom(j)[k] - mu.atom(i)[k]))
                .collect();
            prob.add_constraint(cols, 0.0);
        }
    }
    prob
}

// ---------------------------------------------------------------------------
// Wasserstein distances
// ---------------------------------------------------------------------------

fn quantile_coupling_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, p: u32) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::NotOneDimensional(a.dim().max(b.dim())));
    }
    let (ca, cb) = (a.cumulative(), b.cumulative());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut acc = 0.0;
    while prev < 1.0 {
        let next = ca[ia].min(cb[ib]);
        let d = (a.atom1(ia) - b.atom1(ib)).abs();
        acc += (next - prev) * d.powi(p as i32);
        prev = next;
        while ia + 1 < ca.len() && ca[ia] <= prev {
            ia += 1;
        }
        while ib + 1 < cb.len() && cb[ib] <= prev {
            ib += 1;
        }
        if prev >= 1.0 {
            break;
        }
        if ca[ia] <= prev && ia + 1 == ca.len() && cb[ib] <= prev && ib + 1 == cb.len() {
            break;
        }
    }
    Ok(acc)
}

/// Exact 1-Wasserstein distance between one-dimensional measures
/// (quantile coupling).
pub fn wasserstein1_1d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    quantile_coupling_cost(a, b, 1)
}

/// Exact 2-Wasserstein distance between one-dimensional measures.
pub fn wasserstein2_1d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    Ok(quantile_coupling_cost(a, b, 2)?.sqrt())
}

/// Exact 2-Wasserstein distance between a one-dimensional discrete measure
/// and the continuous normal `N(mean, var)`, via the quantile coupling:
/// the Gaussian partial moments over each cumulative slice are in closed
/// form.
pub fn wasserstein2_to_normal(a: &DiscreteMeasure, mean: f64, var: f64) -> Result<f64> {
    if a.dim() != 1 {
        return Err(Error::NotOneDimensional(a.dim()));
    }
    let sd = var.sqrt();
    let mut acc = 0.0;
    let mut c_prev = 0.0;
    let mut z_prev = f64::NEG_INFINITY;
    let cum = a.cumulative();
    for i in 0..a.len() {
        let c = cum[i].min(1.0);
        let z = crate::gaussian::norm_ppf(c);
        let d = a.atom1(i) - mean;
        // ∫ Phi^{-1} over the slice and ∫ (Phi^{-1})^2 over the slice
        let i1 = crate::gaussian::partial_mean(z_prev, z);
        let zp = |t: f64| if t.is_finite() { t * crate::gaussian::norm_pdf(t) } else { 0.0 };
        let i2 = (c - c_prev) - (zp(z) - zp(z_prev));
        acc += (c - c_prev) * d * d - 2.0 * sd * d * i1 + var * i2;
        c_prev = c;
        z_prev = z;
    }
    Ok(acc.max(0.0).sqrt())
}

/// 2-Wasserstein distance in any dimension via the transportation LP.
pub fn wasserstein2_lp(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    wasserstein2_lp_with_cap(a, b, DEFAULT_LP_CAP)
}

pub fn wasserstein2_lp_with_cap(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cap: usize,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.len() > cap || b.len() > cap {
        return Err(Error::SupportTooLarge { rows: a.len(), cols: b.len(), cap });
    }
    let cost = |i: usize, j: usize| -> f64 {
        a.atom(i)
            .iter()
            .zip(b.atom(j).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let sol = transport::solve_dense(a.weights(), b.weights(), cost)?;
    Ok(sol.objective.max(0.0).sqrt())
}

/// 1-Wasserstein via the transportation LP (cross-check oracle for the
/// quantile formula).
pub fn wasserstein1_lp_with_cap(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cap: usize,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.len() > cap || b.len() > cap {
        return Err(Error::SupportTooLarge { rows: a.len(), cols: b.len(), cap });
    }
    let cost = |i: usize, j: usize| -> f64 {
        a.atom(i)
            .iter()
            .zip(b.atom(j).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let sol = transport::solve_dense(a.weights(), b.weights(), cost)?;
    Ok(sol.objective.max(0.0))
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Serialize as `{"dim": d, "atoms": [[..],..], "weights": [..]}` with
    /// 17-significant-digit floats and fixed key order.
    pub fn to_json_string(&self) -> String {
        let file = MeasureJson {
            dim: self.dim,
            atoms: (0..self.len()).map(|i| self.atom(i).to_vec()).collect(),
            weights: self.weights.clone(),
        };
        crate::report::to_json_string(&file)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MeasureJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("measure json: {e}")))?;
        for a in &file.atoms {
            if a.len() != file.dim {
                return Err(Error::DimensionMismatch { expected: file.dim, got: a.len() });
            }
        }
        Self::new(file.atoms, file.weights)
    }

    /// CSV with a header row: `dim` coordinate columns then a `weight` column.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim {
            out.push_str(&format!("x{k},"));
        }
        out.push_str("weight\n");
        for i in 0..self.len() {
            for c in self.atom(i) {
                out.push_str(&format!("{},", crate::report::fmt_f64(*c)));
            }
            out.push_str(&crate::report::fmt_f64(self.weight(i)));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(s.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("measure csv header: {e}")))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::Parse("measure csv needs >= 2 columns".into()));
        }
        if headers.iter().next_back() != Some("weight") {
            return Err(Error::Parse("last csv column must be named 'weight'".into()));
        }
        let dim = headers.len() - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(format!("measure csv: {e}")))?;
            if rec.len() != dim + 1 {
                return Err(Error::Parse(format!("csv row has {} fields, want {}", rec.len(), dim + 1)));
            }
            let mut p = Vec::with_capacity(dim);
            for f in rec.iter().take(dim) {
                p.push(f.parse::<f64>().map_err(|e| Error::Parse(format!("csv float: {e}")))?);
            }
            points.push(p);
            weights.push(
                rec.get(dim)
                    .unwrap()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("csv weight: {e}")))?,
            );
        }
        Self::new(points, weights)
    }

    /// Load from a path; format chosen by extension (`.json` or `.csv`).
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            Some("csv") => Self::from_csv_str(&text),
            _ => Err(Error::Parse(format!("unknown measure file extension: {}", path.display()))),
        }
    }
}

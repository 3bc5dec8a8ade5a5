//! Bass-type martingales: monotone-map parametrisation of the optimizer.
//!
//! A fitted model is a pair `(alpha, f)` with `f` nondecreasing and
//! `f(alpha * gamma) = nu`; the martingale is `M_t = f_t(B_t)` for a
//! Brownian motion started in `B_0 ~ alpha`, where
//! `f_t(b) = ∫ f(b + sqrt(1-t) z) dgamma(z)`. Because `nu` is discrete, `f`
//! is a right-continuous step map whose thresholds are quantiles of the
//! (smooth) convolution CDF `F(t) = Σ_i alpha_i Phi(t - a_i)`, so the
//! pushforward identity `f(alpha * gamma) = nu` holds exactly and every
//! heat-flow evaluation reduces to sums of normal CDFs:
//!
//! ```text
//! f_t(b) = v_1 + Σ_k (v_{k+1} - v_k) Phi((b - t_k) / sqrt(1-t)).
//! ```
//!
//! The base measure is found by the fixed-point iteration
//! `alpha <- (f_0)^{-1}(mu)`: fit `f` to the current `alpha`, push `mu`
//! back through the inverse of the strictly increasing `f_0`, repeat until
//! `W_2(f_0(alpha), mu)` is small. Optional damping halves the update if
//! the residual grows three times in a row.
//!
//! A fitted model certifies its own optimality: the conjugate pair
//! `psi(b) = ∫ f`, `phi = psi^*` and the anchor map `A(x) = f_0^{-1}(x)`
//! give the upper bound
//! `WT <= ∫ phi dnu - ∫ x A(x) dmu + Σ_i mu_i E[psi(A(x_i) + Z)]`,
//! and the reported duality gap is `bound - value`.

use crate::gaussian::{norm_cdf, norm_pdf};
use crate::measures::{wasserstein2_1d, DiscreteMeasure};
use crate::wot::{KernelTols, MartingaleKernel, WotSolution};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Monotone step maps
// ---------------------------------------------------------------------------

/// Right-continuous nondecreasing step function: `K` values separated by
/// `K - 1` thresholds.
#[derive(Debug, Clone)]
pub struct MonotoneMap {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneMap {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || thresholds.len() + 1 != values.len() {
            return Err(Error::InvalidArgument("map needs K values and K-1 thresholds".into()));
        }
        if thresholds.windows(2).any(|w| w[0] > w[1]) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("map must be nondecreasing".into()));
        }
        Ok(MonotoneMap { thresholds, values })
    }

    /// `f(b)`: the value of the step containing `b` (right-continuous).
    pub fn eval(&self, b: f64) -> f64 {
        let k = self.thresholds.partition_point(|&t| t <= b);
        self.values[k]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

// ---------------------------------------------------------------------------
// Bass models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BassOptions {
    /// Fixed-point stop when `W_2(f_0(alpha), mu) < tol_rel * scale` with
    /// `scale = 1 + sqrt(second_moment(nu))`.
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for BassOptions {
    fn default() -> Self {
        // tight default keeps the derived kernel's nu-marginal defect at the
        // 1e-8 level the kernel invariants ask for (the defect tracks the
        // residual at roughly half its size)
        BassOptions { tol_rel: 1e-9, max_iter: 2000 }
    }
}

/// Fitted Bass model for one irreducible component (or a Dirac start).
#[derive(Debug, Clone)]
pub struct BassModel {
    alpha: DiscreteMeasure,
    map: MonotoneMap,
    mu: DiscreteMeasure,
    nu_target: DiscreteMeasure,
    /// `f_0^{-1}` at the atoms of `mu`, cached at fit time.
    b0: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit `f` to a base measure: thresholds are the convolution-CDF quantiles
/// at the cumulative weights of `nu`.
fn fit_map(alpha: &DiscreteMeasure, nu: &DiscreteMeasure) -> MonotoneMap {
    let cum = nu.cumulative();
    let a = alpha.atoms1();
    let w = alpha.weights();
    let cdf = |t: f64| -> f64 { a.iter().zip(w).map(|(&ai, &wi)| wi * norm_cdf(t - ai)).sum() };
    let (amin, amax) = (a[0], a[a.len() - 1]);
    let mut thresholds = Vec::with_capacity(nu.len() - 1);
    let mut lo_prev = amin - 14.0;
    for &c in cum.iter().take(nu.len() - 1) {
        let (mut lo, mut hi) = (lo_prev, amax + 14.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        thresholds.push(t);
        lo_prev = t;
    }
    MonotoneMap { thresholds, values: nu.atoms1().to_vec() }
}

impl BassModel {
    pub fn alpha(&self) -> &DiscreteMeasure {
        &self.alpha
    }

    pub fn map(&self) -> &MonotoneMap {
        &self.map
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu_target(&self) -> &DiscreteMeasure {
        &self.nu_target
    }

    pub fn b0(&self) -> &[f64] {
        &self.b0
    }

    /// Heat-flow evaluation `f_t(b) = E[f(b + sqrt(1-t) Z)]`, exact in the
    /// step map's normal-CDF representation; `t = 1` evaluates `f` itself.
    pub fn eval_f_t(&self, t: f64, b: f64) -> f64 {
        let vals = self.map.values();
        let ts = self.map.thresholds();
        if ts.is_empty() {
            return vals[0];
        }
        if t >= 1.0 {
            return self.map.eval(b);
        }
        let sig = (1.0 - t).sqrt();
        let mut out = vals[0];
        for (k, &tk) in ts.iter().enumerate() {
            let dv = vals[k + 1] - vals[k];
            if dv != 0.0 {
                out += dv * norm_cdf((b - tk) / sig);
            }
        }
        out
    }

    pub fn f0(&self, b: f64) -> f64 {
        self.eval_f_t(0.0, b)
    }

    /// Inverse of the strictly increasing `f_0` by bisection
    /// (tolerance 1e-12 in `b`).
    pub fn f0_inv(&self, x: f64) -> Result<f64> {
        let vals = self.map.values();
        let (vmin, vmax) = (vals[0], vals[vals.len() - 1]);
        if vmin == vmax {
            return Ok(self.alpha.mean1());
        }
        if x <= vmin || x >= vmax {
            return Err(Error::OutsideRange(x));
        }
        let a = self.alpha.atoms1();
        let mut lo = a[0] - 14.0;
        let mut hi = a[a.len() - 1] + 14.0;
        while self.f0(lo) > x {
            lo -= 14.0;
            if lo < a[0] - 1e4 {
                return Err(Error::OutsideRange(x));
            }
        }
        while self.f0(hi) < x {
            hi += 14.0;
            if hi > a[a.len() - 1] + 1e4 {
                return Err(Error::OutsideRange(x));
            }
        }
        for _ in 0..200 {
            if hi - lo < 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.f0(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The conditional law of the terminal value given the start `x_i`
    /// (row `i` of the induced kernel): `f(b0_i + Z)` on the atoms of `nu`.
    pub fn kernel_row(&self, i: usize) -> Vec<f64> {
        let ts = self.map.thresholds();
        let b0 = self.b0[i];
        let mut row = Vec::with_capacity(ts.len() + 1);
        let mut prev = 0.0;
        for &t in ts {
            let c = norm_cdf(t - b0);
            row.push(c - prev);
            prev = c;
        }
        row.push(1.0 - prev);
        row
    }

    /// Conjugate-pair upper bound on the component value; the difference to
    /// the kernel value is a true optimality gap.
    pub fn dual_bound(&self) -> f64 {
        let ts = self.map.thresholds();
        let vals = self.map.values();
        let kk = vals.len();
        if kk == 1 {
            return 0.0;
        }
        // psi piecewise linear with slope v_k on (t_{k-1}, t_k), psi(t_1)=0
        let mut psi_at = vec![0.0; ts.len()];
        for k in 1..ts.len() {
            psi_at[k] = psi_at[k - 1] + vals[k] * (ts[k] - ts[k - 1]);
        }
        // phi(v_k) at the nu atoms
        let mut phi = vec![0.0; kk];
        for k in 0..kk - 1 {
            phi[k] = vals[k] * ts[k] - psi_at[k];
        }
        phi[kk - 1] = vals[kk - 1] * ts[ts.len() - 1] - psi_at[ts.len() - 1];

        let nu = &self.nu_target;
        let term_nu: f64 = (0..nu.len()).map(|j| nu.weight(j) * phi[j]).sum();

        let mut term_mu = 0.0;
        let mut term_psi = 0.0;
        for i in 0..self.mu.len() {
            let (x, w) = (self.mu.atom1(i), self.mu.weight(i));
            let b0 = self.b0[i];
            term_mu += w * x * b0;
            // E[psi(b0 + Z)] segment by segment
            let mut e_psi = 0.0;
            for k in 0..kk {
                let a = if k == 0 { f64::NEG_INFINITY } else { ts[k - 1] };
                let c = if k == kk - 1 { f64::INFINITY } else { ts[k] };
                let pa = norm_cdf(a - b0);
                let pc = norm_cdf(c - b0);
                let prob = pc - pa;
                if prob <= 0.0 {
                    continue;
                }
                // E[B; (a,c)] for B ~ N(b0, 1)
                let eb = b0 * prob + (norm_pdf(a - b0) - norm_pdf(c - b0));
                let (anchor_b, anchor_psi) = if k == 0 {
                    (ts[0], 0.0)
                } else {
                    (ts[k - 1], psi_at[k - 1])
                };
                e_psi += (anchor_psi - vals[k] * anchor_b) * prob + vals[k] * eb;
            }
            term_psi += w * e_psi;
        }
        term_nu - term_mu + term_psi
    }
}

/// Bass construction from a Dirac start: `alpha = delta_0`,
/// `f = quantile(nu) ∘ Phi`.
pub fn bass_from_dirac(nu: &DiscreteMeasure, m: f64) -> Result<BassModel> {
    if nu.dim() != 1 {
        return Err(Error::NotOneDimensional(nu.dim()));
    }
    let scale = 1.0 + nu.second_moment().sqrt();
    if (nu.mean1() - m).abs() > 1e-9 * scale {
        return Err(Error::InvalidArgument(format!(
            "mean mismatch: mean(nu) = {}, requested {m}",
            nu.mean1()
        )));
    }
    let alpha = DiscreteMeasure::dirac(0.0);
    let map = fit_map(&alpha, nu);
    let mut model = BassModel {
        alpha,
        map,
        mu: DiscreteMeasure::dirac(m),
        nu_target: nu.clone(),
        b0: vec![0.0],
        residual: 0.0,
        iterations: 0,
        converged: true,
    };
    if nu.len() > 1 {
        model.b0 = vec![model.f0_inv(m)?];
    }
    Ok(model)
}

/// Fixed-point construction of the Bass model for a single irreducible
/// component pair `mu ⪯_c nu`. Non-convergence at the iteration cap is
/// reported through the model flags, not as an error.
pub fn bass_fixed_point(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: &BassOptions,
) -> Result<BassModel> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(nu.dim())));
    }
    if nu.len() == 1 {
        // degenerate target: only mu = nu is admissible
        if mu.len() != 1 || mu.atom1(0) != nu.atom1(0) {
            return Err(Error::NotInConvexOrder("Dirac target needs mu = nu".into()));
        }
        return bass_from_dirac(nu, nu.mean1());
    }
    if mu.len() == 1 {
        return bass_from_dirac(nu, mu.atom1(0));
    }

    let scale = 1.0 + nu.second_moment().sqrt();
    let tol = opts.tol_rel * scale;
    let mut alpha = mu.clone();
    let mut residual = f64::INFINITY;
    let mut grow_streak = 0usize;
    let mut damping = 1.0;
    let mut model = None;
    for it in 0..opts.max_iter {
        let map = fit_map(&alpha, nu);
        let candidate = BassModel {
            alpha: alpha.clone(),
            map,
            mu: mu.clone(),
            nu_target: nu.clone(),
            b0: Vec::new(),
            residual: f64::NAN,
            iterations: it + 1,
            converged: false,
        };
        // residual: W_2 between f_0(alpha) and mu
        let f0a: Vec<f64> = alpha.atoms1().iter().map(|&a| candidate.f0(a)).collect();
        let pushed = DiscreteMeasure::new_1d(f0a, alpha.weights().to_vec())?;
        let res = wasserstein2_1d(&pushed, mu)?;
        if res > residual {
            grow_streak += 1;
            if grow_streak >= 3 {
                damping = 0.5;
            }
        } else {
            grow_streak = 0;
        }
        residual = res;
        let converged = res < tol;
        // f_0^{-1}(mu) serves both as the b0 cache and as the next alpha
        let mut inv = Vec::with_capacity(mu.len());
        for i in 0..mu.len() {
            inv.push(candidate.f0_inv(mu.atom1(i))?);
        }
        if converged || it + 1 == opts.max_iter {
            // re-anchor on alpha = f_0^{-1}(mu): with b0 equal to the atoms
            // of alpha, the induced kernel's nu-marginal is exact by the
            // pushforward identity, and only the row means carry the
            // (recomputed) residual
            let alpha_final = DiscreteMeasure::new_1d(inv.clone(), mu.weights().to_vec())?;
            let map_final = fit_map(&alpha_final, nu);
            let refit = BassModel {
                alpha: alpha_final.clone(),
                map: map_final,
                mu: mu.clone(),
                nu_target: nu.clone(),
                b0: alpha_final.atoms1().to_vec(),
                residual: f64::NAN,
                iterations: it + 1,
                converged,
            };
            let f0a: Vec<f64> = alpha_final.atoms1().iter().map(|&a| refit.f0(a)).collect();
            let pushed = DiscreteMeasure::new_1d(f0a, alpha_final.weights().to_vec())?;
            let res_final = wasserstein2_1d(&pushed, mu)?;
            model = Some(BassModel { residual: res_final, ..refit });
            if converged {
                break;
            }
        }
        let mut next = inv;
        if damping < 1.0 && alpha.len() == mu.len() {
            for (ni, ai) in next.iter_mut().zip(alpha.atoms1()) {
                *ni = damping * *ni + (1.0 - damping) * ai;
            }
        }
        alpha = DiscreteMeasure::new_1d(next, mu.weights().to_vec())?;
    }
    Ok(model.expect("loop ran at least once"))
}

/// Kernel induced by a fitted model on the atoms of its target.
///
/// Because the model is anchored on `alpha = f_0^{-1}(mu)` with `b0` equal
/// to the atoms of `alpha`, the mixture of the rows reproduces `nu` exactly
/// (pushforward identity); the row means carry a residual-sized defect that
/// a minimal wide-bracket mass shift removes.
pub fn kernel_from_bass(model: &BassModel) -> Result<MartingaleKernel> {
    let mu = &model.mu;
    let nu = &model.nu_target;
    let (n, m) = (mu.len(), nu.len());
    let mut pi = vec![0.0; n * m];
    for i in 0..n {
        let row = model.kernel_row(i);
        pi[i * m..(i + 1) * m].copy_from_slice(&row);
    }
    let atoms = nu.atoms1();
    for i in 0..n {
        reproject_row_mean(&mut pi[i * m..(i + 1) * m], atoms, mu.atom1(i));
    }
    MartingaleKernel::new_with_tols(
        mu.clone(),
        nu.clone(),
        pi,
        KernelTols { row_sum: 1e-9, mean: 1e-8, marginal: (1e-8f64).max(5.0 * model.residual) },
    )
}

/// Make the row mean exactly `x` by moving a minimal amount of mass towards
/// a far atom: the transfer is `defect / (y_dst - y_src)`, so picking a wide
/// pair keeps both the moved mass and the column perturbation at the size
/// of the defect itself. Preserves the row sum and nonnegativity.
fn reproject_row_mean(row: &mut [f64], atoms: &[f64], x: f64) {
    let m = atoms.len();
    if m < 2 {
        return;
    }
    for _ in 0..32 {
        let mean: f64 = row.iter().zip(atoms).map(|(w, a)| w * a).sum();
        let defect = x - mean;
        if defect.abs() < 1e-15 * (1.0 + x.abs()) {
            return;
        }
        let (src, dst) = if defect > 0.0 {
            // move mass upward: donate from the lowest atom that can pay
            let dst = m - 1;
            let mut src = 0;
            while src + 1 < dst {
                let need = defect / (atoms[dst] - atoms[src]);
                if row[src] >= need {
                    break;
                }
                src += 1;
            }
            (src, dst)
        } else {
            let dst = 0;
            let mut src = m - 1;
            while src > 1 {
                let need = -defect / (atoms[src] - atoms[dst]);
                if row[src] >= need {
                    break;
                }
                src -= 1;
            }
            (src, dst)
        };
        if src == dst {
            return;
        }
        let delta = defect / (atoms[dst] - atoms[src]); // positive by construction
        let take = delta.min(row[src]);
        if take <= 0.0 {
            return;
        }
        row[src] -= take;
        row[dst] += take;
    }
}

/// Solve one component through the fixed point; value from the exact
/// oracle on the induced kernel rows, gap from the conjugate-pair bound.
pub fn solve_component_bass(
    mu_k: &DiscreteMeasure,
    nu_k: &DiscreteMeasure,
    opts: &BassOptions,
) -> Result<WotSolution> {
    let model = bass_fixed_point(mu_k, nu_k, opts)?;
    let kernel = kernel_from_bass(&model)?;
    let value = kernel.value_1d()?;
    let gap = (model.dual_bound() - value).max(0.0);
    Ok(WotSolution {
        kernel,
        value,
        gap,
        iterations: model.iterations,
        trace: vec![value],
        converged: model.converged,
    })
}

// ---------------------------------------------------------------------------
// Multi-component fitted model
// ---------------------------------------------------------------------------

/// Where a given start atom goes: frozen in place, or into a component.
#[derive(Debug, Clone)]
pub enum AtomRoute {
    Fixed(f64),
    /// `(component index, cached f_0^{-1}(x))`
    Component(usize, f64),
}

/// The fitted stretched-Brownian model of a full pair: one Bass model per
/// irreducible component plus the frozen static part.
#[derive(Debug, Clone)]
pub struct SbmModel {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    components: Vec<(f64, BassModel)>,
    /// One route per atom of `mu`, aligned with its atom order.
    routes: Vec<AtomRoute>,
}

impl SbmModel {
    /// Decompose and fit every component.
    pub fn fit(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &BassOptions) -> Result<Self> {
        let dec = crate::decompose::decompose(mu, nu)?;
        let mut components = Vec::new();
        for c in &dec.components {
            let model = bass_fixed_point(&c.mu_k, &c.nu_k, opts)?;
            components.push((c.mass, model));
        }
        let mut routes = Vec::with_capacity(mu.len());
        for i in 0..mu.len() {
            let x = mu.atom1(i);
            let mut route = AtomRoute::Fixed(x);
            for (ci, (_, model)) in components.iter().enumerate() {
                let (l, r) = (
                    dec.components[ci].interval.0,
                    dec.components[ci].interval.1,
                );
                if x > l && x < r {
                    let pos = model
                        .mu()
                        .atoms1()
                        .binary_search_by(|a| a.total_cmp(&x))
                        .map_err(|_| {
                            Error::ComponentMismatch(format!("atom {x} missing in component"))
                        })?;
                    route = AtomRoute::Component(ci, model.b0()[pos]);
                    break;
                }
            }
            routes.push(route);
        }
        Ok(SbmModel { mu: mu.clone(), nu: nu.clone(), components, routes })
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn components(&self) -> &[(f64, BassModel)] {
        &self.components
    }

    pub fn routes(&self) -> &[AtomRoute] {
        &self.routes
    }

    pub fn max_residual(&self) -> f64 {
        self.components.iter().map(|(_, m)| m.residual).fold(0.0, f64::max)
    }

    pub fn converged(&self) -> bool {
        self.components.iter().all(|(_, m)| m.converged)
    }

    /// Route lookup for a start value that must be an atom of `mu`.
    pub fn route_for_value(&self, x: f64) -> Result<&AtomRoute> {
        let i = self
            .mu
            .atoms1()
            .binary_search_by(|a| a.total_cmp(&x))
            .map_err(|_| Error::InvalidArgument(format!("{x} is not an atom of mu")))?;
        Ok(&self.routes[i])
    }

    /// Value of the path started at atom `i` at time `t`, given the
    /// Brownian displacement `w` accumulated since time 0.
    pub fn path_value(&self, i: usize, t: f64, w: f64) -> f64 {
        match &self.routes[i] {
            AtomRoute::Fixed(x) => *x,
            AtomRoute::Component(ci, b0) => self.components[*ci].1.eval_f_t(t, b0 + w),
        }
    }

    /// Glue the per-component kernels into the global one.
    pub fn kernel(&self) -> Result<MartingaleKernel> {
        let dec = crate::decompose::decompose(&self.mu, &self.nu)?;
        let kernels: Vec<MartingaleKernel> = self
            .components
            .iter()
            .map(|(_, m)| kernel_from_bass(m))
            .collect::<Result<_>>()?;
        crate::decompose::glue(&dec, &kernels)
    }

    /// Mass-weighted value across components (exact oracle per row).
    pub fn value(&self) -> Result<f64> {
        let mut v = 0.0;
        for (mass, model) in &self.components {
            let kernel = kernel_from_bass(model)?;
            v += mass * kernel.value_1d()?;
        }
        Ok(v)
    }

    /// Complete JSON representation: marginals, per-component base measure,
    /// monotone-map breakpoint table and fit metadata, and the per-atom
    /// routing (static atom or component with its cached `f_0^{-1}`).
    /// Round-trips through [`SbmModel::from_json_str`].
    pub fn to_json_string(&self) -> String {
        let schema = ModelJson {
            mu_atoms: self.mu.atoms1().to_vec(),
            mu_weights: self.mu.weights().to_vec(),
            nu_atoms: self.nu.atoms1().to_vec(),
            nu_weights: self.nu.weights().to_vec(),
            components: self
                .components
                .iter()
                .map(|(mass, m)| CompJson {
                    mass: *mass,
                    mu_atoms: m.mu().atoms1().to_vec(),
                    mu_weights: m.mu().weights().to_vec(),
                    nu_atoms: m.nu_target().atoms1().to_vec(),
                    nu_weights: m.nu_target().weights().to_vec(),
                    alpha_atoms: m.alpha().atoms1().to_vec(),
                    alpha_weights: m.alpha().weights().to_vec(),
                    thresholds: m.map().thresholds().to_vec(),
                    values: m.map().values().to_vec(),
                    b0: m.b0().to_vec(),
                    residual: m.residual,
                    iterations: m.iterations,
                    converged: m.converged,
                })
                .collect(),
            routes: self
                .routes
                .iter()
                .map(|r| match r {
                    AtomRoute::Fixed(x) => RouteJson { fixed: Some(*x), component: None, b0: None },
                    AtomRoute::Component(ci, b0) => {
                        RouteJson { fixed: None, component: Some(*ci), b0: Some(*b0) }
                    }
                })
                .collect(),
        };
        crate::report::to_json_string(&schema)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let schema: ModelJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("model json: {e}")))?;
        let mu = DiscreteMeasure::new_1d(schema.mu_atoms, schema.mu_weights)?;
        let nu = DiscreteMeasure::new_1d(schema.nu_atoms, schema.nu_weights)?;
        let mut components = Vec::with_capacity(schema.components.len());
        for c in schema.components {
            let model = BassModel {
                alpha: DiscreteMeasure::new_1d(c.alpha_atoms, c.alpha_weights)?,
                map: MonotoneMap::new(c.thresholds, c.values)?,
                mu: DiscreteMeasure::new_1d(c.mu_atoms, c.mu_weights)?,
                nu_target: DiscreteMeasure::new_1d(c.nu_atoms, c.nu_weights)?,
                b0: c.b0,
                residual: c.residual,
                iterations: c.iterations,
                converged: c.converged,
            };
            if model.b0.len() != model.mu.len() {
                return Err(Error::Parse("model json: b0 length mismatch".into()));
            }
            components.push((c.mass, model));
        }
        if schema.routes.len() != mu.len() {
            return Err(Error::Parse("model json: route count mismatch".into()));
        }
        let routes = schema
            .routes
            .into_iter()
            .map(|r| match (r.fixed, r.component, r.b0) {
                (Some(x), None, None) => Ok(AtomRoute::Fixed(x)),
                (None, Some(ci), Some(b0)) if ci < components.len() => {
                    Ok(AtomRoute::Component(ci, b0))
                }
                _ => Err(Error::Parse("model json: malformed route".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SbmModel { mu, nu, components, routes })
    }
}

// ---------------------------------------------------------------------------
// Planar evaluation-only models
// ---------------------------------------------------------------------------

/// Evaluation-only planar model derived from a solved kernel: for each
/// start atom, the exact transport plan between a Gaussian grid and the
/// conditional law stands in for the gradient-of-convex map, and
/// `m_t(b) = E[target | grid node near b]` is evaluated by Gaussian
/// posterior smoothing over the grid. No planar fixed point is attempted;
/// this is a desk-scale path evaluator for `d = 2` kernels.
#[derive(Debug, Clone)]
pub struct Bass2d {
    mu: DiscreteMeasure,
    grid: crate::gaussian::GaussianDiscretization,
    /// Per start atom and grid node: conditional mean of the terminal value.
    node_targets: Vec<Vec<[f64; 2]>>,
}

impl Bass2d {
    pub fn from_kernel(
        kernel: &MartingaleKernel,
        grid: crate::gaussian::GaussianDiscretization,
    ) -> Result<Self> {
        if kernel.mu().dim() != 2 || grid.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: kernel.mu().dim() });
        }
        let nu = kernel.nu();
        let mut node_targets = Vec::with_capacity(kernel.mu().len());
        for i in 0..kernel.mu().len() {
            let row = kernel.row(i);
            let sol = crate::transport::solve_dense(grid.weights(), row, |g, y| {
                let z = grid.node(g);
                let a = nu.atom(y);
                -(z[0] * a[0] + z[1] * a[1])
            })?;
            let mut sums = vec![[0.0f64; 3]; grid.len()];
            for &(g, y, mass) in &sol.plan {
                let a = nu.atom(y);
                sums[g][0] += mass * a[0];
                sums[g][1] += mass * a[1];
                sums[g][2] += mass;
            }
            let targets = sums
                .iter()
                .enumerate()
                .map(|(g, s)| {
                    if s[2] > 0.0 {
                        [s[0] / s[2], s[1] / s[2]]
                    } else {
                        let z = grid.node(g);
                        [z[0], z[1]]
                    }
                })
                .collect();
            node_targets.push(targets);
        }
        Ok(Bass2d { mu: kernel.mu().clone(), grid, node_targets })
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    /// `E[target | B_t = b]` for the path started at atom `row`; the grid
    /// posterior is a log-sum-exp over node likelihoods.
    pub fn eval(&self, row: usize, t: f64, b: [f64; 2]) -> [f64; 2] {
        let var = (1.0 - t).max(1e-12);
        let targets = &self.node_targets[row];
        let mut max_log = f64::NEG_INFINITY;
        let mut logs = Vec::with_capacity(self.grid.len());
        for g in 0..self.grid.len() {
            let z = self.grid.node(g);
            let d2 = (z[0] - b[0]).powi(2) + (z[1] - b[1]).powi(2);
            let l = self.grid.weights()[g].ln() - 0.5 * d2 / var;
            max_log = max_log.max(l);
            logs.push(l);
        }
        let mut num = [0.0f64; 2];
        let mut den = 0.0;
        for (g, &l) in logs.iter().enumerate() {
            let w = (l - max_log).exp();
            den += w;
            num[0] += w * targets[g][0];
            num[1] += w * targets[g][1];
        }
        [num[0] / den, num[1] / den]
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct CompJson {
    mass: f64,
    mu_atoms: Vec<f64>,
    mu_weights: Vec<f64>,
    nu_atoms: Vec<f64>,
    nu_weights: Vec<f64>,
    alpha_atoms: Vec<f64>,
    alpha_weights: Vec<f64>,
    thresholds: Vec<f64>,
    values: Vec<f64>,
    b0: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    component: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b0: Option<f64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    mu_atoms: Vec<f64>,
    mu_weights: Vec<f64>,
    nu_atoms: Vec<f64>,
    nu_weights: Vec<f64>,
    components: Vec<CompJson>,
    routes: Vec<RouteJson>,
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

//! Path simulation and displacement interpolation of the fitted martingale,
//! plus the structural checks that need them: the scaling law of the value
//! along the interpolation, time-consistency of re-interpolation, and the
//! piecewise chain that approximates a continuous local-volatility style
//! evolution through a peacock of marginals.
//!
//! Reproducibility: every path owns a counter-based RNG stream derived from
//! `(seed, path index)`, so ensembles are bitwise identical regardless of
//! how work is scheduled across threads.

use crate::bass::{AtomRoute, BassOptions, SbmModel};
use crate::gaussian::{gauss_legendre, norm_cdf, norm_pdf};
use crate::measures::{self, DiscreteMeasure};
use crate::wot::SolveOptions;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

// ---------------------------------------------------------------------------
// Path ensembles
// ---------------------------------------------------------------------------

/// Monte Carlo sample of martingale trajectories on a fixed time grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    times: Vec<f64>,
    n_paths: usize,
    /// Row-major `n_paths x len(times)` values.
    values: Vec<f64>,
    pub seed: u64,
    pub model_ref: String,
}

impl PathEnsemble {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i * self.times.len()..(i + 1) * self.times.len()]
    }

    /// Empirical marginal at grid index `k`.
    pub fn marginal(&self, k: usize) -> Result<DiscreteMeasure> {
        let t = self.times.len();
        let atoms: Vec<f64> = (0..self.n_paths).map(|i| self.values[i * t + k]).collect();
        DiscreteMeasure::new_1d(atoms, vec![1.0; self.n_paths])
    }

    /// Long-format CSV: `path_id,t,value`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("path_id,t,value\n");
        for i in 0..self.n_paths {
            for (k, &t) in self.times.iter().enumerate() {
                s.push_str(&format!(
                    "{i},{},{}\n",
                    crate::report::fmt_f64(t),
                    crate::report::fmt_f64(self.values[i * self.times.len() + k])
                ));
            }
        }
        s
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            n_paths: usize,
            times: &'a [f64],
            seed: u64,
            model_ref: &'a str,
            mean_per_time: Vec<f64>,
            second_moment_per_time: Vec<f64>,
        }
        let t = self.times.len();
        let mut mean = vec![0.0; t];
        let mut m2 = vec![0.0; t];
        for i in 0..self.n_paths {
            for k in 0..t {
                let v = self.values[i * t + k];
                mean[k] += v;
                m2[k] += v * v;
            }
        }
        for k in 0..t {
            mean[k] /= self.n_paths as f64;
            m2[k] /= self.n_paths as f64;
        }
        crate::report::to_json_string(&Summary {
            n_paths: self.n_paths,
            times: &self.times,
            seed: self.seed,
            model_ref: &self.model_ref,
            mean_per_time: mean,
            second_moment_per_time: m2,
        })
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    if times[0] < 0.0 || times[times.len() - 1] > 1.0 {
        return Err(Error::InvalidArgument("time grid must lie in [0, 1]".into()));
    }
    Ok(())
}

fn sample_atom(rng: &mut ChaCha12Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn std_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn path_rng(seed: u64, path: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path as u64 + 1);
    rng
}

/// Simulate `n` trajectories `M_t = f_t(B_t)` of the fitted model on the
/// given grid.
pub fn simulate(model: &SbmModel, times: &[f64], n: usize, seed: u64) -> Result<PathEnsemble> {
    check_times(times)?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let t_len = times.len();
    let weights = model.mu().weights().to_vec();
    let mut values = vec![0.0; n * t_len];
    values
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(p, out)| {
            let mut rng = path_rng(seed, p);
            let atom = sample_atom(&mut rng, &weights);
            let mut w = 0.0;
            let mut prev_t = 0.0;
            for (k, &t) in times.iter().enumerate() {
                if t > prev_t {
                    w += (t - prev_t).sqrt() * std_normal(&mut rng);
                    prev_t = t;
                }
                out[k] = if t == 0.0 {
                    model.mu().atom1(atom)
                } else {
                    model.path_value(atom, t, w)
                };
            }
        });
    let model_ref = format!(
        "sbm(mu_atoms={}, nu_atoms={}, components={})",
        model.mu().len(),
        model.nu().len(),
        model.components().len()
    );
    Ok(PathEnsemble { times: times.to_vec(), n_paths: n, values, seed, model_ref })
}

/// Monte Carlo estimate of `E[M_1 (B_1 - B_0)]` from the fitted model,
/// with its standard error. Converges to the static value.
pub fn estimate_mt_monte_carlo(model: &SbmModel, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let weights = model.mu().weights().to_vec();
    let (sum, sumsq) = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let atom = sample_atom(&mut rng, &weights);
            let w1 = std_normal(&mut rng);
            let m1 = model.path_value(atom, 1.0, w1);
            let v = m1 * w1;
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n as f64).sqrt()))
}

// ---------------------------------------------------------------------------
// Planar ensembles (evaluation-only models)
// ---------------------------------------------------------------------------

/// Point-pair trajectories of a planar evaluation-only model.
#[derive(Debug, Clone)]
pub struct PathEnsemble2d {
    times: Vec<f64>,
    n_paths: usize,
    /// Row-major `n_paths x len(times) x 2` coordinates.
    values: Vec<f64>,
    pub seed: u64,
}

impl PathEnsemble2d {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn point(&self, path: usize, k: usize) -> [f64; 2] {
        let base = (path * self.times.len() + k) * 2;
        [self.values[base], self.values[base + 1]]
    }

    /// Long-format CSV: `path_id,t,x,y`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("path_id,t,x,y\n");
        for p in 0..self.n_paths {
            for (k, &t) in self.times.iter().enumerate() {
                let v = self.point(p, k);
                s.push_str(&format!(
                    "{p},{},{},{}\n",
                    crate::report::fmt_f64(t),
                    crate::report::fmt_f64(v[0]),
                    crate::report::fmt_f64(v[1])
                ));
            }
        }
        s
    }
}

/// Simulate planar trajectories of an evaluation-only model.
pub fn simulate_2d(
    model: &crate::bass::Bass2d,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<PathEnsemble2d> {
    check_times(times)?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let t_len = times.len();
    let weights = model.mu().weights().to_vec();
    let mut values = vec![0.0; n * t_len * 2];
    values
        .par_chunks_mut(t_len * 2)
        .enumerate()
        .for_each(|(p, out)| {
            let mut rng = path_rng(seed, p);
            let atom = sample_atom(&mut rng, &weights);
            let mut w = [0.0f64; 2];
            let mut prev_t = 0.0;
            for (k, &t) in times.iter().enumerate() {
                if t > prev_t {
                    let s = (t - prev_t).sqrt();
                    w[0] += s * std_normal(&mut rng);
                    w[1] += s * std_normal(&mut rng);
                    prev_t = t;
                }
                let v = if t == 0.0 {
                    [model.mu().atom(atom)[0], model.mu().atom(atom)[1]]
                } else {
                    model.eval(atom, t, w)
                };
                out[2 * k] = v[0];
                out[2 * k + 1] = v[1];
            }
        });
    Ok(PathEnsemble2d { times: times.to_vec(), n_paths: n, values, seed })
}

// ---------------------------------------------------------------------------
// Displacement interpolation
// ---------------------------------------------------------------------------

/// The marginal flow `t -> law(M_t)`, one measure per grid time.
#[derive(Debug, Clone)]
pub struct InterpolationCurve {
    pub times: Vec<f64>,
    pub measures: Vec<DiscreteMeasure>,
}

impl InterpolationCurve {
    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct CurveJson<'a> {
            times: &'a [f64],
            atoms: Vec<&'a [f64]>,
            weights: Vec<&'a [f64]>,
        }
        crate::report::to_json_string(&CurveJson {
            times: &self.times,
            atoms: self.measures.iter().map(|m| m.atoms1()).collect(),
            weights: self.measures.iter().map(|m| m.weights()).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub enum InterpMethod {
    /// Push a Gauss-Hermite grid of `alpha * gamma_t` through `f_t`.
    Quadrature { order: usize },
    /// Empirical marginals of a simulated ensemble.
    MonteCarlo { n: usize, seed: u64 },
}

/// Marginal law of the fitted model at one time, by quadrature.
pub fn interpolation_measure(model: &SbmModel, t: f64, order: usize) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("time {t} outside [0,1]")));
    }
    if t == 0.0 {
        return Ok(model.mu().clone());
    }
    if t == 1.0 {
        return Ok(model.nu().clone());
    }
    let (z, w) = crate::gaussian::gauss_hermite(order)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    // eta atoms stay in place; components push alpha * gamma_t through f_t
    for (i, route) in model.routes().iter().enumerate() {
        if let AtomRoute::Fixed(x) = route {
            atoms.push(*x);
            weights.push(model.mu().weight(i));
        }
    }
    let st = t.sqrt();
    for (mass, bm) in model.components() {
        let alpha = bm.alpha();
        for i in 0..alpha.len() {
            let (a, wa) = (alpha.atom1(i), alpha.weight(i));
            for (zj, wj) in z.iter().zip(&w) {
                atoms.push(bm.eval_f_t(t, a + st * zj));
                weights.push(mass * wa * wj);
            }
        }
    }
    DiscreteMeasure::new_1d(atoms, weights)
}

/// Displacement interpolation along a time grid.
pub fn interpolate(
    model: &SbmModel,
    times: &[f64],
    method: &InterpMethod,
) -> Result<InterpolationCurve> {
    check_times(times)?;
    let measures = match method {
        InterpMethod::Quadrature { order } => times
            .iter()
            .map(|&t| interpolation_measure(model, t, *order))
            .collect::<Result<Vec<_>>>()?,
        InterpMethod::MonteCarlo { n, seed } => {
            let ens = simulate(model, times, *n, *seed)?;
            (0..times.len()).map(|k| ens.marginal(k)).collect::<Result<Vec<_>>>()?
        }
    };
    Ok(InterpolationCurve { times: times.to_vec(), measures })
}

// ---------------------------------------------------------------------------
// Quantized interpolation marginals (for re-solving between them)
// ---------------------------------------------------------------------------

/// How an interpolation marginal is compressed to a small support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    /// Equal-mass bins, conditional-mean atom per bin: the result precedes
    /// the true marginal in convex order.
    Barycenter,
    /// Equal-mass bins spread to the bin's value range endpoints: the
    /// result dominates the true marginal in convex order.
    Spread,
}

/// Compress `law(M_t)` onto roughly `levels` atoms.
///
/// Exact at `t = 0` and `t = 1`. For interior times, each component's
/// Brownian position `B_t ~ alpha * gamma_t` is cut into equal-mass bins in
/// B-space (mixture-CDF bisection); the conditional mean of `f_t(B_t)` per
/// bin comes from Gauss-Legendre quadrature of the smooth integrand.
pub fn quantize_interpolation(
    model: &SbmModel,
    t: f64,
    levels: usize,
    mode: QuantizeMode,
) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("time {t} outside [0,1]")));
    }
    if t == 0.0 {
        return Ok(model.mu().clone());
    }
    if t == 1.0 {
        return Ok(model.nu().clone());
    }
    if levels < 2 {
        return Err(Error::InvalidArgument("need at least 2 levels".into()));
    }
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (i, route) in model.routes().iter().enumerate() {
        if let AtomRoute::Fixed(x) = route {
            atoms.push(*x);
            weights.push(model.mu().weight(i));
        }
    }
    let (gl_nodes, gl_weights) = gauss_legendre(24)?;
    let st = t.sqrt();
    for (mass, bm) in model.components() {
        let alpha = bm.alpha();
        let a = alpha.atoms1();
        let wa = alpha.weights();
        let cdf = |b: f64| -> f64 {
            a.iter().zip(wa).map(|(&ai, &wi)| wi * norm_cdf((b - ai) / st)).sum()
        };
        let dens = |b: f64| -> f64 {
            a.iter().zip(wa).map(|(&ai, &wi)| wi * norm_pdf((b - ai) / st) / st).sum()
        };
        let inv = |u: f64| -> f64 {
            let (mut lo, mut hi) = (a[0] - 14.0 * st.max(1.0), a[a.len() - 1] + 14.0 * st.max(1.0));
            for _ in 0..90 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let lf = levels as f64;
        let mut edges = Vec::with_capacity(levels + 1);
        edges.push(inv(1e-14) - 4.0 * st);
        for j in 1..levels {
            edges.push(inv(j as f64 / lf));
        }
        edges.push(inv(1.0 - 1e-14) + 4.0 * st);
        for j in 0..levels {
            let (lo, hi) = (edges[j], edges[j + 1]);
            let mut num = 0.0;
            let mut den = 0.0;
            for (xg, wg) in gl_nodes.iter().zip(&gl_weights) {
                let b = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg;
                let d = dens(b) * 0.5 * (hi - lo) * wg;
                den += d;
                num += d * bm.eval_f_t(t, b);
            }
            let bin_mass = mass / lf;
            if den <= 0.0 {
                continue;
            }
            let mean = num / den;
            match mode {
                QuantizeMode::Barycenter => {
                    atoms.push(mean);
                    weights.push(bin_mass);
                }
                QuantizeMode::Spread => {
                    // endpoints of the bin's value range under monotone f_t
                    let lo_v = if j == 0 { bm.map().values()[0] } else { bm.eval_f_t(t, lo) };
                    let hi_v = if j == levels - 1 {
                        *bm.map().values().last().unwrap()
                    } else {
                        bm.eval_f_t(t, hi)
                    };
                    if hi_v - lo_v < 1e-14 {
                        atoms.push(mean);
                        weights.push(bin_mass);
                    } else {
                        let lam = ((hi_v - mean) / (hi_v - lo_v)).clamp(0.0, 1.0);
                        atoms.push(lo_v);
                        weights.push(bin_mass * lam);
                        atoms.push(hi_v);
                        weights.push(bin_mass * (1.0 - lam));
                    }
                }
            }
        }
    }
    DiscreteMeasure::new_1d(atoms, weights)
}

// ---------------------------------------------------------------------------
// Scaling and time-consistency checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DynamicsOptions {
    pub quantize_levels: usize,
    pub bass: BassOptions,
    pub solve: SolveOptions,
    /// Acceptance threshold for the time-consistency gap.
    pub consistency_tol: f64,
    /// Acceptance threshold for the scaling relative error.
    pub scaling_rel_tol: f64,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            quantize_levels: 64,
            bass: BassOptions::default(),
            solve: SolveOptions::default(),
            consistency_tol: 5e-2,
            scaling_rel_tol: 3e-2,
        }
    }
}

/// Both sides of the value-scaling identity along the interpolation, in the
/// square-root and in the squared normalization (they agree algebraically;
/// both are reported against data).
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub r: f64,
    pub t: f64,
    /// Value of the full problem.
    pub value_full: f64,
    /// Value solved between the (discretized) interpolation marginals.
    pub value_interp: f64,
    /// `sqrt(t - r) * value_full`.
    pub sqrt_form_rhs: f64,
    /// `(t - r) * value_full^2` against `value_interp^2`.
    pub squared_form_rhs: f64,
    pub squared_form_lhs: f64,
    pub rel_error: f64,
    pub passed: bool,
}

fn solve_pair_value(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: &DynamicsOptions,
) -> Result<f64> {
    Ok(crate::wot::solve_wot_1d_by_components(mu, nu, &opts.solve)?.value)
}

/// Quantize the marginal at `t`, preferring the barycenter compression and
/// falling back to the convex-order-safe spread version for the later
/// marginal when the compressed pair fails the order check.
fn quantized_pair(
    model: &SbmModel,
    r: f64,
    t: f64,
    opts: &DynamicsOptions,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let rho_r = quantize_interpolation(model, r, opts.quantize_levels, QuantizeMode::Barycenter)?;
    let rho_t = quantize_interpolation(model, t, opts.quantize_levels, QuantizeMode::Barycenter)?;
    if measures::convex_order_1d_tol(&rho_r, &rho_t, 1e-6)? {
        return Ok((rho_r, rho_t));
    }
    let rho_t = quantize_interpolation(model, t, opts.quantize_levels, QuantizeMode::Spread)?;
    Ok((rho_r, rho_t))
}

/// Check `WT([mu,nu]_r, [mu,nu]_t) = sqrt(t - r) WT(mu, nu)` numerically.
pub fn check_scaling(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    r: f64,
    t: f64,
    opts: &DynamicsOptions,
) -> Result<ScalingReport> {
    if !(0.0 <= r && r < t && t <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 <= r < t <= 1, got ({r}, {t})")));
    }
    let value_full = solve_pair_value(mu, nu, opts)?;
    let model = SbmModel::fit(mu, nu, &opts.bass)?;
    let (rho_r, rho_t) = quantized_pair(&model, r, t, opts)?;
    let value_interp = if r == 0.0 && t == 1.0 {
        value_full
    } else {
        solve_pair_value(&rho_r, &rho_t, opts)?
    };
    let sqrt_form_rhs = (t - r).sqrt() * value_full;
    let denom = sqrt_form_rhs.abs().max(1e-12);
    let rel_error = (value_interp - sqrt_form_rhs).abs() / denom;
    Ok(ScalingReport {
        r,
        t,
        value_full,
        value_interp,
        sqrt_form_rhs,
        squared_form_rhs: (t - r) * value_full * value_full,
        squared_form_lhs: value_interp * value_interp,
        rel_error,
        passed: rel_error <= opts.scaling_rel_tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    /// `W_2` distance between re-interpolating and direct interpolation.
    pub w2_gap: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Check `[[mu,nu]_s, [mu,nu]_t]_lambda = [mu,nu]_{(1-lambda)s + lambda t}`.
pub fn check_time_consistency(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    s: f64,
    t: f64,
    lambda: f64,
    opts: &DynamicsOptions,
) -> Result<ConsistencyReport> {
    if !(0.0 <= s && s < t && t <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument("need 0 <= s < t <= 1 and lambda in [0,1]".into()));
    }
    let model = SbmModel::fit(mu, nu, &opts.bass)?;
    let (rho_s, rho_t) = quantized_pair(&model, s, t, opts)?;
    // side A: refit between the interpolated marginals, interpolate at lambda
    let side_a = if lambda == 0.0 {
        rho_s.clone()
    } else if lambda == 1.0 {
        rho_t.clone()
    } else {
        let inner = SbmModel::fit(&rho_s, &rho_t, &opts.bass)?;
        quantize_interpolation(&inner, lambda, opts.quantize_levels, QuantizeMode::Barycenter)?
    };
    // side B: direct interpolation of the original model
    let u = (1.0 - lambda) * s + lambda * t;
    let side_b = if u == s {
        rho_s.clone()
    } else if u == t {
        rho_t.clone()
    } else {
        quantize_interpolation(&model, u, opts.quantize_levels, QuantizeMode::Barycenter)?
    };
    let w2_gap = measures::wasserstein2_1d(&side_a, &side_b)?;
    Ok(ConsistencyReport { s, t, lambda, w2_gap, tol: opts.consistency_tol, passed: w2_gap <= opts.consistency_tol })
}

// ---------------------------------------------------------------------------
// Piecewise chain through a peacock
// ---------------------------------------------------------------------------

/// Fit one stretched-Brownian piece per coarse interval of the peacock and
/// chain them by restarting each piece at the realized terminal value of
/// the previous one. `n` must divide the number of peacock intervals; the
/// chain uses every `(K/n)`-th marginal.
///
/// Returns the fitted pieces (with their real-time spans) and a simulated
/// ensemble on the requested output grid.
pub fn localvol_chain(
    peacock: &[(f64, DiscreteMeasure)],
    n: usize,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &BassOptions,
) -> Result<(Vec<(f64, f64, SbmModel)>, PathEnsemble)> {
    if peacock.len() < 2 {
        return Err(Error::InvalidArgument("peacock needs at least two marginals".into()));
    }
    let intervals = peacock.len() - 1;
    if n == 0 || intervals % n != 0 {
        return Err(Error::InvalidArgument(format!(
            "refinement {n} does not divide the {intervals} peacock intervals"
        )));
    }
    if peacock.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidArgument("peacock times must be increasing".into()));
    }
    for w in peacock.windows(2) {
        if !measures::convex_order_1d_tol(&w[0].1, &w[1].1, 1e-6)? {
            return Err(Error::NotInConvexOrder(format!(
                "peacock marginals at t = {} and t = {} are out of order",
                w[0].0, w[1].0
            )));
        }
    }
    let t0 = peacock[0].0;
    let t_end = peacock[peacock.len() - 1].0;
    if times.is_empty()
        || times.windows(2).any(|w| w[0] >= w[1])
        || times[0] < t0
        || times[times.len() - 1] > t_end
    {
        return Err(Error::InvalidArgument("output grid must be increasing inside the peacock span".into()));
    }

    let stride = intervals / n;
    let mut pieces = Vec::with_capacity(n);
    for k in 0..n {
        let (ta, ma) = &peacock[k * stride];
        let (tb, mb) = &peacock[(k + 1) * stride];
        pieces.push((*ta, *tb, SbmModel::fit(ma, mb, opts)?));
    }

    let t_len = times.len();
    let weights = peacock[0].1.weights().to_vec();
    let mu0 = peacock[0].1.clone();
    let mut values = vec![0.0; n_paths * t_len];
    let piece_results: Vec<Result<()>> = values
        .par_chunks_mut(t_len)
        .enumerate()
        .map(|(p, out)| {
            let mut rng = path_rng(seed, p);
            let atom = sample_atom(&mut rng, &weights);
            let mut x = mu0.atom1(atom);
            let mut k_out = 0usize;
            while k_out < t_len && times[k_out] <= pieces[0].0 {
                out[k_out] = x;
                k_out += 1;
            }
            for (ta, tb, model) in &pieces {
                let span = tb - ta;
                let route = model.route_for_value(x)?.clone();
                let mut w = 0.0;
                let mut prev_u = 0.0;
                while k_out < t_len && times[k_out] <= *tb {
                    let u = ((times[k_out] - ta) / span).min(1.0);
                    if u > prev_u {
                        w += (u - prev_u).sqrt() * std_normal(&mut rng);
                        prev_u = u;
                    }
                    out[k_out] = match &route {
                        AtomRoute::Fixed(v) => *v,
                        AtomRoute::Component(ci, b0) => {
                            model.components()[*ci].1.eval_f_t(u, b0 + w)
                        }
                    };
                    k_out += 1;
                }
                // advance to the piece end to obtain the restart value
                if prev_u < 1.0 {
                    w += (1.0 - prev_u).sqrt() * std_normal(&mut rng);
                }
                x = match &route {
                    AtomRoute::Fixed(v) => *v,
                    AtomRoute::Component(ci, b0) => model.components()[*ci].1.eval_f_t(1.0, b0 + w),
                };
            }
            Ok(())
        })
        .collect();
    for r in piece_results {
        r?;
    }
    let ens = PathEnsemble {
        times: times.to_vec(),
        n_paths,
        values,
        seed,
        model_ref: "localvol-chain".into(),
    };
    Ok((pieces, ens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dirac_two_point_model() -> SbmModel {
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        SbmModel::fit(&mu, &nu, &BassOptions::default()).unwrap()
    }

    #[test]
    fn simulation_is_reproducible_and_bounded() {
        let model = dirac_two_point_model();
        let times: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let a = simulate(&model, &times, 500, 42).unwrap();
        let b = simulate(&model, &times, 500, 42).unwrap();
        assert_eq!(a.values, b.values);
        for i in 0..a.n_paths() {
            for &v in a.path(i) {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        // terminal values land exactly on the atoms
        for i in 0..a.n_paths() {
            let last = *a.path(i).last().unwrap();
            assert!(last == -1.0 || last == 1.0);
        }
    }

    #[test]
    fn terminal_law_approximates_nu() {
        let model = dirac_two_point_model();
        let times = vec![0.0, 1.0];
        let ens = simulate(&model, &times, 100_000, 7).unwrap();
        let emp = ens.marginal(1).unwrap();
        let d = measures::wasserstein1_1d(&emp, model.nu()).unwrap();
        assert!(d <= 1e-2, "W1 = {d}");
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let model = dirac_two_point_model();
        let curve = interpolate(
            &model,
            &[0.0, 0.5, 1.0],
            &InterpMethod::Quadrature { order: 32 },
        )
        .unwrap();
        assert_eq!(&curve.measures[0], model.mu());
        assert_eq!(&curve.measures[2], model.nu());
        // mean constant, second moment increasing
        let mean_mid = curve.measures[1].mean1();
        assert_abs_diff_eq!(mean_mid, 0.0, epsilon = 1e-9);
        assert!(curve.measures[1].second_moment() <= 1.0 + 1e-9);
        assert!(curve.measures[1].second_moment() >= 0.0);
    }

    #[test]
    fn quantized_interpolation_stays_in_convex_order() {
        let mu = DiscreteMeasure::gaussian_quantile(0.0, 0.25, 20).unwrap();
        let nu = DiscreteMeasure::gaussian_quantile(0.0, 1.25, 40).unwrap();
        let model = SbmModel::fit(&mu, &nu, &BassOptions::default()).unwrap();
        let q1 = quantize_interpolation(&model, 0.3, 48, QuantizeMode::Barycenter).unwrap();
        let q2 = quantize_interpolation(&model, 0.7, 48, QuantizeMode::Barycenter).unwrap();
        assert!(measures::convex_order_1d_tol(&q1, &q2, 1e-6).unwrap());
        // spread mode dominates barycenter mode
        let q2s = quantize_interpolation(&model, 0.7, 48, QuantizeMode::Spread).unwrap();
        assert!(measures::convex_order_1d_tol(&q2, &q2s, 1e-9).unwrap());
    }

    #[test]
    fn scaling_identity_instance() {
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let rep = check_scaling(&mu, &nu, 0.0, 1.0, &DynamicsOptions::default()).unwrap();
        assert!(rep.rel_error <= 1e-9);
        assert!(rep.passed);
    }

    #[test]
    fn scaling_quarter_time() {
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let rep = check_scaling(&mu, &nu, 0.0, 0.25, &DynamicsOptions::default()).unwrap();
        // ratio value_interp / value_full should be about 1/2
        assert!(rep.passed, "rel error {}", rep.rel_error);
        assert!((rep.value_interp / rep.value_full - 0.5).abs() <= 3e-2);
    }

    #[test]
    fn scaling_degenerate_identical_marginals() {
        // mu = nu: the value is zero at every window and the identity holds
        let m = DiscreteMeasure::new_1d(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let rep = check_scaling(&m, &m, 0.0, 0.25, &DynamicsOptions::default()).unwrap();
        assert_eq!(rep.value_full, 0.0);
        assert_eq!(rep.value_interp, 0.0);
        assert!(rep.passed);
    }

    #[test]
    fn consistency_trivial_lambdas() {
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let opts = DynamicsOptions::default();
        let r0 = check_time_consistency(&mu, &nu, 0.0, 1.0, 0.0, &opts).unwrap();
        assert_eq!(r0.w2_gap, 0.0);
        let r1 = check_time_consistency(&mu, &nu, 0.0, 1.0, 1.0, &opts).unwrap();
        assert_eq!(r1.w2_gap, 0.0);
    }

    #[test]
    fn constant_peacock_freezes_paths() {
        let m = DiscreteMeasure::new_1d(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let peacock = vec![(0.0, m.clone()), (0.5, m.clone()), (1.0, m.clone())];
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let (_, ens) = localvol_chain(&peacock, 2, &times, 200, 3, &BassOptions::default()).unwrap();
        for i in 0..ens.n_paths() {
            let p = ens.path(i);
            assert!(p.iter().all(|&v| v == p[0]));
        }
    }

    #[test]
    fn single_piece_chain_equals_plain_simulate() {
        let mu = DiscreteMeasure::dirac(0.0);
        let nu = DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let model = SbmModel::fit(&mu, &nu, &BassOptions::default()).unwrap();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let plain = simulate(&model, &times, 300, 11).unwrap();
        let peacock = vec![(0.0, mu), (1.0, nu)];
        let (_, chain) =
            localvol_chain(&peacock, 1, &times, 300, 11, &BassOptions::default()).unwrap();
        assert_eq!(plain.values, chain.values);
    }
}

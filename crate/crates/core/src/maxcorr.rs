//! The max-correlation functional
//! `H(eta) = sup { ∫ m·b dq : q ∈ Π(eta, gamma^d) }`
//! together with a dual potential usable as a supergradient of the concave
//! map `eta -> H(eta)` on a fixed atom grid.
//!
//! In one dimension the optimizer is the comonotone coupling: sort the atoms
//! `y_1 < ... < y_n` with cumulative weights `c_i`, slice the Gaussian at
//! `z_i = Phi^{-1}(c_i)`, and
//!
//! ```text
//! H = Σ_i y_i ∫_{z_{i-1}}^{z_i} b phi(b) db = Σ_i y_i (phi(z_{i-1}) - phi(z_i)).
//! ```
//!
//! The dual potential obeys the indifference recursion
//! `phi(y_{i+1}) = phi(y_i) + z_i (y_{i+1} - y_i)` with the gauge
//! `phi(y_1) = 0`. Atoms with zero weight inherit the linear interpolation
//! (their slice is empty, `z` does not move), and the two unbounded end
//! slopes are clipped at `±DUAL_SLOPE_CLIP`, which keeps the potential a
//! valid conjugate up to a `~1e-16` tail term.
//!
//! For d >= 2 (or as a cross-check in d = 1) the Gaussian is replaced by a
//! finite discretization and the finite transportation problem is solved
//! exactly; the row-side node potentials are the dual values.

use crate::gaussian::{norm_pdf, norm_ppf, GaussianDiscretization};
use crate::measures::DiscreteMeasure;
use crate::{transport, Error, Result};

/// Largest dual slope used for empty end slices; `Phi(8.3)` rounds to 1 in
/// f64, so any nonempty slice has a smaller slope and monotonicity of the
/// potential is preserved.
pub const DUAL_SLOPE_CLIP: f64 = 8.3;

/// Value of `H` plus a dual potential on the atoms of the input measure.
#[derive(Debug, Clone)]
pub struct MaxCorrResult {
    pub value: f64,
    /// One dual value per atom, in the measure's (sorted) atom order;
    /// gauge: the potential vanishes at the first atom.
    pub dual_potential: Vec<f64>,
}

/// `H` and its dual on a sorted grid with nonnegative weights summing to 1.
///
/// Zero weights are allowed; this is the hot path of the Frank-Wolfe solver.
pub(crate) fn value_dual_on_sorted_grid(atoms: &[f64], weights: &[f64]) -> (f64, Vec<f64>) {
    let n = atoms.len();
    debug_assert_eq!(n, weights.len());
    let mut value = 0.0;
    let mut dual = vec![0.0; n];
    let mut cum = 0.0;
    let mut pdf_prev = 0.0; // phi at Phi^{-1}(0)
    for i in 0..n {
        cum += weights[i];
        let c = cum.min(1.0);
        let z = if i + 1 == n { f64::INFINITY } else { norm_ppf(c) };
        let pdf = norm_pdf(z);
        value += atoms[i] * (pdf_prev - pdf);
        pdf_prev = pdf;
        if i + 1 < n {
            let slope = z.clamp(-DUAL_SLOPE_CLIP, DUAL_SLOPE_CLIP);
            dual[i + 1] = dual[i] + slope * (atoms[i + 1] - atoms[i]);
        }
    }
    (value, dual)
}

/// Exact one-dimensional max-correlation with the standard Gaussian.
pub fn maxcorr_1d(eta: &DiscreteMeasure) -> Result<MaxCorrResult> {
    if eta.dim() != 1 {
        return Err(Error::NotOneDimensional(eta.dim()));
    }
    let (value, dual_potential) = value_dual_on_sorted_grid(eta.atoms1(), eta.weights());
    Ok(MaxCorrResult { value, dual_potential })
}

/// Max-correlation against a finite Gaussian discretization, as an exact
/// transportation problem `max Σ q(m,b) m·b`.
pub fn maxcorr_disc(eta: &DiscreteMeasure, g: &GaussianDiscretization) -> Result<MaxCorrResult> {
    if eta.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: eta.dim() });
    }
    let d = eta.dim();
    let sol = transport::solve_dense(eta.weights(), g.weights(), |i, j| {
        let m = eta.atom(i);
        let b = g.node(j);
        -(0..d).map(|k| m[k] * b[k]).sum::<f64>()
    })?;
    let gauge = -sol.u[0];
    let dual_potential = sol.u.iter().map(|&u| -u - gauge).collect();
    Ok(MaxCorrResult { value: -sol.objective, dual_potential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{gaussian_disc, quantile_grid, Scheme};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::new_1d(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn dirac_has_zero_value() {
        for c in [-3.0, 0.0, 7.5] {
            let r = maxcorr_1d(&DiscreteMeasure::dirac(c)).unwrap();
            assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn symmetric_two_point_is_expected_abs_normal() {
        let r = maxcorr_1d(&two_point()).unwrap();
        assert_abs_diff_eq!(r.value, SQRT_2_OVER_PI, epsilon = 1e-12);
    }

    #[test]
    fn two_point_value_matches_monte_carlo() {
        // independent sampling oracle for E|Z|
        let mut rng = ChaCha12Rng::seed_from_u64(20240601);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            sum += z.abs();
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let stderr = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let r = maxcorr_1d(&two_point()).unwrap();
        assert!((r.value - mean).abs() <= 3.0 * stderr + 1e-6);
    }

    #[test]
    fn discretized_gaussian_converges_to_sigma() {
        for sigma in [1.0, 0.7] {
            let (nodes, weights) = quantile_grid(400).unwrap();
            let atoms: Vec<f64> = nodes.iter().map(|z| sigma * z).collect();
            let m = DiscreteMeasure::new_1d(atoms, weights).unwrap();
            let r = maxcorr_1d(&m).unwrap();
            assert!((r.value - sigma).abs() < 5e-3, "sigma {sigma}: {}", r.value);
            // refinement shrinks the deficit
            let (nodes2, weights2) = quantile_grid(100).unwrap();
            let m2 = DiscreteMeasure::new_1d(nodes2.iter().map(|z| sigma * z).collect(), weights2)
                .unwrap();
            let r2 = maxcorr_1d(&m2).unwrap();
            assert!((r.value - sigma).abs() < (r2.value - sigma).abs());
        }
    }

    #[test]
    fn value_respects_cauchy_schwarz_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(1..8);
            let atoms: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let m = DiscreteMeasure::new_1d(atoms, weights).unwrap();
            let r = maxcorr_1d(&m).unwrap();
            assert!(r.value <= m.second_moment().sqrt() + 1e-12);
        }
    }

    #[test]
    fn dual_is_a_supergradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let atoms: Vec<f64> = vec![-2.0, -0.5, 0.3, 1.0, 2.5];
        for _ in 0..30 {
            let w1: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
            let w2: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
            let m1 = DiscreteMeasure::new_1d(atoms.clone(), w1).unwrap();
            let m2 = DiscreteMeasure::new_1d(atoms.clone(), w2).unwrap();
            let r1 = maxcorr_1d(&m1).unwrap();
            let r2 = maxcorr_1d(&m2).unwrap();
            let linearized: f64 = (0..5)
                .map(|i| (m2.weight(i) - m1.weight(i)) * r1.dual_potential[i])
                .sum();
            assert!(r2.value <= r1.value + linearized + 1e-7);
        }
    }

    #[test]
    fn concavity_translation_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let atoms: Vec<f64> = vec![-1.5, -0.2, 0.9, 2.0];
        for _ in 0..20 {
            let w1: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            let w2: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            let lam: f64 = rng.gen_range(0.05..0.95);
            let m1 = DiscreteMeasure::new_1d(atoms.clone(), w1.clone()).unwrap();
            let m2 = DiscreteMeasure::new_1d(atoms.clone(), w2.clone()).unwrap();
            let mix: Vec<f64> = (0..4)
                .map(|i| lam * m1.weight(i) + (1.0 - lam) * m2.weight(i))
                .collect();
            let mm = DiscreteMeasure::new_1d(atoms.clone(), mix).unwrap();
            let h1 = maxcorr_1d(&m1).unwrap().value;
            let h2 = maxcorr_1d(&m2).unwrap().value;
            let hm = maxcorr_1d(&mm).unwrap().value;
            assert!(hm >= lam * h1 + (1.0 - lam) * h2 - 1e-9);

            let c: f64 = rng.gen_range(-4.0..4.0);
            let ht = maxcorr_1d(&m1.translate(&[c]).unwrap()).unwrap().value;
            assert_abs_diff_eq!(ht, h1, epsilon = 1e-9);

            let s: f64 = rng.gen_range(0.1..3.0);
            let hs = maxcorr_1d(&m1.scale(s).unwrap()).unwrap().value;
            assert_abs_diff_eq!(hs, s * h1, epsilon = 1e-9);
        }
    }

    #[test]
    fn order_invariance_under_input_permutation() {
        // construction sorts, so permuted input gives identical results
        let a = DiscreteMeasure::new_1d(vec![2.0, -1.0, 0.5], vec![0.3, 0.4, 0.3]).unwrap();
        let b = DiscreteMeasure::new_1d(vec![-1.0, 0.5, 2.0], vec![0.4, 0.3, 0.3]).unwrap();
        assert_eq!(maxcorr_1d(&a).unwrap().value, maxcorr_1d(&b).unwrap().value);
    }

    #[test]
    fn disc_dirac_is_zero() {
        let g = gaussian_disc(2, 8, Scheme::GaussHermite).unwrap();
        let m = DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        let r = maxcorr_disc(&m, &g).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn disc_matches_exact_1d_quantile_grid() {
        // quantile-grid nodes capture sliced first moments of discrete
        // targets almost exactly; order 64 stays within 2e-3
        let g = gaussian_disc(1, 64, Scheme::QuantileGrid).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10 {
            let atoms: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..1.0)).collect();
            let m = DiscreteMeasure::new_1d(atoms, weights).unwrap();
            let exact = maxcorr_1d(&m).unwrap().value;
            let disc = maxcorr_disc(&m, &g).unwrap().value;
            assert!((disc - exact).abs() < 2e-3, "exact {exact}, disc {disc}");
        }
    }

    #[test]
    fn disc_gauss_hermite_1d_has_kink_limited_accuracy() {
        // Hermite rules converge slowly on the sliced (kinked) integrand;
        // order 64 only reaches a few 1e-3 of absolute error
        let g = gaussian_disc(1, 64, Scheme::GaussHermite).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..5 {
            let atoms: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..1.0)).collect();
            let m = DiscreteMeasure::new_1d(atoms, weights).unwrap();
            let exact = maxcorr_1d(&m).unwrap().value;
            let disc = maxcorr_disc(&m, &g).unwrap().value;
            assert!((disc - exact).abs() < 2.5e-2, "exact {exact}, disc {disc}");
        }
    }

    #[test]
    fn corner_measure_decouples_into_two_abs_moments() {
        let corners = DiscreteMeasure::new(
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
            vec![0.25; 4],
        )
        .unwrap();
        let expected = 2.0 * SQRT_2_OVER_PI;
        // quantile-grid 32^2: bins never straddle zero, so E|Z| per axis is
        // exact and the optimal assignment is by quadrant
        let g = gaussian_disc(2, 32, Scheme::QuantileGrid).unwrap();
        let r = maxcorr_disc(&corners, &g).unwrap();
        assert!((r.value - expected).abs() < 5e-3, "qgrid {}", r.value);
        // tensor Hermite 32^2 carries the 1-d kink error in each axis
        let gh = gaussian_disc(2, 32, Scheme::GaussHermite).unwrap();
        let rh = maxcorr_disc(&corners, &gh).unwrap();
        assert!((rh.value - expected).abs() < 2.5e-2, "hermite {}", rh.value);
    }

    #[test]
    fn disc_dual_is_supergradient_too() {
        let g = gaussian_disc(1, 32, Scheme::QuantileGrid).unwrap();
        let atoms = vec![-1.0, 0.0, 2.0];
        let m1 = DiscreteMeasure::new_1d(atoms.clone(), vec![0.3, 0.3, 0.4]).unwrap();
        let m2 = DiscreteMeasure::new_1d(atoms.clone(), vec![0.5, 0.2, 0.3]).unwrap();
        let r1 = maxcorr_disc(&m1, &g).unwrap();
        let r2 = maxcorr_disc(&m2, &g).unwrap();
        let lin: f64 = (0..3)
            .map(|i| (m2.weight(i) - m1.weight(i)) * r1.dual_potential[i])
            .sum();
        assert!(r2.value <= r1.value + lin + 1e-7);
    }
}

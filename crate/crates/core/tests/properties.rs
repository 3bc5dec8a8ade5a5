//! Cross-module invariants: agreement between independent computation
//! routes, order-theoretic properties on random inputs, and the stochastic
//! behaviour of simulated ensembles.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sbm_core::bass::{self, BassOptions, SbmModel};
use sbm_core::dynamics::{self, InterpMethod};
use sbm_core::gaussian::{gaussian_disc, Scheme};
use sbm_core::maxcorr;
use sbm_core::measures::{self, DiscreteMeasure};
use sbm_core::wot::{self, FwOptions, Oracle, SolveOptions};

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

fn random_pair(rng: &mut ChaCha12Rng, n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let atoms: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.2)).collect();
    let mu = DiscreteMeasure::new_1d(atoms, weights).unwrap();
    let mut nu_atoms = Vec::new();
    let mut nu_weights = Vec::new();
    for i in 0..mu.len() {
        let (x, w) = (mu.atom1(i), mu.weight(i));
        let s = rng.gen_range(0.4..1.2);
        let p = rng.gen_range(0.15..0.45);
        nu_atoms.extend_from_slice(&[x - s, x, x + s]);
        nu_weights.extend_from_slice(&[w * p, w * (1.0 - 2.0 * p), w * p]);
    }
    (mu, DiscreteMeasure::new_1d(nu_atoms, nu_weights).unwrap())
}

/// A pair with two irreducible components separated at zero.
fn random_two_component_pair(rng: &mut ChaCha12Rng) -> (DiscreteMeasure, DiscreteMeasure) {
    let (mu_l, nu_l) = shifted_pair(rng, -4.0);
    let (mu_r, nu_r) = shifted_pair(rng, 4.0);
    let p: f64 = rng.gen_range(0.3..0.7);
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for i in 0..mu_l.len() {
        atoms.push(mu_l.atom1(i));
        weights.push(p * mu_l.weight(i));
    }
    for i in 0..mu_r.len() {
        atoms.push(mu_r.atom1(i));
        weights.push((1.0 - p) * mu_r.weight(i));
    }
    let mu = DiscreteMeasure::new_1d(atoms, weights).unwrap();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for j in 0..nu_l.len() {
        atoms.push(nu_l.atom1(j));
        weights.push(p * nu_l.weight(j));
    }
    for j in 0..nu_r.len() {
        atoms.push(nu_r.atom1(j));
        weights.push((1.0 - p) * nu_r.weight(j));
    }
    (mu, DiscreteMeasure::new_1d(atoms, weights).unwrap())
}

fn shifted_pair(rng: &mut ChaCha12Rng, center: f64) -> (DiscreteMeasure, DiscreteMeasure) {
    let (mu, nu) = random_pair(rng, 2);
    (
        mu.translate(&[center - mu.mean1()]).unwrap(),
        nu.translate(&[center - nu.mean1()]).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// Convex order and Wasserstein routes
// ---------------------------------------------------------------------------

#[test]
fn convex_order_routes_agree_on_random_pairs() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut in_order = 0;
    for k in 0..50 {
        let (mu, nu) = random_pair(&mut rng, 1 + k % 5);
        // ordered pair: both routes say yes
        assert!(measures::convex_order_1d(&mu, &nu).unwrap());
        assert!(measures::convex_order_lp(&mu, &nu).unwrap());
        in_order += 1;
        // reversed pair: both routes say no (unless mu = nu)
        if mu.len() > 1 || nu.len() > 1 {
            assert!(!measures::convex_order_1d(&nu, &mu).unwrap());
            assert!(!measures::convex_order_lp(&nu, &mu).unwrap());
        }
        // perturbed mean: out of order both ways
        let shifted = nu.translate(&[0.37]).unwrap();
        assert!(!measures::convex_order_1d(&mu, &shifted).unwrap());
        assert!(!measures::convex_order_lp(&mu, &shifted).unwrap());
    }
    assert_eq!(in_order, 50);
}

#[test]
fn convex_order_lp_barycenter_examples() {
    let corners = DiscreteMeasure::new(
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        vec![0.25; 4],
    )
    .unwrap();
    let center = DiscreteMeasure::new(vec![vec![0.5, 0.5]], vec![1.0]).unwrap();
    assert!(measures::convex_order_lp(&center, &corners).unwrap());
    assert!(!measures::convex_order_lp(&corners, &center).unwrap());
}

#[test]
fn simplex_backends_agree_on_random_transportation_instances() {
    // the dense revised simplex and the transportation simplex are
    // independent implementations; on pure transportation instances their
    // optima must coincide
    let mut rng = ChaCha12Rng::seed_from_u64(314);
    for _ in 0..10 {
        let n = rng.gen_range(2..7);
        let m = rng.gen_range(2..7);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let sa: f64 = a.iter().sum();
        let a: Vec<f64> = a.iter().map(|v| v / sa).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let sb: f64 = b.iter().sum();
        let b: Vec<f64> = b.iter().map(|v| v / sb).collect();
        let cost: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let net = sbm_core::transport::solve_dense(&a, &b, |i, j| cost[i * m + j]).unwrap();

        let mut lp = sbm_core::lp::LpProblem::new(n * m);
        for i in 0..n {
            lp.add_constraint((0..m).map(|j| (i * m + j, 1.0)).collect(), a[i]);
        }
        for j in 0..m {
            lp.add_constraint((0..n).map(|i| (i * m + j, 1.0)).collect(), b[j]);
        }
        lp.set_objective(cost.clone());
        let dense = sbm_core::lp::solve(&lp).unwrap();

        assert!(
            (net.objective - dense.objective).abs() <= 1e-9,
            "network {} vs dense {}",
            net.objective,
            dense.objective
        );
    }
}

#[test]
fn wasserstein_quantile_and_lp_routes_agree() {
    let mut rng = ChaCha12Rng::seed_from_u64(22);
    for _ in 0..12 {
        let n = rng.gen_range(2..50);
        let m = rng.gen_range(2..50);
        let a = DiscreteMeasure::new_1d(
            (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            (0..n).map(|_| rng.gen_range(0.05..1.0)).collect(),
        )
        .unwrap();
        let b = DiscreteMeasure::new_1d(
            (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            (0..m).map(|_| rng.gen_range(0.05..1.0)).collect(),
        )
        .unwrap();
        let q2 = measures::wasserstein2_1d(&a, &b).unwrap();
        let l2 = measures::wasserstein2_lp(&a, &b).unwrap();
        assert!((q2 - l2).abs() <= 1e-8, "W2 quantile {q2} vs lp {l2}");
        let q1 = measures::wasserstein1_1d(&a, &b).unwrap();
        let l1 = measures::wasserstein1_lp_with_cap(&a, &b, 400).unwrap();
        assert!((q1 - l1).abs() <= 1e-8, "W1 quantile {q1} vs lp {l1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convex_order_is_transitive(seed in 0u64..10_000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (mu, nu) = random_pair(&mut rng, 2);
        // split nu once more to get a third, larger measure
        let mut rho_atoms = Vec::new();
        let mut rho_weights = Vec::new();
        for j in 0..nu.len() {
            let (y, w) = (nu.atom1(j), nu.weight(j));
            let s = rng.gen_range(0.2..0.8);
            rho_atoms.extend_from_slice(&[y - s, y + s]);
            rho_weights.extend_from_slice(&[w / 2.0, w / 2.0]);
        }
        let rho = DiscreteMeasure::new_1d(rho_atoms, rho_weights).unwrap();
        prop_assert!(measures::convex_order_1d(&mu, &nu).unwrap());
        prop_assert!(measures::convex_order_1d(&nu, &rho).unwrap());
        prop_assert!(measures::convex_order_1d(&mu, &rho).unwrap());
    }

    #[test]
    fn quantile_is_generalized_inverse(seed in 0u64..10_000, u in 0.001f64..0.999) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..8);
        let m = DiscreteMeasure::new_1d(
            (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            (0..n).map(|_| rng.gen_range(0.1..1.0)).collect(),
        ).unwrap();
        let q = m.quantile(u).unwrap();
        // F(q) >= u and q is an atom
        let cdf_at = |x: f64| -> f64 {
            (0..m.len()).filter(|&i| m.atom1(i) <= x).map(|i| m.weight(i)).sum()
        };
        prop_assert!(cdf_at(q) >= u - 1e-12);
        prop_assert!(m.atoms1().contains(&q));
    }
}

// ---------------------------------------------------------------------------
// Solver routes
// ---------------------------------------------------------------------------

#[test]
fn direct_and_component_solves_agree() {
    let mut rng = ChaCha12Rng::seed_from_u64(33);
    let gap_tol = 1e-6;
    for k in 0..5 {
        let (mu, nu) = if k % 2 == 0 {
            random_pair(&mut rng, 3)
        } else {
            random_two_component_pair(&mut rng)
        };
        let direct = wot::solve_wot(
            &mu,
            &nu,
            &Oracle::Exact1d,
            &FwOptions { gap_tol_rel: gap_tol, max_iter: 4000, ..Default::default() },
        )
        .unwrap();
        let by_comp =
            wot::solve_wot_1d_by_components(&mu, &nu, &SolveOptions::default()).unwrap();
        assert!(
            (direct.value - by_comp.value).abs() <= 5.0 * gap_tol * (1.0 + by_comp.value.abs()),
            "direct {} vs components {}",
            direct.value,
            by_comp.value
        );
    }
}

#[test]
fn cross_validation_suite_of_twenty_random_pairs() {
    // uniqueness of the optimizer: the conditional-gradient route and the
    // fixed-point route agree in value and (row-wise) in kernel
    let mut rng = ChaCha12Rng::seed_from_u64(2020);
    for k in 0..20 {
        let (mu, nu) = if k % 7 == 3 {
            random_two_component_pair(&mut rng)
        } else {
            random_pair(&mut rng, 2 + k % 6)
        };
        let rep = sbm_core::verify::cross_validate(&mu, &nu, 1e-3, 5e-2).unwrap();
        assert!(rep.passed, "pair {k}: {}", rep.details);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn measure_file_formats_round_trip(seed in 0u64..100_000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..12);
        let m = DiscreteMeasure::new_1d(
            (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect(),
            (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect(),
        ).unwrap();
        let via_json = DiscreteMeasure::from_json_str(&m.to_json_string()).unwrap();
        prop_assert_eq!(&via_json, &m);
        let via_csv = DiscreteMeasure::from_csv_str(&m.to_csv_string()).unwrap();
        prop_assert_eq!(&via_csv, &m);
    }
}

#[test]
fn transportation_backend_handles_capped_sizes() {
    // the LP-route Wasserstein distances advertise a 400 x 400 support cap;
    // exercise a mid-size degenerate instance (equal masses, many ties)
    let n = 150;
    let atoms: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let a = DiscreteMeasure::new_1d(atoms.clone(), vec![1.0; n]).unwrap();
    let shifted: Vec<f64> = atoms.iter().map(|x| x + 0.25).collect();
    let b = DiscreteMeasure::new_1d(shifted, vec![1.0; n]).unwrap();
    let t0 = std::time::Instant::now();
    let lp = measures::wasserstein2_lp(&a, &b).unwrap();
    let quant = measures::wasserstein2_1d(&a, &b).unwrap();
    assert!((lp - quant).abs() <= 1e-8, "{lp} vs {quant}");
    assert!((lp - 0.25).abs() <= 1e-10);
    assert!(t0.elapsed().as_secs_f64() < 30.0);
    // above the cap: a structured error, not a hang
    let big = DiscreteMeasure::new_1d(
        (0..401).map(|i| i as f64).collect(),
        vec![1.0; 401],
    )
    .unwrap();
    assert!(matches!(
        measures::wasserstein2_lp(&big, &big),
        Err(sbm_core::Error::SupportTooLarge { .. })
    ));
}

#[test]
fn uniqueness_row_distance_shrinks_with_gap_tolerance() {
    let mut rng = ChaCha12Rng::seed_from_u64(44);
    let (mu, nu) = random_pair(&mut rng, 3);
    let row_dist = |gap_tol: f64| -> f64 {
        let opts = |seed| FwOptions {
            gap_tol_rel: gap_tol,
            max_iter: 30_000,
            init: wot::FwInit::RandomVertex(seed),
            ..Default::default()
        };
        let a = wot::solve_wot(&mu, &nu, &Oracle::Exact1d, &opts(10)).unwrap();
        let b = wot::solve_wot(&mu, &nu, &Oracle::Exact1d, &opts(20)).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..mu.len() {
            let ra = a.kernel.row_measure(i).unwrap();
            let rb = b.kernel.row_measure(i).unwrap();
            worst = worst.max(measures::wasserstein2_1d(&ra, &rb).unwrap());
        }
        worst
    };
    let coarse = row_dist(1e-4);
    let fine = row_dist(1e-6);
    assert!(
        fine <= coarse + 1e-9,
        "row distance did not shrink: {fine} at 1e-6 vs {coarse} at 1e-4"
    );
}

#[test]
fn two_dimensional_solve_with_discretized_oracle() {
    // single-row problem: the polytope is a point and the value is the
    // discretized max correlation of the corner measure
    let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
    let nu = DiscreteMeasure::new(
        vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
        vec![0.25; 4],
    )
    .unwrap();
    let g = gaussian_disc(2, 32, Scheme::QuantileGrid).unwrap();
    let sol = wot::solve_wot(&mu, &nu, &Oracle::Discretized(g), &FwOptions::default()).unwrap();
    assert!(
        (sol.value - 2.0 * SQRT_2_OVER_PI).abs() < 5e-3,
        "2d corner value {}",
        sol.value
    );
}

#[test]
fn two_dimensional_multi_row_solve() {
    // two far-apart starts, each with its own centered corner cloud: the
    // mean constraints force the local assignment, so the value is the
    // translation-invariant corner value
    let a = 10.0;
    let mu = DiscreteMeasure::new(vec![vec![-a, 0.0], vec![a, 0.0]], vec![0.5, 0.5]).unwrap();
    let mut pts = Vec::new();
    for &cx in &[-a, a] {
        for &(dx, dy) in &[(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            pts.push(vec![cx + dx, dy]);
        }
    }
    let nu = DiscreteMeasure::new(pts, vec![0.125; 8]).unwrap();
    let g = gaussian_disc(2, 24, Scheme::QuantileGrid).unwrap();
    let sol = wot::solve_wot(&mu, &nu, &Oracle::Discretized(g), &FwOptions::default()).unwrap();
    assert!(
        (sol.value - 2.0 * SQRT_2_OVER_PI).abs() < 1e-2,
        "forced local corners: value {}",
        sol.value
    );
    // no cross mass
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            if (mu.atom(i)[0] - nu.atom(j)[0]).abs() > 3.0 {
                assert!(sol.kernel.row(i)[j] <= 1e-9);
            }
        }
    }
}

#[test]
fn lipschitz_statistic_two_routes_agree() {
    let mut rng = ChaCha12Rng::seed_from_u64(55);
    let (mu, nu) = random_pair(&mut rng, 3);
    let sol = wot::solve_wot_1d_by_components(&mu, &nu, &SolveOptions::default()).unwrap();
    let k = &sol.kernel;
    for i in 0..k.mu().len() {
        for j in i + 1..k.mu().len() {
            let a = k.row_measure(i).unwrap();
            let b = k.row_measure(j).unwrap();
            let quantile_route = measures::wasserstein1_1d(&a, &b).unwrap();
            let lp_route = measures::wasserstein1_lp_with_cap(&a, &b, 400).unwrap();
            assert!((quantile_route - lp_route).abs() <= 1e-8);
        }
    }
}

#[test]
fn fixed_point_residual_improves_on_first_iterate() {
    let mut rng = ChaCha12Rng::seed_from_u64(66);
    for _ in 0..5 {
        let (mu, nu) = random_pair(&mut rng, 4);
        let one = bass::bass_fixed_point(&mu, &nu, &BassOptions { tol_rel: 0.0, max_iter: 1 })
            .unwrap();
        let full = bass::bass_fixed_point(&mu, &nu, &BassOptions::default()).unwrap();
        assert!(full.converged);
        assert!(full.residual < one.residual, "{} !< {}", full.residual, one.residual);
    }
}

// ---------------------------------------------------------------------------
// Ensemble statistics
// ---------------------------------------------------------------------------

fn fitted(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> SbmModel {
    SbmModel::fit(mu, nu, &BassOptions::default()).unwrap()
}

#[test]
fn ensemble_martingale_increments_vanish_in_bins() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let (mu, nu) = random_pair(&mut rng, 3);
    let model = fitted(&mu, &nu);
    let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let n = 100_000usize;
    let ens = dynamics::simulate(&model, &times, n, 7701).unwrap();
    let n_bins = 20;
    for k in 0..times.len() - 1 {
        // quantile bins of M_s, conditional mean of the increment per bin
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|p| (ens.path(p)[k], ens.path(p)[k + 1] - ens.path(p)[k])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for bin in pairs.chunks(n / n_bins) {
            if bin.len() < 100 {
                continue;
            }
            let mean: f64 = bin.iter().map(|p| p.1).sum::<f64>() / bin.len() as f64;
            let var: f64 = bin.iter().map(|p| (p.1 - mean) * (p.1 - mean)).sum::<f64>()
                / bin.len() as f64;
            let stderr = (var / bin.len() as f64).sqrt();
            // 80 bins are tested: allow 4 sigma so a single ~1-in-3000 bin
            // fluctuation does not trip the suite
            assert!(
                mean.abs() <= 4.0 * stderr + 1e-4,
                "bin mean increment {mean} vs 4 stderr {}",
                4.0 * stderr
            );
        }
    }
}

#[test]
fn ensemble_marginals_match_interpolation() {
    let mu = DiscreteMeasure::gaussian_quantile(0.0, 0.25, 80).unwrap();
    let nu = DiscreteMeasure::gaussian_quantile(0.0, 1.25, 200).unwrap();
    let model = fitted(&mu, &nu);
    let times = vec![0.0, 0.5, 1.0];
    let n = 100_000usize;
    let ens = dynamics::simulate(&model, &times, n, 7702).unwrap();
    let curve =
        dynamics::interpolate(&model, &times, &InterpMethod::Quadrature { order: 64 }).unwrap();
    for k in 0..times.len() {
        let emp = ens.marginal(k).unwrap();
        // W1 of an empirical law converges at 1/sqrt(N); the squared W2
        // against an atomic reference only at the same root-N rate
        let d1 = measures::wasserstein1_1d(&emp, &curve.measures[k]).unwrap();
        let tol1 = 20.0 / (n as f64).sqrt() + 5e-3;
        assert!(d1 <= tol1, "t = {}: W1 {d1} > {tol1}", times[k]);
        let d2 = measures::wasserstein2_1d(&emp, &curve.measures[k]).unwrap();
        let tol2sq = 40.0 / (n as f64).sqrt() + 5e-3;
        assert!(d2 * d2 <= tol2sq, "t = {}: W2^2 {} > {tol2sq}", times[k], d2 * d2);
    }
    // gaussian-to-gaussian: the interpolated marginal is close to N(0, 1/4 + t)
    for (k, &t) in times.iter().enumerate() {
        let d = measures::wasserstein2_to_normal(&curve.measures[k], 0.0, 0.25 + t).unwrap();
        assert!(d <= 5e-2, "t = {t}: W2 to N(0, {}) = {d}", 0.25 + t);
    }
}

#[test]
fn interpolation_curve_stays_in_convex_order() {
    let mut rng = ChaCha12Rng::seed_from_u64(88);
    let (mu, nu) = random_pair(&mut rng, 3);
    let model = fitted(&mu, &nu);
    let times: Vec<f64> = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let curve =
        dynamics::interpolate(&model, &times, &InterpMethod::Quadrature { order: 48 }).unwrap();
    for w in curve.measures.windows(2) {
        assert!(measures::convex_order_1d_tol(&w[0], &w[1], 1e-6).unwrap());
    }
    // mean constant, second moment nondecreasing along the curve
    for w in curve.measures.windows(2) {
        assert!((w[0].mean1() - w[1].mean1()).abs() <= 1e-8);
        assert!(w[1].second_moment() >= w[0].second_moment() - 1e-8);
    }
}

#[test]
fn markov_property_in_binned_conditionals() {
    // single-component model: the conditional law of M_1 given M_{1/2} in a
    // bin must not depend on which start cell the path came from
    let mu = DiscreteMeasure::new_1d(vec![-0.5, 0.5], vec![0.5, 0.5]).unwrap();
    let nu = DiscreteMeasure::new_1d(
        vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        vec![0.15, 0.2, 0.3, 0.2, 0.15],
    )
    .unwrap();
    assert!(measures::convex_order_1d(&mu, &nu).unwrap());
    let model = fitted(&mu, &nu);
    assert_eq!(model.components().len(), 1);
    let times = vec![0.0, 0.5, 1.0];
    let n = 200_000usize;
    let ens = dynamics::simulate(&model, &times, n, 8801).unwrap();
    // bin M_{1/2} by quantiles, split by start cell, compare terminal laws
    let mut trips: Vec<(f64, f64, f64)> =
        (0..n).map(|p| (ens.path(p)[1], ens.path(p)[0], ens.path(p)[2])).collect();
    trips.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_bins = 12;
    for bin in trips.chunks(n / n_bins) {
        let cell_a: Vec<f64> =
            bin.iter().filter(|t| t.1 < 0.0).map(|t| t.2).collect();
        let cell_b: Vec<f64> =
            bin.iter().filter(|t| t.1 >= 0.0).map(|t| t.2).collect();
        if cell_a.len() < 500 || cell_b.len() < 500 {
            continue;
        }
        let ma = DiscreteMeasure::new_1d(cell_a.clone(), vec![1.0; cell_a.len()]).unwrap();
        let mb = DiscreteMeasure::new_1d(cell_b.clone(), vec![1.0; cell_b.len()]).unwrap();
        let w1 = measures::wasserstein1_1d(&ma, &mb).unwrap();
        let sd = |v: &[f64]| -> f64 {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let stderr = sd(&cell_a) / (cell_a.len() as f64).sqrt()
            + sd(&cell_b) / (cell_b.len() as f64).sqrt();
        assert!(
            w1 <= 3.0 * stderr.max(1e-3) + 2e-2,
            "bin W1 {w1} vs stderr {stderr}"
        );
    }
}

#[test]
fn gaussian_peacock_chain_behaves_like_brownian_motion() {
    // marginals N(0, eps + t): the chained model is Brownian-like, so the
    // per-interval quadratic variation matches the interval length and the
    // terminal marginals match the peacock
    let eps = 0.05;
    let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let peacock: Vec<(f64, DiscreteMeasure)> = grid
        .iter()
        .map(|&t| (t, DiscreteMeasure::gaussian_quantile(0.0, eps + t, 40).unwrap()))
        .collect();
    let times: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
    let n = 30_000usize;
    let (pieces, ens) =
        dynamics::localvol_chain(&peacock, 4, &times, n, 9901, &BassOptions::default()).unwrap();
    assert_eq!(pieces.len(), 4);
    // quadratic variation per chained piece
    for (ta, tb, _) in &pieces {
        let (ka, kb) = (
            times.iter().position(|t| t == ta).unwrap(),
            times.iter().position(|t| t == tb).unwrap(),
        );
        let mut qv_mean = 0.0;
        for p in 0..n {
            let path = ens.path(p);
            let qv: f64 = (ka..kb).map(|k| (path[k + 1] - path[k]).powi(2)).sum();
            qv_mean += qv;
        }
        qv_mean /= n as f64;
        let expected = tb - ta;
        assert!(
            (qv_mean - expected).abs() <= 0.15 * expected,
            "QV on [{ta},{tb}]: {qv_mean} vs {expected}"
        );
    }
    // marginals at the peacock grid
    for (k, &t) in times.iter().enumerate() {
        if let Some((_, target)) = peacock.iter().find(|(tp, _)| tp == &t) {
            let emp = ens.marginal(k).unwrap();
            let d = measures::wasserstein2_1d(&emp, target).unwrap();
            assert!(d <= 5e-2, "t = {t}: W2 {d}");
        }
    }
}

#[test]
fn ensemble_start_law_matches_mu() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let (mu, nu) = random_pair(&mut rng, 4);
    let model = fitted(&mu, &nu);
    let n = 50_000usize;
    let ens = dynamics::simulate(&model, &[0.0, 1.0], n, 9902).unwrap();
    let emp = ens.marginal(0).unwrap();
    // against an atomic law the empirical W2 converges at N^{-1/4}
    // (squared at root-N), W1 at root-N
    let d1 = measures::wasserstein1_1d(&emp, &mu).unwrap();
    assert!(d1 <= 20.0 / (n as f64).sqrt(), "W1 at t=0: {d1}");
    let d2 = measures::wasserstein2_1d(&emp, &mu).unwrap();
    assert!(d2 * d2 <= 40.0 / (n as f64).sqrt(), "W2^2 at t=0: {}", d2 * d2);
    // path values stay inside the support hull of nu
    let (lo, hi) = (nu.atoms1()[0], nu.atoms1()[nu.len() - 1]);
    for p in 0..n {
        for &v in ens.path(p) {
            assert!((lo..=hi).contains(&v));
        }
    }
}

#[test]
fn planar_evaluation_model_paths() {
    // delta at the barycenter to the four corners: paths start at the
    // origin, stay martingale-centered, and end near the corner set
    let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
    let nu = DiscreteMeasure::new(
        vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
        vec![0.25; 4],
    )
    .unwrap();
    let g = gaussian_disc(2, 24, Scheme::QuantileGrid).unwrap();
    let sol = wot::solve_wot(&mu, &nu, &Oracle::Discretized(g.clone()), &FwOptions::default())
        .unwrap();
    let model = bass::Bass2d::from_kernel(&sol.kernel, g).unwrap();
    let times = vec![0.0, 0.5, 1.0];
    let n = 4000usize;
    let ens = dynamics::simulate_2d(&model, &times, n, 31).unwrap();
    // reproducible
    let again = dynamics::simulate_2d(&model, &times, n, 31).unwrap();
    assert_eq!(ens.point(17, 2), again.point(17, 2));
    let mut mean_mid = [0.0f64; 2];
    let mut corner_mass = 0usize;
    for p in 0..n {
        let m = ens.point(p, 1);
        mean_mid[0] += m[0];
        mean_mid[1] += m[1];
        let e = ens.point(p, 2);
        // terminal points concentrate near the corners
        if (e[0].abs() - 1.0).abs() < 0.2 && (e[1].abs() - 1.0).abs() < 0.2 {
            corner_mass += 1;
        }
    }
    mean_mid[0] /= n as f64;
    mean_mid[1] /= n as f64;
    assert!(mean_mid[0].abs() < 3.0 / (n as f64).sqrt() + 1e-2);
    assert!(mean_mid[1].abs() < 3.0 / (n as f64).sqrt() + 1e-2);
    assert!(corner_mass as f64 / n as f64 > 0.9, "{corner_mass}/{n} near corners");
}

#[test]
fn maxcorr_disc_concavity_on_random_mixtures() {
    let g = gaussian_disc(1, 48, Scheme::QuantileGrid).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(123);
    let atoms = vec![-2.0, -0.7, 0.4, 1.8];
    for _ in 0..10 {
        let w1: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let w2: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let lam: f64 = rng.gen_range(0.1..0.9);
        let m1 = DiscreteMeasure::new_1d(atoms.clone(), w1).unwrap();
        let m2 = DiscreteMeasure::new_1d(atoms.clone(), w2).unwrap();
        let mix: Vec<f64> =
            (0..4).map(|i| lam * m1.weight(i) + (1.0 - lam) * m2.weight(i)).collect();
        let mm = DiscreteMeasure::new_1d(atoms.clone(), mix).unwrap();
        let h1 = maxcorr::maxcorr_disc(&m1, &g).unwrap().value;
        let h2 = maxcorr::maxcorr_disc(&m2, &g).unwrap().value;
        let hm = maxcorr::maxcorr_disc(&mm, &g).unwrap().value;
        assert!(hm >= lam * h1 + (1.0 - lam) * h2 - 1e-9);
    }
}

//! Irreducible-component decomposition of a convex-order pair on the line.
//!
//! The components are the maximal open intervals of `{ u_mu < u_nu }`. Both
//! potentials are piecewise linear with kinks at atoms, so the boundary of
//! that set lies in the union of the atom sets: scan the potential gap at
//! the kinks and group maximal runs where it exceeds the strictness
//! threshold. Mass never crosses a component boundary under any martingale
//! coupling of the pair, which is what [`glue`] exploits: a global kernel
//! is the identity on the untouched part `eta` and an arbitrary
//! per-component kernel inside each interval.
//!
//! Boundary bookkeeping: `mu_k` is the restriction of `mu` to the open
//! interval; `nu_k` additionally receives boundary mass at the interval
//! endpoints, fixed uniquely by matching the component's mass and mean
//! (a 2x2 linear system per component).

use crate::measures::{convex_order_1d_tol, potential, DiscreteMeasure};
use crate::wot::MartingaleKernel;
use crate::{Error, Result};
use serde::Serialize;

/// Strictness threshold for `u_mu < u_nu`: gaps at or below are contact
/// points and split components.
pub const DECOMPOSE_TOL: f64 = 1e-9;

/// One irreducible component of a convex-order pair.
#[derive(Debug, Clone)]
pub struct Component {
    /// Open interval `(l, r)`; endpoints are atoms of `mu` or `nu`.
    pub interval: (f64, f64),
    /// Restriction of `mu` to the open interval, renormalized.
    pub mu_k: DiscreteMeasure,
    /// Matched `nu` mass on the closed interval, renormalized.
    pub nu_k: DiscreteMeasure,
    /// Probability mass carried by the component.
    pub mass: f64,
}

/// Full decomposition: components plus the common static part `eta`
/// (a sub-probability measure, possibly of zero mass).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: Vec<Component>,
    pub eta_atoms: Vec<f64>,
    pub eta_weights: Vec<f64>,
}

impl Decomposition {
    pub fn eta_mass(&self) -> f64 {
        self.eta_weights.iter().sum()
    }

    /// The static part as a normalized measure, when it carries mass.
    pub fn eta_measure(&self) -> Option<DiscreteMeasure> {
        if self.eta_atoms.is_empty() {
            None
        } else {
            DiscreteMeasure::new_1d(self.eta_atoms.clone(), self.eta_weights.clone()).ok()
        }
    }

    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct CompJson {
            interval: (f64, f64),
            mass: f64,
            mu_atoms: Vec<f64>,
            mu_weights: Vec<f64>,
            nu_atoms: Vec<f64>,
            nu_weights: Vec<f64>,
        }
        #[derive(Serialize)]
        struct DecJson {
            components: Vec<CompJson>,
            eta_atoms: Vec<f64>,
            eta_weights: Vec<f64>,
        }
        let dec = DecJson {
            components: self
                .components
                .iter()
                .map(|c| CompJson {
                    interval: c.interval,
                    mass: c.mass,
                    mu_atoms: c.mu_k.atoms1().to_vec(),
                    mu_weights: c.mu_k.weights().to_vec(),
                    nu_atoms: c.nu_k.atoms1().to_vec(),
                    nu_weights: c.nu_k.weights().to_vec(),
                })
                .collect(),
            eta_atoms: self.eta_atoms.clone(),
            eta_weights: self.eta_weights.clone(),
        };
        crate::report::to_json_string(&dec)
    }
}

/// Decompose a convex-order pair into irreducible components.
pub fn decompose(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Decomposition> {
    decompose_with_tol(mu, nu, DECOMPOSE_TOL)
}

pub fn decompose_with_tol(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tol: f64,
) -> Result<Decomposition> {
    if !convex_order_1d_tol(mu, nu, tol.max(crate::measures::CONVEX_ORDER_TOL))? {
        return Err(Error::NotInConvexOrder("decompose requires mu ⪯_c nu".into()));
    }
    let u_mu = potential(mu)?;
    let u_nu = potential(nu)?;

    let mut kinks: Vec<f64> = mu.atoms1().iter().chain(nu.atoms1().iter()).copied().collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let gap: Vec<f64> = kinks.iter().map(|&x| u_nu.eval(x) - u_mu.eval(x)).collect();

    // maximal runs of strictly positive gap; flanking zero-gap kinks are the
    // open-interval endpoints (the gap vanishes identically outside the
    // support hull, so runs are always bracketed)
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < kinks.len() {
        if gap[i] > tol {
            let mut j = i;
            while j < kinks.len() && gap[j] > tol {
                j += 1;
            }
            let l = if i == 0 { f64::NEG_INFINITY } else { kinks[i - 1] };
            let r = if j == kinks.len() { f64::INFINITY } else { kinks[j] };
            intervals.push((l, r));
            i = j;
        } else {
            i += 1;
        }
    }

    let mut components = Vec::new();
    for (l, r) in intervals {
        if !l.is_finite() || !r.is_finite() {
            // equal means force a zero gap outside the hull; reaching this
            // means the inputs were out of order beyond the tolerance
            return Err(Error::NotInConvexOrder("unbounded potential-gap interval".into()));
        }
        let mu_idx: Vec<usize> =
            (0..mu.len()).filter(|&i| mu.atom1(i) > l && mu.atom1(i) < r).collect();
        if mu_idx.is_empty() {
            return Err(Error::NotInConvexOrder(format!(
                "potential gap on ({l}, {r}) with no mu atoms inside"
            )));
        }
        let mass: f64 = mu_idx.iter().map(|&i| mu.weight(i)).sum();
        let mu_mean: f64 = mu_idx.iter().map(|&i| mu.weight(i) * mu.atom1(i)).sum();

        let nu_idx: Vec<usize> =
            (0..nu.len()).filter(|&j| nu.atom1(j) > l && nu.atom1(j) < r).collect();
        let nu_mass: f64 = nu_idx.iter().map(|&j| nu.weight(j)).sum();
        let nu_mean: f64 = nu_idx.iter().map(|&j| nu.weight(j) * nu.atom1(j)).sum();

        // boundary masses from mass and mean matching:
        //   s_l + s_r = mass - nu_mass,  l s_l + r s_r = mu_mean - nu_mean
        let dm = mass - nu_mass;
        let dmean = mu_mean - nu_mean;
        let mut s_l = (r * dm - dmean) / (r - l);
        let mut s_r = dm - s_l;
        let slack = 1e-9 * (1.0 + mass);
        if s_l < -slack || s_r < -slack {
            return Err(Error::NotInConvexOrder(format!(
                "negative boundary mass on ({l}, {r}): {s_l}, {s_r}"
            )));
        }
        s_l = s_l.max(0.0);
        s_r = s_r.max(0.0);

        let mut nu_atoms: Vec<f64> = nu_idx.iter().map(|&j| nu.atom1(j)).collect();
        let mut nu_weights: Vec<f64> = nu_idx.iter().map(|&j| nu.weight(j)).collect();
        if s_l > 0.0 {
            nu_atoms.push(l);
            nu_weights.push(s_l);
        }
        if s_r > 0.0 {
            nu_atoms.push(r);
            nu_weights.push(s_r);
        }

        components.push(Component {
            interval: (l, r),
            mu_k: DiscreteMeasure::new_1d(
                mu_idx.iter().map(|&i| mu.atom1(i)).collect(),
                mu_idx.iter().map(|&i| mu.weight(i)).collect(),
            )?,
            nu_k: DiscreteMeasure::new_1d(nu_atoms, nu_weights)?,
            mass,
        });
    }

    let mut eta_atoms = Vec::new();
    let mut eta_weights = Vec::new();
    for i in 0..mu.len() {
        let x = mu.atom1(i);
        let inside = components.iter().any(|c| x > c.interval.0 && x < c.interval.1);
        if !inside {
            eta_atoms.push(x);
            eta_weights.push(mu.weight(i));
        }
    }

    Ok(Decomposition { components, eta_atoms, eta_weights })
}

/// Glue per-component kernels and the identity on `eta` into one global
/// martingale kernel from `mu` to `nu`.
pub fn glue(dec: &Decomposition, kernels: &[MartingaleKernel]) -> Result<MartingaleKernel> {
    if kernels.len() != dec.components.len() {
        return Err(Error::ComponentMismatch(format!(
            "{} kernels for {} components",
            kernels.len(),
            dec.components.len()
        )));
    }
    for (c, k) in dec.components.iter().zip(kernels) {
        if k.mu().len() != c.mu_k.len() || k.nu().len() != c.nu_k.len() {
            return Err(Error::ComponentMismatch(
                "kernel marginal sizes do not match the component".into(),
            ));
        }
    }

    // reconstruct the global marginals
    let mut mu_atoms = dec.eta_atoms.clone();
    let mut mu_weights = dec.eta_weights.clone();
    let mut nu_atoms = dec.eta_atoms.clone();
    let mut nu_weights = dec.eta_weights.clone();
    for c in &dec.components {
        for i in 0..c.mu_k.len() {
            mu_atoms.push(c.mu_k.atom1(i));
            mu_weights.push(c.mass * c.mu_k.weight(i));
        }
        for j in 0..c.nu_k.len() {
            nu_atoms.push(c.nu_k.atom1(j));
            nu_weights.push(c.mass * c.nu_k.weight(j));
        }
    }
    let mu = DiscreteMeasure::new_1d(mu_atoms, mu_weights)?;
    let nu = DiscreteMeasure::new_1d(nu_atoms, nu_weights)?;

    let find = |m: &DiscreteMeasure, x: f64| -> Result<usize> {
        m.atoms1()
            .binary_search_by(|a| a.total_cmp(&x))
            .map_err(|_| Error::ComponentMismatch(format!("atom {x} missing in glued marginal")))
    };

    let (n, mcols) = (mu.len(), nu.len());
    let mut pi = vec![0.0; n * mcols];
    for &x in &dec.eta_atoms {
        let i = find(&mu, x)?;
        let j = find(&nu, x)?;
        pi[i * mcols + j] = 1.0;
    }
    for (c, k) in dec.components.iter().zip(kernels) {
        for r in 0..c.mu_k.len() {
            let i = find(&mu, c.mu_k.atom1(r))?;
            for s in 0..c.nu_k.len() {
                let j = find(&nu, c.nu_k.atom1(s))?;
                pi[i * mcols + j] += k.row(r)[s];
            }
        }
    }
    // validation tolerances inherit the measured defects of the inputs:
    // gluing mixes them mass-weighted, never amplifies them
    let mut tols = crate::wot::KernelTols::default();
    for k in kernels {
        let (rs, mean, marg) = k.defects();
        tols.row_sum = tols.row_sum.max(2.0 * rs + 1e-12);
        tols.mean = tols.mean.max(2.0 * mean + 1e-12);
        tols.marginal = tols.marginal.max(2.0 * marg + 1e-12);
    }
    MartingaleKernel::new_with_tols(mu, nu, pi, tols)
}

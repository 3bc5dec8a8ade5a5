//! Certificates: structural properties of solver outputs turned into
//! machine-checkable pass/fail reports. Certificates never panic on a
//! negative verdict; they return `passed = false` with diagnostics so a
//! suite can aggregate.

use crate::measures::{self, DiscreteMeasure};
use crate::wot::{ComponentMethod, MartingaleKernel, SolveOptions};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One certificate: `passed` if and only if `statistic <= threshold`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateReport {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub seed: Option<u64>,
    pub details: String,
}

impl CertificateReport {
    pub fn new(
        name: &str,
        statistic: f64,
        threshold: f64,
        seed: Option<u64>,
        details: String,
    ) -> Self {
        CertificateReport {
            name: name.to_string(),
            passed: statistic <= threshold,
            statistic,
            threshold,
            seed,
            details,
        }
    }

    pub fn to_json_string(&self) -> String {
        crate::report::to_json_string(self)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("certificate json: {e}")))
    }
}

/// Transition-kernel Lipschitz certificate:
/// `statistic = max_{x != x'} ( W_1(pi_x, pi_{x'}) - |x - x'| )`.
///
/// The exact optimizer satisfies `statistic <= 0`; a discretized one may
/// exceed it by a small slack, which the caller supplies.
pub fn check_lipschitz_kernel(kernel: &MartingaleKernel, slack: f64) -> Result<CertificateReport> {
    if kernel.mu().dim() != 1 {
        return Err(Error::NotOneDimensional(kernel.mu().dim()));
    }
    let n = kernel.mu().len();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = (0usize, 0usize);
    let rows: Vec<DiscreteMeasure> =
        (0..n).map(|i| kernel.row_measure(i)).collect::<Result<_>>()?;
    for i in 0..n {
        for j in i + 1..n {
            let w1 = measures::wasserstein1_1d(&rows[i], &rows[j])?;
            let gap = w1 - (kernel.mu().atom1(i) - kernel.mu().atom1(j)).abs();
            if gap > worst {
                worst = gap;
                worst_pair = (i, j);
            }
        }
    }
    if n < 2 {
        worst = 0.0;
    }
    Ok(CertificateReport::new(
        "lipschitz",
        worst,
        1e-6 + slack,
        None,
        format!("worst pair: rows {} and {}", worst_pair.0, worst_pair.1),
    ))
}

/// Martingale-property certificate:
/// `statistic = max_x |Σ_y pi_x(y) y - x|` (Euclidean norm in d >= 2),
/// threshold `1e-8 * (1 + max |atom|)`.
pub fn check_martingale_kernel(kernel: &MartingaleKernel) -> CertificateReport {
    let (n, m, d) = (kernel.mu().len(), kernel.nu().len(), kernel.mu().dim());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row = kernel.row(i);
        let mut defect = 0.0;
        for k in 0..d {
            let mean: f64 = (0..m).map(|j| row[j] * kernel.nu().atom(j)[k]).sum();
            defect += (mean - kernel.mu().atom(i)[k]).powi(2);
        }
        worst = worst.max(defect.sqrt());
    }
    let mut scale: f64 = 1.0;
    for j in 0..m {
        for c in kernel.nu().atom(j) {
            scale = scale.max(c.abs());
        }
    }
    CertificateReport::new("martingale", worst, 1e-8 * scale, None, format!("{n} rows checked"))
}

/// Cross-validate the two solution routes per irreducible component:
/// conditional-gradient versus the fixed-point construction. The statistic
/// is normalized so the report passes iff both the relative value gap stays
/// below `value_tol` and the worst row-wise `W_2` distance between the two
/// kernels stays below `kernel_tol`.
pub fn cross_validate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    value_tol: f64,
    kernel_tol: f64,
) -> Result<CertificateReport> {
    let fw_opts = SolveOptions {
        method: ComponentMethod::FrankWolfe,
        fw: crate::wot::FwOptions { max_iter: 1000, ..Default::default() },
        ..Default::default()
    };
    let bass_opts = SolveOptions { method: ComponentMethod::Bass, ..Default::default() };
    let fw = crate::wot::solve_wot_1d_by_components(mu, nu, &fw_opts)
        .map_err(|e| Error::Solver(format!("frank-wolfe route failed: {e}")))?;
    let bass = crate::wot::solve_wot_1d_by_components(mu, nu, &bass_opts)
        .map_err(|e| Error::Solver(format!("fixed-point route failed: {e}")))?;
    let value_gap = (fw.value - bass.value).abs() / (1.0 + fw.value.abs());
    let mut row_gap: f64 = 0.0;
    for i in 0..fw.kernel.mu().len() {
        let a = fw.kernel.row_measure(i)?;
        let b = bass.kernel.row_measure(i)?;
        row_gap = row_gap.max(measures::wasserstein2_1d(&a, &b)?);
    }
    let statistic = (value_gap / value_tol).max(row_gap / kernel_tol);
    Ok(CertificateReport::new(
        "crossval",
        statistic,
        1.0,
        None,
        format!(
            "value gap {value_gap:.3e} (tol {value_tol:.1e}), max row W2 {row_gap:.3e} (tol {kernel_tol:.1e})"
        ),
    ))
}

//! Command-line front end for the stretched-Brownian-motion toolkit.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 mathematical negative
//! verdict (e.g. not in convex order), 3 certificate failure.
//!
//! Every JSON output embeds the resolved configuration of the run; floats
//! print with 17 significant digits and keys in fixed order, so identical
//! configurations and seeds produce byte-identical files.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbm_core::bass::{BassOptions, SbmModel};
use sbm_core::dynamics::{self, DynamicsOptions, InterpMethod};
use sbm_core::measures::{self, DiscreteMeasure};
use sbm_core::report::to_json_string;
use sbm_core::verify;
use sbm_core::wot::{self, ComponentMethod, SolveOptions};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sbm",
    about = "Stretched Brownian motion between discrete marginals: solve the static weak transport problem, construct the associated martingale, simulate paths, and check structural properties",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether mu precedes nu in convex order.
    CheckOrder(CheckOrderArgs),
    /// Solve the static problem and emit value, kernel, and fitted model.
    Solve(SolveArgs),
    /// Simulate martingale trajectories of the fitted model.
    Simulate(SimulateArgs),
    /// Emit the displacement interpolation marginals on a time grid.
    Interpolate(InterpolateArgs),
    /// Chain piecewise models through a peacock of marginals.
    Localvol(LocalvolArgs),
    /// Run certificate suites against a solved instance.
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
struct IoArgs {
    /// Output directory; when absent, the primary JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output flavor for tabular artifacts.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct CheckOrderArgs {
    /// Earlier marginal (.json or .csv).
    #[arg(long)]
    mu: PathBuf,
    /// Later marginal (.json or .csv).
    #[arg(long)]
    nu: PathBuf,
    /// Use the exact feasibility LP instead of the 1-d potential test
    /// (required for dim >= 2, optional cross-check in dim 1).
    #[arg(long)]
    lp: bool,
    /// Tolerance of the 1-d potential comparison.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Method {
    Fw,
    Bass,
    Auto,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// fw = conditional gradients, bass = fixed point, auto = fixed point
    /// plus a conditional-gradient polish.
    #[arg(long, value_enum, default_value = "auto")]
    method: Method,
    /// Relative duality-gap tolerance of the conditional-gradient solver.
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    /// Iteration cap of the conditional-gradient solver.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Relative fixed-point residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    bass_tol: f64,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Fit from marginal files (alternative to --model).
    #[arg(long, required_unless_present = "model", conflicts_with = "model", requires = "nu")]
    mu: Option<PathBuf>,
    #[arg(long)]
    nu: Option<PathBuf>,
    /// Previously fitted model JSON (from `solve --out`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Time grid start:end:points, e.g. 0:1:64.
    #[arg(long, default_value = "0:1:64")]
    grid: String,
    /// Number of paths.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum CurveMethod {
    Quadrature,
    Montecarlo,
}

#[derive(Args, Serialize)]
struct InterpolateArgs {
    #[arg(long, required_unless_present = "model", conflicts_with = "model", requires = "nu")]
    mu: Option<PathBuf>,
    #[arg(long)]
    nu: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "0:1:9")]
    grid: String,
    #[arg(long, value_enum, default_value = "quadrature")]
    method: CurveMethod,
    /// Gauss-Hermite order of the quadrature method.
    #[arg(long, default_value_t = 64)]
    quad_order: usize,
    /// Paths for the Monte Carlo method.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Serialize)]
struct LocalvolArgs {
    /// Peacock file: JSON array of {"t": .., "measure": {..}} entries with
    /// marginals increasing in convex order.
    #[arg(long)]
    peacock: PathBuf,
    /// Number of chained pieces (must divide the peacock intervals).
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Output grid start:end:points inside the peacock span.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Comma-separated subset of
    /// lipschitz,martingale,monotonicity,scaling,consistency,crossval.
    #[arg(long, default_value = "lipschitz,martingale,monotonicity,scaling,consistency,crossval")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pairs sampled by the monotonicity certificate.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Slack added to the Lipschitz threshold for discretized optimizers.
    #[arg(long, default_value_t = 1e-3)]
    lipschitz_slack: f64,
    #[command(flatten)]
    io: IoArgs,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MBB_THREADS") {
        if let Ok(k) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::CheckOrder(a) => cmd_check_order(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Interpolate(a) => cmd_interpolate(&a),
        Command::Localvol(a) => cmd_localvol(&a),
        Command::Verify(a) => cmd_verify(&a),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CmdResult = anyhow::Result<ExitCode>;

fn load_measure(path: &Path) -> anyhow::Result<DiscreteMeasure> {
    DiscreteMeasure::from_path(path)
        .map_err(|e| anyhow::anyhow!("failed to load measure {}: {e}", path.display()))
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        anyhow::bail!("grid must be start:end:points, got {spec}");
    }
    let start: f64 = parts[0].parse()?;
    let end: f64 = parts[1].parse()?;
    let n: usize = parts[2].parse()?;
    if n < 2 || end <= start {
        anyhow::bail!("grid needs end > start and at least 2 points");
    }
    Ok((0..n).map(|k| start + (end - start) * k as f64 / (n - 1) as f64).collect())
}

fn emit(io: &IoArgs, primary_name: &str, primary_json: &str) -> anyhow::Result<()> {
    match &io.out {
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            // tolerate closed pipes (e.g. `sbm ... | head`)
            match writeln!(stdout, "{primary_json}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(primary_name), primary_json)?;
        }
    }
    Ok(())
}

fn write_extra(io: &IoArgs, name: &str, content: &str) -> anyhow::Result<()> {
    if let Some(dir) = &io.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn cmd_check_order(a: &CheckOrderArgs) -> CmdResult {
    let mu = load_measure(&a.mu)?;
    let nu = load_measure(&a.nu)?;
    let (in_order, method) = if a.lp || mu.dim() > 1 {
        (measures::convex_order_lp(&mu, &nu)?, "feasibility-lp")
    } else {
        (measures::convex_order_1d_tol(&mu, &nu, a.tol)?, "potential-functions")
    };
    #[derive(Serialize)]
    struct Verdict<'c> {
        config: &'c CheckOrderArgs,
        in_order: bool,
        method: &'static str,
        mu_mean: Vec<f64>,
        nu_mean: Vec<f64>,
    }
    let out = to_json_string(&Verdict {
        config: a,
        in_order,
        method,
        mu_mean: mu.mean(),
        nu_mean: nu.mean(),
    });
    emit(&a.io, "verdict.json", &out)?;
    Ok(ExitCode::from(if in_order { 0 } else { 2 }))
}

fn solve_options(a: &SolveArgs) -> SolveOptions {
    SolveOptions {
        method: match a.method {
            Method::Fw => ComponentMethod::FrankWolfe,
            Method::Bass => ComponentMethod::Bass,
            Method::Auto => ComponentMethod::Auto,
        },
        fw: wot::FwOptions {
            gap_tol_rel: a.gap_tol,
            max_iter: a.max_iter,
            ..Default::default()
        },
        bass: BassOptions { tol_rel: a.bass_tol, ..Default::default() },
    }
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let mu = load_measure(&a.mu)?;
    let nu = load_measure(&a.nu)?;
    let opts = solve_options(a);
    let sol = match wot::solve_wot_1d_by_components(&mu, &nu, &opts) {
        Ok(s) => s,
        Err(sbm_core::Error::NotInConvexOrder(msg)) => {
            eprintln!("error: marginals violate the convex-order precondition: {msg}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    #[derive(Serialize)]
    struct SolveOut<'c> {
        config: &'c SolveArgs,
        value: f64,
        minimization_value: f64,
        gap: f64,
        iterations: usize,
        converged: bool,
        kernel_triplets: Vec<(usize, usize, f64)>,
        mu_atoms: Vec<f64>,
        nu_atoms: Vec<f64>,
        trace: Vec<f64>,
    }
    let out = to_json_string(&SolveOut {
        config: a,
        value: sol.value,
        minimization_value: wot::wt_to_weak_gozlan(sol.value, &nu),
        gap: sol.gap,
        iterations: sol.iterations,
        converged: sol.converged,
        kernel_triplets: sol.kernel.triplets(),
        mu_atoms: sol.kernel.mu().atoms1().to_vec(),
        nu_atoms: sol.kernel.nu().atoms1().to_vec(),
        trace: sol.trace.clone(),
    });
    emit(&a.io, "solution.json", &out)?;
    if a.io.format == Format::Csv || a.io.out.is_some() {
        write_extra(&a.io, "kernel.csv", &sol.kernel.to_csv_string())?;
    }
    if a.method != Method::Fw {
        let model = SbmModel::fit(&mu, &nu, &opts.bass)?;
        write_extra(&a.io, "model.json", &model.to_json_string())?;
    }
    Ok(ExitCode::from(0))
}

fn obtain_model(
    mu: &Option<PathBuf>,
    nu: &Option<PathBuf>,
    model: &Option<PathBuf>,
) -> anyhow::Result<SbmModel> {
    if let Some(path) = model {
        let text = std::fs::read_to_string(path)?;
        return Ok(SbmModel::from_json_str(&text)?);
    }
    let mu = load_measure(mu.as_ref().expect("clap enforces mu|model"))?;
    let nu = load_measure(nu.as_ref().expect("clap enforces nu with mu"))?;
    Ok(SbmModel::fit(&mu, &nu, &BassOptions::default())?)
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let model = obtain_model(&a.mu, &a.nu, &a.model)?;
    let times = parse_grid(&a.grid)?;
    let ens = dynamics::simulate(&model, &times, a.paths, a.seed)?;
    #[derive(Serialize)]
    struct SimOut<'c> {
        config: &'c SimulateArgs,
        summary: serde_json::Value,
    }
    let summary: serde_json::Value = serde_json::from_str(&ens.summary_json())?;
    let out = to_json_string(&SimOut { config: a, summary });
    emit(&a.io, "summary.json", &out)?;
    if a.io.out.is_some() || a.io.format == Format::Csv {
        write_extra(&a.io, "paths.csv", &ens.to_csv_string())?;
    }
    Ok(ExitCode::from(0))
}

fn cmd_interpolate(a: &InterpolateArgs) -> CmdResult {
    let model = obtain_model(&a.mu, &a.nu, &a.model)?;
    let times = parse_grid(&a.grid)?;
    let method = match a.method {
        CurveMethod::Quadrature => InterpMethod::Quadrature { order: a.quad_order },
        CurveMethod::Montecarlo => InterpMethod::MonteCarlo { n: a.paths, seed: a.seed },
    };
    let curve = dynamics::interpolate(&model, &times, &method)?;
    #[derive(Serialize)]
    struct CurveOut<'c> {
        config: &'c InterpolateArgs,
        curve: serde_json::Value,
    }
    let curve_json: serde_json::Value = serde_json::from_str(&curve.to_json_string())?;
    let out = to_json_string(&CurveOut { config: a, curve: curve_json });
    emit(&a.io, "curve.json", &out)?;
    Ok(ExitCode::from(0))
}

fn load_peacock(path: &Path) -> anyhow::Result<Vec<(f64, DiscreteMeasure)>> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Entry {
        t: f64,
        measure: serde_json::Value,
    }
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<Entry> = serde_json::from_str(&text)?;
    entries
        .into_iter()
        .map(|e| {
            let m = DiscreteMeasure::from_json_str(&serde_json::to_string(&e.measure)?)?;
            Ok((e.t, m))
        })
        .collect()
}

fn cmd_localvol(a: &LocalvolArgs) -> CmdResult {
    let peacock = load_peacock(&a.peacock)?;
    if peacock.len() < 2 {
        anyhow::bail!("peacock needs at least two marginals");
    }
    let times = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => {
            let (t0, t1) = (peacock[0].0, peacock[peacock.len() - 1].0);
            (0..=64).map(|k| t0 + (t1 - t0) * k as f64 / 64.0).collect()
        }
    };
    let (pieces, ens) = match dynamics::localvol_chain(
        &peacock,
        a.n,
        &times,
        a.paths,
        a.seed,
        &BassOptions::default(),
    ) {
        Ok(x) => x,
        Err(sbm_core::Error::NotInConvexOrder(msg)) => {
            eprintln!("error: {msg}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    #[derive(Serialize)]
    struct PieceOut {
        t_start: f64,
        t_end: f64,
        max_residual: f64,
        converged: bool,
    }
    #[derive(Serialize)]
    struct ChainOut<'c> {
        config: &'c LocalvolArgs,
        pieces: Vec<PieceOut>,
        summary: serde_json::Value,
    }
    let out = to_json_string(&ChainOut {
        config: a,
        pieces: pieces
            .iter()
            .map(|(ta, tb, m)| PieceOut {
                t_start: *ta,
                t_end: *tb,
                max_residual: m.max_residual(),
                converged: m.converged(),
            })
            .collect(),
        summary: serde_json::from_str(&ens.summary_json())?,
    });
    emit(&a.io, "chain.json", &out)?;
    if a.io.out.is_some() || a.io.format == Format::Csv {
        write_extra(&a.io, "paths.csv", &ens.to_csv_string())?;
    }
    Ok(ExitCode::from(0))
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let mu = load_measure(&a.mu)?;
    let nu = load_measure(&a.nu)?;
    let suites: Vec<&str> = a.suite.split(',').map(str::trim).collect();
    for s in &suites {
        if !["lipschitz", "martingale", "monotonicity", "scaling", "consistency", "crossval"]
            .contains(s)
        {
            anyhow::bail!("unknown certificate suite: {s}");
        }
    }
    let sol = wot::solve_wot_1d_by_components(&mu, &nu, &SolveOptions::default())?;
    let mut reports = Vec::new();
    if suites.contains(&"lipschitz") {
        reports.push(verify::check_lipschitz_kernel(&sol.kernel, a.lipschitz_slack)?);
    }
    if suites.contains(&"martingale") {
        reports.push(verify::check_martingale_kernel(&sol.kernel));
    }
    if suites.contains(&"monotonicity") {
        reports.push(wot::certify_monotonicity(&sol, a.trials, a.seed)?);
    }
    if suites.contains(&"crossval") {
        reports.push(verify::cross_validate(&mu, &nu, 1e-3, 5e-2)?);
    }
    let dyn_opts = DynamicsOptions::default();
    if suites.contains(&"scaling") {
        for (r, t) in [(0.0, 0.25), (0.0, 1.0), (0.25, 1.0)] {
            let rep = dynamics::check_scaling(&mu, &nu, r, t, &dyn_opts)?;
            reports.push(verify::CertificateReport::new(
                &format!("scaling({r},{t})"),
                rep.rel_error,
                dyn_opts.scaling_rel_tol,
                None,
                format!("interp value {}, sqrt-form rhs {}", rep.value_interp, rep.sqrt_form_rhs),
            ));
        }
    }
    if suites.contains(&"consistency") {
        for lambda in [0.25, 0.5, 0.75] {
            let rep = dynamics::check_time_consistency(&mu, &nu, 0.0, 1.0, lambda, &dyn_opts)?;
            reports.push(verify::CertificateReport::new(
                &format!("consistency(0,1,{lambda})"),
                rep.w2_gap,
                rep.tol,
                None,
                "re-interpolated vs direct marginal".into(),
            ));
        }
    }
    let all_passed = reports.iter().all(|r| r.passed);
    #[derive(Serialize)]
    struct VerifyOut<'c> {
        config: &'c VerifyArgs,
        all_passed: bool,
        reports: Vec<verify::CertificateReport>,
    }
    let out = to_json_string(&VerifyOut { config: a, all_passed, reports });
    emit(&a.io, "report.json", &out)?;
    Ok(ExitCode::from(if all_passed { 0 } else { 3 }))
}

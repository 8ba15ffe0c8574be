//! Command-line front end.
//!
//! Every subcommand writes CSV or JSON into `--out` and returns one of the
//! exit codes below. Floats are written with 17 significant digits so that
//! re-reading them reproduces the binary64 values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic_reference::{self, AnalyticSolution};
use crate::brute_oracles::{self, ParticleConfig};
use crate::eqm_solver::{self, Measure, Operators, ProblemParams, SolveReport, SolverConfig, SolverError};
use crate::jacobi_basis;
use crate::potential_ops::{self, Storage};
use crate::specfun::Real;

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot read config {path}: {why}")]
    Config { path: PathBuf, why: String },
    #[error("cannot write {path}: {why}")]
    Write { path: PathBuf, why: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SolverError::NoFeasibleMinimum { .. }) => EXIT_INFEASIBLE,
            _ => EXIT_BAD_INPUT,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eqmeasure", version, about = "Equilibrium measures of attractive-repulsive power-law kernels on balls")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem: measure.csv, energy_trace.csv, solve_report.json.
    Solve(SolveArgs),
    /// Feasibility over an (alpha, beta) grid: gap.csv.
    Scan(ScanArgs),
    /// Compare against the closed forms for attraction powers 2 and 4.
    Validate(ValidateArgs),
    /// Dump a potential operator: operator.csv, operator.json.
    Operator(OperatorArgs),
    /// Particle gradient flow: particles.csv, histogram.csv.
    Particles(ParticleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Truncation size.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Tikhonov parameter relative to the normal-matrix norm.
    #[arg(long)]
    pub reg: Option<Real>,
    /// Regularised sweeps (1 = plain Tikhonov).
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub rmin: Option<Real>,
    #[arg(long)]
    pub rmax: Option<Real>,
    /// JSON file with solver settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SolverFlags {
    pub fn resolve(&self, fallback: SolverConfig) -> Result<SolverConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => fallback,
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.reg {
            cfg.s_rel = s;
        }
        if let Some(k) = self.sweeps {
            cfg.sweeps = k;
        }
        if let Some(lo) = self.rmin {
            cfg.r_bracket.0 = lo;
        }
        if let Some(hi) = self.rmax {
            cfg.r_bracket.1 = hi;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Real,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Real,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mass: Real,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 2.0)]
    pub alpha_min: Real,
    #[arg(long, allow_hyphen_values = true, default_value_t = 5.0)]
    pub alpha_max: Real,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub beta_min: Real,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.5)]
    pub beta_max: Real,
    #[arg(long, default_value_t = 0.05)]
    pub step: Real,
    #[arg(long)]
    pub dim: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    A2,
    A4,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub case: Suite,
    /// Restrict to one dimension (with --beta, a single custom case).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<Real>,
    #[arg(long, default_value_t = 1.0)]
    pub mass: Real,
    /// Scale the attractive operator by 1 + EPS before solving.
    #[arg(long, allow_hyphen_values = true)]
    pub perturb: Option<Real>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OperatorArgs {
    /// Power the basis is matched to.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Real,
    /// Kernel power of the dumped operator; defaults to --alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<Real>,
    #[arg(long)]
    pub dim: usize,
    #[arg(long = "N", default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ParticleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Real,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Real,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mass: Real,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Resolved inputs of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: Option<ProblemParams>,
    pub solver: SolverConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            let head: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("{}", head.join(" "));
            return EXIT_BAD_INPUT;
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Operator(a) => cmd_operator(a),
        Command::Particles(a) => cmd_particles(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", single_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load_config(path: &Path) -> Result<SolverConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.into(),
        why: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.into(),
        why: e.to_string(),
    })
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_real(v: Real) -> String {
    format!("{v:.16e}")
}

fn write_failed(path: &Path, e: impl ToString) -> CliError {
    CliError::Write {
        path: path.into(),
        why: e.to_string(),
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| write_failed(dir, e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_failed(path, e))?;
    w.write_record(header).map_err(|e| write_failed(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| write_failed(path, e))?;
    }
    w.flush().map_err(|e| write_failed(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| write_failed(path, e))?;
    let mut f = fs::File::create(path).map_err(|e| write_failed(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| write_failed(path, e))
}

/// Physical radii `R·sin(πi/(2n))` at which measures are written.
pub fn measure_rows(measure: &Measure, points: usize) -> Result<Vec<(Real, Real)>, SolverError> {
    eqm_solver::cosine_grid(points)
        .into_iter()
        .map(|x| {
            let r = x * measure.radius;
            Ok((r, eqm_solver::evaluate_measure(measure, r)?))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    run: RunConfig,
    feasible: bool,
    #[serde(flatten)]
    report: &'a SolveReport,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32, CliError> {
    let params = ProblemParams::new(args.alpha, args.beta, args.dim, args.mass)?;
    let config = args.solver.resolve(SolverConfig::default())?;
    let ops = Operators::build(&params, &config)?;
    let (measure, report) = eqm_solver::stationary_radius(&params, &config, &ops)?;
    let feasible = report.positivity.is_some_and(|p| p.feasible);
    prepare_dir(&args.out)?;
    let rows: Vec<Vec<String>> = measure_rows(&measure, config.eval_grid)?
        .into_iter()
        .map(|(r, v)| vec![fmt_real(r), fmt_real(v)])
        .collect();
    write_csv(&args.out.join("measure.csv"), &["r", "density"], &rows)?;
    let trace: Vec<Vec<String>> = report
        .energy_trace
        .iter()
        .map(|t| vec![fmt_real(t.radius), fmt_real(t.energy), t.feasible.to_string()])
        .collect();
    write_csv(&args.out.join("energy_trace.csv"), &["R", "E", "feasible"], &trace)?;
    let run = RunConfig {
        subcommand: "solve".into(),
        params: Some(params),
        solver: config,
        out: args.out.clone(),
        seed: None,
    };
    write_json(&args.out.join("solve_report.json"), &SolveOutput { run, feasible, report: &report })?;
    println!(
        "R = {} E = {} feasible = {feasible}",
        fmt_real(measure.radius),
        fmt_real(measure.energy)
    );
    if feasible {
        Ok(EXIT_OK)
    } else {
        let ratio = report.positivity.map(|p| p.ratio()).unwrap_or(Real::NAN);
        eprintln!("error: {}", SolverError::NoFeasibleMinimum { radius: measure.radius, ratio });
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn cmd_scan(args: &ScanArgs) -> Result<i32, CliError> {
    if args.dim == 0 {
        return Err(CliError::Usage("dimension must be at least 1".into()));
    }
    let config = args.solver.resolve(SolverConfig::default())?;
    let cells = eqm_solver::gap_scan(
        (args.alpha_min, args.alpha_max),
        (args.beta_min, args.beta_max),
        args.step,
        args.dim,
        &config,
    );
    prepare_dir(&args.out)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![fmt_real(c.alpha), fmt_real(c.beta), c.feasible.to_string()])
        .collect();
    write_csv(&args.out.join("gap.csv"), &["alpha", "beta", "feasible"], &rows)?;
    let feasible = cells.iter().filter(|c| c.feasible).count();
    println!("{} cells, {feasible} feasible", cells.len());
    Ok(EXIT_OK)
}

/// One closed-form comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationRow {
    pub params: ProblemParams,
    pub radius: Real,
    pub exact_radius: Real,
    pub radius_error: Real,
    /// Largest pointwise relative density error over 50 radii in `[0, R)`.
    pub density_error: Real,
    pub radius_tol: Real,
    pub density_tol: Real,
    pub pass: bool,
    pub note: Option<String>,
}

/// The nine closed-form cases: six with attraction power 2, three with 4.
pub fn analytic_cases() -> Vec<ProblemParams> {
    use std::f64::consts::PI;
    [
        (2.0, 1.2, 1, 1.0),
        (2.0, 1.0 / 3.0, 2, 2.6),
        (2.0, -0.5, 3, 1.0),
        (2.0, -2.5, 4, 0.5),
        (2.0, -4.0 * PI / 5.0, 5, 1.0),
        (2.0, -3.2, 6, 1.0),
        (4.0, 0.5, 2, 1.0),
        (4.0, -1.1, 3, 1.0),
        (4.0, -3.9, 6, 2.0),
    ]
    .into_iter()
    .map(|(alpha, beta, d, mass)| ProblemParams { alpha, beta, d, mass })
    .collect()
}

/// Largest pointwise relative error of `measure` against `exact` at
/// `R·i/points`, `i = 0..points-1`.
pub fn density_error(measure: &Measure, exact: &AnalyticSolution, points: usize) -> Result<Real, CliError> {
    let limit = exact.radius.min(measure.radius);
    let mut worst: Real = 0.0;
    for i in 0..points {
        let r = limit * i as Real / points as Real;
        let want = exact
            .density(r)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let got = eqm_solver::evaluate_measure(measure, r)?;
        worst = worst.max((got - want).abs() / want.abs());
    }
    Ok(worst)
}

/// Solve one closed-form case with the attractive operator scaled by
/// `1 + perturb` and compare.
pub fn validate_case(params: &ProblemParams, config: &SolverConfig, perturb: Real) -> Result<ValidationRow, CliError> {
    let exact = analytic_reference::solution_for(params.alpha, params.beta, params.d, params.mass)
        .ok_or_else(|| CliError::Usage(format!("no closed form for alpha = {}", params.alpha)))?
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let (radius_tol, density_tol) = if params.alpha == 2.0 { (1e-8, 1e-8) } else { (1e-8, 1e-6) };
    let mut ops = Operators::build(params, config)?;
    if perturb != 0.0 {
        ops.attractive.matrix *= 1.0 + perturb;
    }
    let row = |radius: Real, density_error: Real, note: Option<String>| {
        let radius_error = (radius - exact.radius).abs();
        ValidationRow {
            params: *params,
            radius,
            exact_radius: exact.radius,
            radius_error,
            density_error,
            radius_tol,
            density_tol,
            pass: note.is_none() && radius_error <= radius_tol && density_error <= density_tol,
            note,
        }
    };
    Ok(match eqm_solver::minimize_radius(params, config, &ops) {
        Ok((measure, _)) => row(measure.radius, density_error(&measure, &exact, 50)?, None),
        Err(e) => row(Real::NAN, Real::NAN, Some(single_line(&e.to_string()))),
    })
}

/// Settings used by `validate` unless overridden: a small truncation, at
/// which the closed forms are represented exactly.
pub fn validation_config() -> SolverConfig {
    SolverConfig { n: 8, ..Default::default() }
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32, CliError> {
    let config = args.solver.resolve(validation_config())?;
    let cases: Vec<ProblemParams> = match (args.dim, args.beta) {
        (Some(d), Some(beta)) => {
            let alpha = match args.case {
                Suite::A2 => 2.0,
                Suite::A4 => 4.0,
                Suite::All => return Err(CliError::Usage("a custom case needs --case a2 or a4".into())),
            };
            vec![ProblemParams::new(alpha, beta, d, args.mass)?]
        }
        (None, Some(_)) => return Err(CliError::Usage("--beta needs --dim".into())),
        (dim, None) => analytic_cases()
            .into_iter()
            .filter(|p| match args.case {
                Suite::A2 => p.alpha == 2.0,
                Suite::A4 => p.alpha == 4.0,
                Suite::All => true,
            })
            .filter(|p| dim.is_none_or(|d| p.d == d))
            .collect(),
    };
    if cases.is_empty() {
        return Err(CliError::Usage("no validation case matches the filters".into()));
    }
    let perturb = args.perturb.unwrap_or(0.0);
    let rows = cases
        .iter()
        .map(|p| validate_case(p, &config, perturb))
        .collect::<Result<Vec<_>, _>>()?;
    println!(
        "{:>6} {:>10} {:>3} {:>6} {:>22} {:>10} {:>10}  result",
        "alpha", "beta", "d", "mass", "R", "|dR|", "density"
    );
    for r in &rows {
        println!(
            "{:>6} {:>10.6} {:>3} {:>6} {:>22.16} {:>10.2e} {:>10.2e}  {}{}",
            r.params.alpha,
            r.params.beta,
            r.params.d,
            r.params.mass,
            r.radius,
            r.radius_error,
            r.density_error,
            if r.pass { "PASS" } else { "FAIL" },
            r.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        );
    }
    if let Some(out) = &args.out {
        prepare_dir(out)?;
        write_json(&out.join("validation.json"), &rows)?;
    }
    Ok(if rows.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_VALIDATION })
}

#[derive(Debug, Serialize)]
struct OperatorMeta {
    kernel_power: Real,
    basis_power: Real,
    d: usize,
    basis_a: Real,
    basis_b: Real,
    basis_ell: usize,
    n: usize,
    storage: Storage,
    declared_bandwidth: Option<usize>,
    /// Diagonals with an entry above `1e-12` of the largest.
    numerical_bandwidth: usize,
    max_abs: Real,
    /// Largest relative entry off the main diagonal.
    off_diagonal_ratio: Real,
    /// Smallest leading block holding every entry above `1e-12` relative.
    support_block: usize,
}

pub fn cmd_operator(args: &OperatorArgs) -> Result<i32, CliError> {
    let basis = jacobi_basis::choose_basis(args.alpha, args.dim).map_err(SolverError::from)?;
    let kernel = args.beta.unwrap_or(args.alpha);
    let op = potential_ops::build_operator(kernel, &basis, args.n).map_err(SolverError::from)?;
    let max = op.matrix.amax();
    let mut support = 0;
    for c in 0..op.n {
        for r in 0..op.n {
            if op.matrix[(r, c)].abs() > 1e-12 * max {
                support = support.max(r.max(c) + 1);
            }
        }
    }
    let meta = OperatorMeta {
        kernel_power: kernel,
        basis_power: args.alpha,
        d: args.dim,
        basis_a: basis.a,
        basis_b: basis.b,
        basis_ell: basis.ell,
        n: op.n,
        storage: op.storage,
        declared_bandwidth: op.declared_bandwidth,
        numerical_bandwidth: op.numerical_bandwidth(1e-12),
        max_abs: max,
        off_diagonal_ratio: op.off_band_ratio(0),
        support_block: support,
    };
    prepare_dir(&args.out)?;
    let mut rows = Vec::with_capacity(op.n * op.n);
    for r in 0..op.n {
        for c in 0..op.n {
            rows.push(vec![r.to_string(), c.to_string(), fmt_real(op.matrix[(r, c)])]);
        }
    }
    write_csv(&args.out.join("operator.csv"), &["row", "col", "value"], &rows)?;
    write_json(&args.out.join("operator.json"), &meta)?;
    println!(
        "N = {} bandwidth = {} off-diagonal = {:.3e} support block = {}",
        meta.n, meta.numerical_bandwidth, meta.off_diagonal_ratio, meta.support_block
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ParticleSummary {
    run: RunConfig,
    particles: usize,
    iterations: usize,
    converged: bool,
    max_velocity: Real,
    energy: Real,
    max_radius: Real,
    spectral_radius: Option<Real>,
    /// Sum over shells of |particle mass - spectral mass| over the total mass.
    histogram_l1: Option<Real>,
}

pub fn cmd_particles(args: &ParticleArgs) -> Result<i32, CliError> {
    let params = ProblemParams::new(args.alpha, args.beta, args.dim, args.mass)?;
    let config = args.solver.resolve(SolverConfig::default())?;
    if args.bins == 0 {
        return Err(CliError::Usage("need at least one histogram bin".into()));
    }
    let pconf = ParticleConfig {
        max_iterations: args.max_iter,
        ..Default::default()
    };
    let oracle = |e: brute_oracles::OracleError| CliError::Failed(e.to_string());
    let state = brute_oracles::particle_simulate(&params, args.particles, args.seed, &pconf).map_err(oracle)?;
    let radii = state.radii();
    let max_radius = radii.iter().cloned().fold(0.0, Real::max);
    // Spectral comparison is best effort: a failed solve leaves the columns empty.
    let spectral = eqm_solver::solve(&params, &config).ok().map(|(m, _)| m);
    let outer = spectral.as_ref().map_or(max_radius, |m| m.radius.max(max_radius));
    let hist = brute_oracles::radial_histogram(&state, args.bins, Some(outer)).map_err(oracle)?;
    let mut spectral_mass = vec![None; args.bins];
    if let Some(m) = &spectral {
        for (k, slot) in spectral_mass.iter_mut().enumerate() {
            let lo = hist.edges[k].min(m.radius);
            let hi = hist.edges[k + 1].min(m.radius);
            *slot = Some(if hi > lo {
                brute_oracles::shell_mass(|r| eqm_solver::evaluate_measure(m, r).unwrap_or(0.0), args.dim, lo, hi)
                    .map_err(oracle)?
            } else {
                0.0
            });
        }
    }
    let histogram_l1 = spectral.as_ref().map(|_| {
        hist.mass
            .iter()
            .zip(&spectral_mass)
            .map(|(p, s)| (p - s.unwrap_or(0.0)).abs())
            .sum::<Real>()
            / args.mass
    });

    prepare_dir(&args.out)?;
    let mut header: Vec<String> = (0..args.dim).map(|k| format!("x{k}")).collect();
    header.push("r".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..state.n_particles())
        .map(|i| {
            let mut row: Vec<String> = state.particle(i).iter().map(|&x| fmt_real(x)).collect();
            row.push(fmt_real(radii[i]));
            row
        })
        .collect();
    write_csv(&args.out.join("particles.csv"), &header_refs, &rows)?;
    let rows: Vec<Vec<String>> = (0..args.bins)
        .map(|k| {
            vec![
                fmt_real(hist.edges[k]),
                fmt_real(hist.edges[k + 1]),
                fmt_real(hist.centers[k]),
                fmt_real(hist.mass[k]),
                fmt_real(hist.density[k]),
                spectral_mass[k].map(fmt_real).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &args.out.join("histogram.csv"),
        &["r_inner", "r_outer", "r_center", "particle_mass", "particle_density", "spectral_mass"],
        &rows,
    )?;
    let summary = ParticleSummary {
        run: RunConfig {
            subcommand: "particles".into(),
            params: Some(params),
            solver: config,
            out: args.out.clone(),
            seed: Some(args.seed),
        },
        particles: state.n_particles(),
        iterations: state.iterations,
        converged: state.converged,
        max_velocity: state.max_velocity,
        energy: state.energy,
        max_radius,
        spectral_radius: spectral.as_ref().map(|m| m.radius),
        histogram_l1,
    };
    write_json(&args.out.join("particles.json"), &summary)?;
    println!(
        "iterations = {} max speed = {:.3e} max radius = {} L1 = {}",
        summary.iterations,
        summary.max_velocity,
        fmt_real(max_radius),
        histogram_l1.map(fmt_real).unwrap_or_else(|| "n/a".into())
    );
    Ok(EXIT_OK)
}

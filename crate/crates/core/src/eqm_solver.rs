//! Equilibrium-measure solver.
//!
//! For a support radius `R` the Euler–Lagrange condition on `B_R`, rescaled
//! to the unit ball, becomes the linear system
//! `F(R) σ = e₀` with `F(R) = R^{α+d}/α · U^α − R^{β+d}/β · U^β`, solved in
//! Tikhonov-regularised normal form. Normalising `σ` to the prescribed mass
//! gives `ρ = Eσ` with the constant `E`. The radius is then chosen where
//! `E(R)` is stationary, and the measure is accepted only if it is
//! nonnegative.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jacobi_basis::{self, BasisError, BasisSpec, CoefficientVector};
use crate::potential_ops::{self, PotentialError, PotentialOperator};
use crate::specfun::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidParams(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("operator size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("regularised normal matrix is numerically singular at R = {0}")]
    Singular(Real),
    #[error("zeroth coefficient {0:e} too small to normalise the mass")]
    MassVanishes(Real),
    #[error("radius {r} outside the support [0, {radius}]")]
    OutsideSupport { r: Real, radius: Real },
    #[error("energy has no interior stationary point in [{lo}, {hi}]; widen the radius bracket")]
    BracketLost { lo: Real, hi: Real },
    #[error("stationary radius {radius} gives a signed measure (min/max density = {ratio:e})")]
    NoFeasibleMinimum { radius: Real, ratio: Real },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Power-law interaction problem `K(r) = r^α/α - r^β/β` with mass `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub alpha: Real,
    pub beta: Real,
    pub d: usize,
    pub mass: Real,
}

impl ProblemParams {
    pub fn new(alpha: Real, beta: Real, d: usize, mass: Real) -> Result<Self, SolverError> {
        let p = Self { alpha, beta, d, mass };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidParams(m));
        if self.d == 0 {
            return bad("dimension must be at least 1".into());
        }
        if ![self.alpha, self.beta, self.mass].iter().all(|v| v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        let d = self.d as Real;
        if !(-d < self.beta && self.beta < self.alpha) {
            return bad(format!(
                "need -d < beta < alpha, got alpha = {}, beta = {}, d = {}",
                self.alpha, self.beta, self.d
            ));
        }
        if self.alpha == 0.0 || self.beta == 0.0 {
            return bad("kernel powers must be nonzero".into());
        }
        if !(self.mass > 0.0) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        Ok(())
    }
}

/// Weighted basis the measure is expanded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    /// Weight exponent `1 - (β+d)/2` when admissible, else [`BasisChoice::Beta`].
    #[default]
    Auto,
    /// Banded basis of the attractive power.
    Alpha,
    /// Banded basis of the repulsive power.
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Truncation size.
    pub n: usize,
    /// Tikhonov parameter relative to `‖FᵀF‖_F`.
    pub s_rel: Real,
    /// Iterated-Tikhonov sweeps; 1 is the plain regularised solve.
    pub sweeps: usize,
    pub r_bracket: (Real, Real),
    pub grid_points: usize,
    pub r_tol: Real,
    pub positivity_tol: Real,
    pub eval_grid: usize,
    pub basis: BasisChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 60,
            s_rel: 1e-12,
            sweeps: 3,
            r_bracket: (0.05, 5.0),
            grid_points: 200,
            r_tol: 1e-12,
            positivity_tol: 1e-8,
            eval_grid: 1001,
            basis: BasisChoice::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.into()));
        if self.n < 3 {
            return bad("N must be at least 3");
        }
        if !(self.s_rel >= 0.0) {
            return bad("regularisation must be nonnegative");
        }
        if self.sweeps == 0 {
            return bad("need at least one regularised sweep");
        }
        let (lo, hi) = self.r_bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad("radius bracket must satisfy 0 < R_min < R_max");
        }
        if self.grid_points < 3 {
            return bad("need at least 3 grid points");
        }
        if !(self.r_tol > 0.0 && self.positivity_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.eval_grid < 2 {
            return bad("evaluation grid needs at least 2 points");
        }
        Ok(())
    }
}

/// Basis used for the measure given the problem and configuration.
pub fn solver_basis(params: &ProblemParams, config: &SolverConfig) -> Result<BasisSpec, SolverError> {
    let d = params.d;
    Ok(match config.basis {
        BasisChoice::Alpha => jacobi_basis::choose_basis(params.alpha, d)?,
        BasisChoice::Beta => jacobi_basis::choose_basis(params.beta, d)?,
        BasisChoice::Auto => match BasisSpec::for_power(params.beta, d, 1) {
            Ok(b) => b,
            Err(_) => jacobi_basis::choose_basis(params.beta, d)?,
        },
    })
}

/// The two radius-independent operators of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Operators {
    pub attractive: PotentialOperator,
    pub repulsive: PotentialOperator,
    pub basis: BasisSpec,
}

impl Operators {
    pub fn build(params: &ProblemParams, config: &SolverConfig) -> Result<Self, SolverError> {
        params.validate()?;
        config.validate()?;
        let basis = solver_basis(params, config)?;
        Ok(Self {
            attractive: potential_ops::build_operator(params.alpha, &basis, config.n)?,
            repulsive: potential_ops::build_operator(params.beta, &basis, config.n)?,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.attractive.n
    }
}

/// Measure on `B_R`: coefficients in the weighted basis at unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub rho: CoefficientVector,
    pub radius: Real,
    /// Euler–Lagrange constant (value of the combined potential on the support).
    pub energy: Real,
    /// `‖F σ - e₀‖_∞` of the unnormalised solution.
    pub residual: Real,
}

/// `F = R^{α+d}/α · U^α - R^{β+d}/β · U^β`.
pub fn assemble(params: &ProblemParams, radius: Real, ops: &Operators) -> Result<DMatrix<Real>, SolverError> {
    let (ua, ub) = (&ops.attractive.matrix, &ops.repulsive.matrix);
    if ua.shape() != ub.shape() {
        return Err(SolverError::SizeMismatch(ua.nrows(), ub.nrows()));
    }
    let d = params.d as Real;
    let ca = radius.powf(params.alpha + d) / params.alpha;
    let cb = radius.powf(params.beta + d) / params.beta;
    Ok(ua * ca - ub * cb)
}

fn assemble_derivative(params: &ProblemParams, radius: Real, ops: &Operators) -> DMatrix<Real> {
    let d = params.d as Real;
    let (a, b) = (params.alpha, params.beta);
    let ca = (a + d) / a * radius.powf(a + d - 1.0);
    let cb = (b + d) / b * radius.powf(b + d - 1.0);
    &ops.attractive.matrix * ca - &ops.repulsive.matrix * cb
}

struct FixedRadius {
    measure: Measure,
    /// `dE/dR`, including the drift of the regularisation parameter.
    slope: Real,
}

enum Factored {
    Cholesky(nalgebra::linalg::Cholesky<Real, nalgebra::Dyn>),
    Lu(nalgebra::linalg::LU<Real, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factored {
    fn new(system: &DMatrix<Real>) -> Self {
        match system.clone().cholesky() {
            Some(ch) => Self::Cholesky(ch),
            None => Self::Lu(system.clone().lu()),
        }
    }

    fn solve(&self, rhs: &DVector<Real>, radius: Real) -> Result<DVector<Real>, SolverError> {
        let x = match self {
            Self::Cholesky(ch) => Some(ch.solve(rhs)),
            Self::Lu(lu) => lu.solve(rhs),
        };
        x.filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(SolverError::Singular(radius))
    }
}

fn solve_at(params: &ProblemParams, radius: Real, config: &SolverConfig, ops: &Operators, want_slope: bool) -> Result<FixedRadius, SolverError> {
    let f = assemble(params, radius, ops)?;
    let n = f.nrows();
    let ftf = f.transpose() * &f;
    let ftf_norm = ftf.norm();
    let s = config.s_rel * ftf_norm;
    let mut system = ftf.clone();
    for i in 0..n {
        system[(i, i)] += s;
    }
    let factored = Factored::new(&system);
    let rhs: DVector<Real> = f.row(0).transpose();
    // Iterated Tikhonov: σ_{k+1} = (sI + FᵀF)⁻¹ (s σ_k + Fᵀe₀), σ_0 = 0.
    let mut iterates = vec![DVector::zeros(n)];
    for _ in 0..config.sweeps {
        let prev = iterates.last().expect("nonempty");
        iterates.push(factored.solve(&(&rhs + prev * s), radius)?);
    }
    let sigma = iterates.last().expect("nonempty").clone();
    let mut e0 = DVector::zeros(n);
    e0[0] = 1.0;
    let residual = (&f * &sigma - &e0).amax();

    let unit = jacobi_basis::unit_mass_factor(&ops.basis)?;
    let d = params.d as i32;
    let mass_sigma = unit * radius.powi(d) * sigma[0];
    if !(sigma[0].abs() >= 1e-300) {
        return Err(SolverError::MassVanishes(sigma[0]));
    }
    let energy = params.mass / mass_sigma;
    let rho = CoefficientVector::new(sigma.iter().map(|v| v * energy).collect(), ops.basis)?;

    let slope = if want_slope {
        let fp = assemble_derivative(params, radius, ops);
        let dftf = fp.transpose() * &f + f.transpose() * &fp;
        // The regularisation scales with ‖FᵀF‖ and so moves with R too.
        let ds = if ftf_norm > 0.0 { config.s_rel * ftf.dot(&dftf) / ftf_norm } else { 0.0 };
        let drhs0: DVector<Real> = fp.row(0).transpose();
        let mut dsigma = DVector::zeros(n);
        for k in 0..config.sweeps {
            let (prev, next) = (&iterates[k], &iterates[k + 1]);
            let rhs_k = &drhs0 + prev * ds + &dsigma * s - &dftf * next - next * ds;
            dsigma = factored.solve(&rhs_k, radius)?;
        }
        let dmass = unit * (params.d as Real * radius.powi(d - 1) * sigma[0] + radius.powi(d) * dsigma[0]);
        -params.mass / (mass_sigma * mass_sigma) * dmass
    } else {
        Real::NAN
    };
    Ok(FixedRadius {
        measure: Measure { rho, radius, energy, residual },
        slope,
    })
}

/// Solve the regularised system at a fixed radius and normalise the mass.
pub fn solve_fixed_radius(params: &ProblemParams, radius: Real, config: &SolverConfig, ops: &Operators) -> Result<Measure, SolverError> {
    if !(radius > 0.0) {
        return Err(SolverError::InvalidParams(format!("radius must be positive, got {radius}")));
    }
    Ok(solve_at(params, radius, config, ops, false)?.measure)
}

/// `(E, dE/dR)` at a fixed radius.
pub fn energy_and_slope(params: &ProblemParams, radius: Real, config: &SolverConfig, ops: &Operators) -> Result<(Real, Real), SolverError> {
    let r = solve_at(params, radius, config, ops, true)?;
    Ok((r.measure.energy, r.slope))
}

/// Density at physical radius `r ∈ [0, R]`.
pub fn evaluate_measure(measure: &Measure, r: Real) -> Result<Real, SolverError> {
    if !(0.0..=measure.radius).contains(&r) {
        return Err(SolverError::OutsideSupport { r, radius: measure.radius });
    }
    Ok(measure.rho.evaluate((r / measure.radius).min(1.0))?)
}

/// Unit-scale radii `sin(πi/(2n))`, `i = 0..n-1`: clustered at the boundary,
/// which is excluded because the weight may be singular there.
pub fn cosine_grid(n: usize) -> Vec<Real> {
    (0..n)
        .map(|i| (std::f64::consts::FRAC_PI_2 * i as Real / n as Real).sin())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Positivity {
    pub min: Real,
    pub max: Real,
    pub feasible: bool,
}

impl Positivity {
    pub fn ratio(&self) -> Real {
        if self.max > 0.0 { self.min / self.max } else { Real::NEG_INFINITY }
    }
}

/// Density extremes on the cosine grid; feasible when
/// `min >= -positivity_tol · max` and `max > 0`.
pub fn positivity(measure: &Measure, config: &SolverConfig) -> Result<Positivity, SolverError> {
    let mut min = Real::INFINITY;
    let mut max = Real::NEG_INFINITY;
    for r in cosine_grid(config.eval_grid) {
        let v = measure.rho.evaluate(r)?;
        min = min.min(v);
        max = max.max(v);
    }
    let feasible = max > 0.0 && min >= -config.positivity_tol * max;
    Ok(Positivity { min, max, feasible })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub radius: Real,
    pub energy: Real,
    pub slope: Real,
    pub feasible: bool,
}

/// How the chosen radius was characterised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    /// `dE/dR` crosses zero from below: a strict local minimum of `E`.
    Crossing,
    /// `dE/dR` peaks at (numerically) zero without crossing.
    Tangency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDecay {
    /// Largest magnitude of the last quarter of coefficients over the largest.
    pub tail_ratio: Real,
    /// Maximum magnitude per block of ten coefficients.
    pub block_envelope: Vec<Real>,
}

impl CoefficientDecay {
    pub fn of(coeffs: &[Real]) -> Self {
        let max = coeffs.iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
        let start = coeffs.len() - coeffs.len() / 4;
        let tail = coeffs[start..].iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
        Self {
            tail_ratio: if max > 0.0 { tail / max } else { 0.0 },
            block_envelope: coeffs
                .chunks(10)
                .map(|c| c.iter().fold(0.0 as Real, |m, v| m.max(v.abs())))
                .collect(),
        }
    }

    /// True if the block envelope strictly decreases from block `from` on.
    pub fn decays_from_block(&self, from: usize) -> bool {
        self.block_envelope[from.min(self.block_envelope.len())..]
            .windows(2)
            .all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub params: ProblemParams,
    pub config: SolverConfig,
    pub basis_a: Real,
    pub basis_ell: usize,
    pub energy_trace: Vec<TracePoint>,
    /// Grid bracket around the largest `dE/dR`.
    pub bracket: (Real, Real),
    pub chosen_radius: Option<Real>,
    pub energy: Option<Real>,
    pub stationarity: Option<Stationarity>,
    pub slope_at_choice: Option<Real>,
    pub iterations: usize,
    pub residual: Option<Real>,
    pub positivity: Option<Positivity>,
    pub decay: Option<CoefficientDecay>,
    /// Unit-scale coefficients of the chosen measure.
    pub coefficients: Option<Vec<Real>>,
}

/// Geometric radius grid over the configured bracket.
pub fn radius_grid(config: &SolverConfig) -> Vec<Real> {
    let (lo, hi) = config.r_bracket;
    let n = config.grid_points;
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo * (ratio * i as Real / (n - 1) as Real).exp()
            }
        })
        .collect()
}

/// Interior grid point whose slope agrees with the centred energy
/// difference to within half the neighbouring slope magnitude. Rejects the
/// spikes where `F(R)` passes through a singular matrix.
fn slope_is_consistent(trace: &[TracePoint], i: usize) -> bool {
    if i == 0 || i + 1 >= trace.len() {
        return trace[i].slope.is_finite();
    }
    let (l, c, r) = (&trace[i - 1], &trace[i], &trace[i + 1]);
    if ![l.energy, c.energy, r.energy, l.slope, c.slope, r.slope].iter().all(|v| v.is_finite()) {
        return false;
    }
    let centred = (r.energy - l.energy) / (r.radius - l.radius);
    (c.slope - centred).abs() <= 0.5 * l.slope.abs().max(r.slope.abs())
}

/// Energy, slope and feasibility on the radius grid, plus the bracket
/// around the grid point where `dE/dR` is largest (ties toward smaller R).
pub fn energy_scan(params: &ProblemParams, config: &SolverConfig, ops: &Operators) -> Result<SolveReport, SolverError> {
    params.validate()?;
    config.validate()?;
    let grid = radius_grid(config);
    let trace: Vec<TracePoint> = grid
        .par_iter()
        .map(|&radius| match solve_at(params, radius, config, ops, true) {
            Ok(fr) => TracePoint {
                radius,
                energy: fr.measure.energy,
                slope: fr.slope,
                feasible: positivity(&fr.measure, config).map(|p| p.feasible).unwrap_or(false),
            },
            Err(_) => TracePoint {
                radius,
                energy: Real::NAN,
                slope: Real::NAN,
                feasible: false,
            },
        })
        .collect();
    let best = trace
        .iter()
        .enumerate()
        .filter(|&(i, _)| slope_is_consistent(&trace, i))
        .fold(None::<(usize, Real)>, |acc, (i, t)| match acc {
            Some((_, s)) if s >= t.slope => acc,
            _ => Some((i, t.slope)),
        });
    let (lo, hi) = config.r_bracket;
    let Some((i, _)) = best else {
        return Err(SolverError::BracketLost { lo, hi });
    };
    if i == 0 || i + 1 == trace.len() {
        return Err(SolverError::BracketLost { lo, hi });
    }
    Ok(SolveReport {
        params: *params,
        config: *config,
        basis_a: ops.basis.a,
        basis_ell: ops.basis.ell,
        bracket: (trace[i - 1].radius, trace[i + 1].radius),
        energy_trace: trace,
        chosen_radius: None,
        energy: None,
        stationarity: None,
        slope_at_choice: None,
        iterations: 0,
        residual: None,
        positivity: None,
        decay: None,
        coefficients: None,
    })
}

const GOLDEN: Real = 0.618_033_988_749_894_8;

/// Radius of stationary energy inside the scan bracket, refined to `r_tol`,
/// and the measure there. Fails if that measure is not nonnegative.
pub fn minimize_radius(params: &ProblemParams, config: &SolverConfig, ops: &Operators) -> Result<(Measure, SolveReport), SolverError> {
    let (measure, report) = stationary_radius(params, config, ops)?;
    match report.positivity {
        Some(pos) if !pos.feasible => Err(SolverError::NoFeasibleMinimum {
            radius: measure.radius,
            ratio: pos.ratio(),
        }),
        _ => Ok((measure, report)),
    }
}

/// [`minimize_radius`] without the positivity verdict; the report still
/// carries it.
pub fn stationary_radius(params: &ProblemParams, config: &SolverConfig, ops: &Operators) -> Result<(Measure, SolveReport), SolverError> {
    let mut report = energy_scan(params, config, ops)?;
    let slope = |r: Real| -> Result<Real, SolverError> { Ok(solve_at(params, r, config, ops, true)?.slope) };
    let (mut a, mut b) = report.bracket;
    let mut iterations = 0;

    // Golden section on the slope until a positive value shows up or the
    // bracket collapses.
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = slope(x1)?;
    let mut f2 = slope(x2)?;
    let mut positive: Option<Real> = None;
    loop {
        iterations += 1;
        if f1 > 0.0 {
            positive = Some(x1);
            break;
        }
        if f2 > 0.0 {
            positive = Some(x2);
            break;
        }
        if b - a <= config.r_tol.max(1e-14 * b) || iterations > 200 {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = slope(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = slope(x2)?;
        }
    }

    let (radius, stationarity) = match positive {
        Some(p) => {
            // Root of the slope between the left end (negative) and p.
            let mut lo = a;
            let mut hi = p;
            let mut flo = slope(lo)?;
            if flo > 0.0 {
                return Err(SolverError::BracketLost { lo: a, hi: b });
            }
            let mut fhi = slope(hi)?;
            while hi - lo > config.r_tol {
                iterations += 1;
                // Secant step safeguarded by bisection.
                let secant = hi - fhi * (hi - lo) / (fhi - flo);
                let mid = 0.5 * (lo + hi);
                let x = if secant > lo && secant < hi && iterations % 3 != 0 { secant } else { mid };
                let fx = slope(x)?;
                if fx == 0.0 {
                    lo = x;
                    hi = x;
                    break;
                }
                if fx < 0.0 {
                    lo = x;
                    flo = fx;
                } else {
                    hi = x;
                    fhi = fx;
                }
                if iterations > 400 {
                    break;
                }
            }
            (0.5 * (lo + hi), Stationarity::Crossing)
        }
        None => (if f1 >= f2 { x1 } else { x2 }, Stationarity::Tangency),
    };

    let fr = solve_at(params, radius, config, ops, true)?;
    let pos = positivity(&fr.measure, config)?;
    report.chosen_radius = Some(radius);
    report.energy = Some(fr.measure.energy);
    report.stationarity = Some(stationarity);
    report.slope_at_choice = Some(fr.slope);
    report.iterations = iterations;
    report.residual = Some(fr.measure.residual);
    report.positivity = Some(pos);
    report.decay = Some(CoefficientDecay::of(&fr.measure.rho.coeffs));
    report.coefficients = Some(fr.measure.rho.coeffs.clone());
    Ok((fr.measure, report))
}

/// Build operators and minimise in one call.
pub fn solve(params: &ProblemParams, config: &SolverConfig) -> Result<(Measure, SolveReport), SolverError> {
    let ops = Operators::build(params, config)?;
    minimize_radius(params, config, &ops)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub alpha: Real,
    pub beta: Real,
    pub feasible: bool,
    pub radius: Option<Real>,
    pub reason: Option<String>,
}

fn axis(range: (Real, Real), step: Real) -> Vec<Real> {
    let (lo, hi) = range;
    if !(step > 0.0) || hi < lo {
        return vec![];
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + step * i as Real).collect()
}

/// Single-ball feasibility over an `(α, β)` grid with unit mass.
pub fn gap_scan(
    alpha_range: (Real, Real),
    beta_range: (Real, Real),
    step: Real,
    d: usize,
    config: &SolverConfig,
) -> Vec<GapCell> {
    let alphas = axis(alpha_range, step);
    let betas = axis(beta_range, step);
    let cells: Vec<(Real, Real)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let outcome = ProblemParams::new(alpha, beta, d, 1.0).and_then(|p| solve(&p, config));
            match outcome {
                Ok((m, _)) => GapCell {
                    alpha,
                    beta,
                    feasible: true,
                    radius: Some(m.radius),
                    reason: None,
                },
                Err(e) => GapCell {
                    alpha,
                    beta,
                    feasible: false,
                    radius: match e {
                        SolverError::NoFeasibleMinimum { radius, .. } => Some(radius),
                        _ => None,
                    },
                    reason: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic_reference::alpha2_solution;

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(1.0, 2.0, 2, 1.0).is_err());
        assert!(ProblemParams::new(2.0, -2.5, 2, 1.0).is_err());
        assert!(ProblemParams::new(2.0, 0.5, 2, 0.0).is_err());
        assert!(ProblemParams::new(2.0, 0.0, 2, 1.0).is_err());
        assert!(ProblemParams::new(2.0, -0.44, 2, 1.0).is_ok());
    }

    #[test]
    fn assemble_scales_per_term() {
        let p = ProblemParams::new(2.0, -0.44, 2, 1.0).unwrap();
        let c = SolverConfig { n: 6, ..Default::default() };
        let ops = Operators::build(&p, &c).unwrap();
        let f1 = assemble(&p, 1.0, &ops).unwrap();
        let expect = &ops.attractive.matrix / 2.0 - &ops.repulsive.matrix / -0.44;
        assert!((&f1 - &expect).amax() < 1e-15 * expect.amax());
        let f2 = assemble(&p, 2.0, &ops).unwrap();
        let expect2 = &ops.attractive.matrix * (2f64.powf(4.0) / 2.0) - &ops.repulsive.matrix * (2f64.powf(1.56) / -0.44);
        assert!((&f2 - &expect2).amax() < 1e-14 * expect2.amax());
    }

    #[test]
    fn fixed_radius_reproduces_alpha2_density() {
        let p = ProblemParams::new(2.0, -0.44, 2, 1.0).unwrap();
        let c = SolverConfig { n: 8, ..Default::default() };
        let ops = Operators::build(&p, &c).unwrap();
        let exact = alpha2_solution(-0.44, 2, 1.0).unwrap();
        let m = solve_fixed_radius(&p, exact.radius, &c, &ops).unwrap();
        for i in 0..50 {
            let r = exact.radius * i as Real / 50.0;
            let want = exact.density(r).unwrap();
            let got = evaluate_measure(&m, r).unwrap();
            assert!((got - want).abs() <= 1e-8 * want.abs(), "r={r} {got} {want}");
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let p = ProblemParams::new(1.0, 0.3, 2, 1.0).unwrap();
        let c = SolverConfig { n: 20, ..Default::default() };
        let ops = Operators::build(&p, &c).unwrap();
        let r = 1.0;
        let h = 1e-6;
        let (_, s) = energy_and_slope(&p, r, &c, &ops).unwrap();
        let ep = solve_fixed_radius(&p, r + h, &c, &ops).unwrap().energy;
        let em = solve_fixed_radius(&p, r - h, &c, &ops).unwrap().energy;
        let fd = (ep - em) / (2.0 * h);
        assert!((s - fd).abs() < 1e-5 * s.abs().max(1e-3), "{s} vs {fd}");
    }

    #[test]
    fn evaluate_measure_domain() {
        let p = ProblemParams::new(2.0, -0.44, 2, 1.0).unwrap();
        let c = SolverConfig { n: 6, ..Default::default() };
        let ops = Operators::build(&p, &c).unwrap();
        let m = solve_fixed_radius(&p, 1.0, &c, &ops).unwrap();
        assert!(evaluate_measure(&m, 1.2).is_err());
        assert!(evaluate_measure(&m, -0.1).is_err());
    }

    #[test]
    fn cosine_grid_shape() {
        let g = cosine_grid(1001);
        assert_eq!(g.len(), 1001);
        assert_eq!(g[0], 0.0);
        assert!(g[1000] < 1.0);
    }

    #[test]
    fn gap_axis_handles_empty_range() {
        assert!(axis((1.0, 0.5), 0.05).is_empty());
        assert_eq!(axis((0.0, 1.0), 0.05).len(), 21);
    }
}

//! Slow reference computations used to check the spectral machinery:
//! direct quadrature of power-law potentials and a particle gradient flow.
//!
//! The potential of a radial density at `|x| = x_r` is reduced to
//! `|S^{d-2}| ∫₀¹ s^{d-1} ρ(s) ∫₀^π (x_r² + s² - 2 x_r s cos θ)^{κ/2} sin^{d-2}θ dθ ds`
//! and both integrals are done with tanh-sinh quadrature, splitting the
//! radial one at `s = x_r` and the angular one near the coincidence scale.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eqm_solver::{Measure, ProblemParams};
use crate::jacobi_basis::{self, BasisSpec};
use crate::specfun::{self, LogProduct, Real, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("quadrature did not reach tolerance {tol:e} (last change {change:e}) after {evaluations} evaluations")]
    ToleranceNotMet { tol: Real, change: Real, evaluations: usize },
    #[error("integrand not finite at x = {0}")]
    NonFinite(Real),
    #[error("kernel power {power} not integrable in dimension {d}")]
    NotIntegrable { power: Real, d: usize },
    #[error("radius {0} outside the unit ball")]
    OutsideBall(Real),
    #[error("need at least {need} particles, got {got}")]
    TooFewParticles { need: usize, got: usize },
    #[error("particle left the ball of radius {limit} at iteration {iteration}")]
    BlowUp { limit: Real, iteration: usize },
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Special(#[from] SpecfunError),
}

/// Tanh-sinh rule on `[lo, hi]` for vector-valued integrands.
///
/// The integrand receives `(x, x - lo, hi - x, out)` with both distances
/// computed without cancellation, and adds its values into `out`. Levels are
/// refined until the largest component change is at most
/// `tol · max(1, |I|)`.
pub struct TanhSinh {
    pub tol: Real,
    pub max_level: usize,
    /// Abscissa cutoff in the `t` variable.
    pub t_max: Real,
}

impl Default for TanhSinh {
    fn default() -> Self {
        Self { tol: 1e-12, max_level: 10, t_max: 6.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub values: Vec<Real>,
    pub evaluations: usize,
    pub change: Real,
}

impl TanhSinh {
    /// Rule whose abscissa range resolves an endpoint factor `δ^p`
    /// (`p > -1`, `δ` the distance to the endpoint) down to a tail of `tol`.
    pub fn for_endpoint_power(p: Real, tol: Real) -> Self {
        let q = (p + 1.0).max(1e-3);
        // Smallest distance needed: δ^q / q ≤ tol.
        let ln_delta = ((tol * q).ln() / q).max(-700.0);
        let u = -ln_delta / 2.0;
        let t_max = ((u / FRAC_PI_2).asinh() + 0.25).clamp(3.0, 6.5);
        Self { tol, max_level: 10, t_max }
    }

    pub fn integrate<F>(&self, dim: usize, lo: Real, hi: Real, f: F) -> Result<QuadratureResult, OracleError>
    where
        F: Fn(Real, Real, Real, &mut [Real]),
    {
        let half = 0.5 * (hi - lo);
        let mut sum = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        let mut evaluations = 0;
        let mut node = |t: Real, sum: &mut [Real], tmp: &mut [Real]| -> Result<(), OracleError> {
            let u = FRAC_PI_2 * t.sinh();
            let cu = u.cosh();
            // 1 ∓ tanh(u) = e^{∓u} / cosh(u)
            let to_hi = half * (-u).exp() / cu;
            let to_lo = half * u.exp() / cu;
            if to_hi <= 0.0 || to_lo <= 0.0 || !cu.is_finite() {
                return Ok(());
            }
            let x = if t < 0.0 { lo + to_lo } else { hi - to_hi };
            let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
            tmp.iter_mut().for_each(|v| *v = 0.0);
            f(x, to_lo, to_hi, tmp);
            evaluations += 1;
            if tmp.iter().any(|v| !v.is_finite()) {
                return Err(OracleError::NonFinite(x));
            }
            for (s, v) in sum.iter_mut().zip(tmp.iter()) {
                *s += w * v;
            }
            Ok(())
        };
        // Level 0: step 1 over [-t_max, t_max].
        let mut h = 1.0;
        let k_max = self.t_max.floor() as i64;
        for k in -k_max..=k_max {
            node(k as Real, &mut sum, &mut tmp)?;
        }
        let mut estimate: Vec<Real> = sum.iter().map(|s| s * h).collect();
        let mut change = Real::INFINITY;
        for _level in 1..=self.max_level {
            h *= 0.5;
            let count = (self.t_max / h).floor() as i64;
            let mut k = -count;
            if k % 2 == 0 {
                k += 1;
            }
            while k <= count {
                node(k as Real * h, &mut sum, &mut tmp)?;
                k += 2;
            }
            let next: Vec<Real> = sum.iter().map(|s| s * h).collect();
            change = next
                .iter()
                .zip(estimate.iter())
                .fold(0.0 as Real, |m, (a, b)| m.max((a - b).abs()));
            let scale = next.iter().fold(1.0 as Real, |m, v| m.max(v.abs()));
            estimate = next;
            if change <= self.tol * scale {
                return Ok(QuadratureResult { values: estimate, evaluations, change });
            }
        }
        Err(OracleError::ToleranceNotMet { tol: self.tol, change, evaluations })
    }

    pub fn integrate_scalar<F>(&self, lo: Real, hi: Real, f: F) -> Result<Real, OracleError>
    where
        F: Fn(Real, Real, Real) -> Real,
    {
        Ok(self.integrate(1, lo, hi, |x, a, b, out| out[0] = f(x, a, b))?.values[0])
    }
}

/// Surface area `|S^{k}| = 2π^{(k+1)/2}/Γ((k+1)/2)` of the unit `k`-sphere.
pub fn sphere_area(k: usize) -> Result<Real, OracleError> {
    let h = (k as Real + 1.0) / 2.0;
    Ok(2.0 * PI.powf(h) / specfun::gamma(h)?)
}

/// Angular factor `∫₀^π (x² + s² - 2xs cos θ)^{κ/2} sin^{d-2}θ dθ` for
/// `d ≥ 2`, and `|x-s|^κ + (x+s)^κ` for `d = 1`. `gap` is `|x - s|`, passed
/// separately so that it keeps its precision below the spacing of `x`.
pub fn angular_factor(kernel_power: Real, d: usize, x: Real, s: Real, gap: Real, rule: &TanhSinh) -> Result<Real, OracleError> {
    if d == 1 {
        return Ok(gap.powf(kernel_power) + (x + s).powf(kernel_power));
    }
    // Keeps the rescaled range below overflow; quadrature weights at such
    // gaps are far below any tolerance.
    let gap = if gap > 0.0 { gap.max(1e-280) } else { gap };
    let xs = x * s;
    let sin_power = d as Real - 2.0;
    if xs == 0.0 {
        let r = x.max(s);
        return Ok(r.powf(kernel_power) * angular_beta(d)?);
    }
    let chord = 2.0 * xs.sqrt();
    // |x - y| = hypot(gap, 2√(xs) sin(θ/2)), accurate near θ = 0.
    let integrand = |theta: Real, from_zero: Real, to_pi: Real| {
        let dist = gap.hypot(chord * (0.5 * from_zero).sin());
        let sine = if theta < FRAC_PI_2 { from_zero.sin() } else { to_pi.sin() };
        log_power_product(dist, kernel_power, sine, sin_power)
    };
    let scale = gap / xs.sqrt();
    if gap == 0.0 {
        // Integrand ~ θ^{κ+d-2} at the coincidence point.
        let p = kernel_power + sin_power;
        if p <= -1.0 {
            return Ok(Real::INFINITY);
        }
        return TanhSinh::for_endpoint_power(p, rule.tol).integrate_scalar(0.0, PI, integrand);
    }
    if scale >= 0.5 {
        return rule.integrate_scalar(0.0, PI, integrand);
    }
    // Near coincidence the integrand varies on the scale c = gap/√(xs).
    // Those pieces run in τ = θ/c, where
    // f dθ = c^{d-1} gap^κ · hypot(1, τ sinc(cτ/2))^κ (τ sinc(cτ))^{d-2} dτ.
    let sinc = |y: Real| if y == 0.0 { 1.0 } else { y.sin() / y };
    let ln_prefactor = (kernel_power + d as Real - 1.0) * gap.ln() - (d as Real - 1.0) / 2.0 * xs.ln();
    // Prefactor folded into the exponent: separately it can underflow while
    // the τ integral overflows.
    let scaled = |tau: Real| {
        let dist = (tau * sinc(0.5 * scale * tau)).hypot(1.0);
        let sine = tau * sinc(scale * tau);
        let angular = if sin_power == 0.0 { 0.0 } else { sin_power * sine.ln() };
        (ln_prefactor + kernel_power * dist.ln() + angular).exp()
    };
    let mut inner_sum = 0.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi * scale < 0.5 {
        inner_sum += rule.integrate_scalar(lo, hi, |tau, dl, _| scaled(if lo == 0.0 { dl } else { tau }))?;
        lo = hi;
        hi *= 64.0;
    }
    let theta_cut = lo * scale;
    let outer_part = if theta_cut == 0.0 {
        rule.integrate_scalar(0.0, PI, integrand)?
    } else {
        rule.integrate_scalar(theta_cut, PI, |t, _, dh| integrand(t, t, dh))?
    };
    Ok(inner_sum + outer_part)
}

/// `x^p y^q` without intermediate overflow.
fn log_power_product(x: Real, p: Real, y: Real, q: Real) -> Real {
    if q == 0.0 {
        return x.powf(p);
    }
    (p * x.ln() + q * y.ln()).exp()
}

/// `∫₀^π sin^{d-2}θ dθ = B((d-1)/2, 1/2)`.
fn angular_beta(d: usize) -> Result<Real, OracleError> {
    Ok(specfun::beta((d as Real - 1.0) / 2.0, 0.5)?)
}

/// Prefactor turning the angular factor into a `d`-dimensional integral.
fn shell_factor(d: usize) -> Result<Real, OracleError> {
    if d == 1 { Ok(1.0) } else { sphere_area(d - 2) }
}

fn check_integrable(kernel_power: Real, d: usize) -> Result<(), OracleError> {
    if d == 0 || !(kernel_power > -(d as Real)) {
        return Err(OracleError::NotIntegrable { power: kernel_power, d });
    }
    Ok(())
}

/// Radial subinterval of the potential integral, on one side of `x_r`.
#[derive(Debug, Clone, Copy)]
struct RadialPiece {
    lo: Real,
    hi: Real,
    below: bool,
}

impl RadialPiece {
    /// `(|x_r - s|, 1 - s)` from the distances to the piece ends, without
    /// cancellation when `s` is near `x_r` or 1.
    fn offsets(&self, x_r: Real, dl: Real, dh: Real) -> (Real, Real) {
        if self.below {
            let gap = (x_r - self.hi) + dh;
            (gap, (1.0 - x_r) + gap)
        } else {
            ((self.lo - x_r) + dl, (1.0 - self.hi) + dh)
        }
    }
}

/// Pieces split at `x_r`. When `x_r` is near 1 the weight singularity sits
/// just beyond the lower piece, so that piece is cut geometrically toward
/// `x_r` with lengths `(1-x_r)·4^j`.
fn radial_pieces(x_r: Real) -> Vec<RadialPiece> {
    if x_r <= 0.0 || x_r >= 1.0 {
        return vec![RadialPiece { lo: 0.0, hi: 1.0, below: x_r >= 1.0 }];
    }
    let mut pieces = vec![RadialPiece { lo: x_r, hi: 1.0, below: false }];
    let mut hi = x_r;
    let mut length = 1.0 - x_r;
    while length < 0.25 * x_r {
        let lo = x_r - length;
        pieces.push(RadialPiece { lo, hi, below: true });
        hi = lo;
        length *= 4.0;
    }
    pieces.push(RadialPiece { lo: 0.0, hi, below: true });
    pieces
}

/// `∫_{B₁} |x-y|^κ (1-|y|²)^a P_k^{(a,b)}(2|y|²-1) dy` for `k = 0..=n_max`
/// at `|x| = x_r`, absolute tolerance about `1e-9`.
pub fn potential_quadrature_all(
    kernel_power: Real,
    basis: &BasisSpec,
    n_max: usize,
    x_r: Real,
) -> Result<Vec<Real>, OracleError> {
    potential_quadrature_all_tol(kernel_power, basis, n_max, x_r, 1e-11)
}

/// [`potential_quadrature_all`] with a chosen radial tolerance; the angular
/// integrals run a hundred times tighter.
pub fn potential_quadrature_all_tol(
    kernel_power: Real,
    basis: &BasisSpec,
    n_max: usize,
    x_r: Real,
    tol: Real,
) -> Result<Vec<Real>, OracleError> {
    check_integrable(kernel_power, basis.d)?;
    if !(0.0..=1.0).contains(&x_r) {
        return Err(OracleError::OutsideBall(x_r));
    }
    let d = basis.d;
    let inner = TanhSinh::for_endpoint_power(0.0, 1e-2 * tol);
    let near = kernel_power + d as Real - 1.0;
    let weight_power = if basis.weighted { basis.a } else { 0.0 };
    // At x_r = 1 both singular factors sit on the same endpoint.
    let endpoint = if x_r == 1.0 {
        near.min(0.0) + weight_power.min(0.0)
    } else {
        near.min(weight_power).min(0.0)
    };
    let outer = TanhSinh::for_endpoint_power(endpoint, tol);
    let shell = shell_factor(d)?;
    let origin_angular = if d == 1 { 2.0 } else { angular_beta(d)? };
    let pieces = radial_pieces(x_r);
    let failure = std::cell::RefCell::new(None);
    let mut total = vec![0.0; n_max + 1];
    for piece in pieces {
        let res = outer.integrate(n_max + 1, piece.lo, piece.hi, |s, dl, dh, out| {
            let (gap, one_minus_s) = piece.offsets(x_r, dl, dh);
            let one_minus = one_minus_s * (1.0 + s);
            let weight = if basis.weighted { one_minus.powf(basis.a) } else { 1.0 };
            // At the origin the angular factor is s^κ times a constant; the
            // powers are merged so that s^κ cannot overflow on its own.
            let radial = if x_r == 0.0 {
                s.powf(near) * origin_angular
            } else {
                match angular_factor(kernel_power, d, x_r, s, gap, &inner) {
                    Ok(v) => s.powi(d as i32 - 1) * v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        return;
                    }
                }
            };
            let common = shell * weight * radial;
            let z = 1.0 - 2.0 * one_minus;
            for (o, p) in out.iter_mut().zip(jacobi_basis::jacobi_all(basis.a, basis.b, n_max, z)) {
                *o = common * p;
            }
        })?;
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        for (t, v) in total.iter_mut().zip(res.values) {
            *t += v;
        }
    }
    Ok(total)
}

/// Potential of the single basis element `n`; see [`potential_quadrature_all`].
pub fn potential_quadrature(kernel_power: Real, basis: &BasisSpec, n: usize, x_r: Real) -> Result<Real, OracleError> {
    Ok(potential_quadrature_all(kernel_power, basis, n, x_r)?[n])
}

/// Operator entries `U[k][n]`, `k < rows`, `n < cols`, by projecting the
/// quadrature potential onto the unweighted basis with a tanh-sinh outer
/// rule. Row-major `rows × cols`.
pub fn projected_entries_quadrature(
    kernel_power: Real,
    basis: &BasisSpec,
    rows: usize,
    cols: usize,
    tol: Real,
) -> Result<Vec<Real>, OracleError> {
    if rows == 0 || cols == 0 {
        return Ok(vec![]);
    }
    let d = basis.d;
    let unweighted = basis.unweighted();
    let failure = std::cell::RefCell::new(None);
    let outer = TanhSinh::for_endpoint_power(unweighted.a.min(0.0), tol);
    // Numerators in the first rows·cols slots, norms in the last `rows`.
    let res = outer.integrate(rows * cols + rows, 0.0, 1.0, |x, _, dh, out| {
        let one_minus = dh * (1.0 + x);
        let measure = x.powi(d as i32 - 1) * one_minus.powf(unweighted.a);
        let p = jacobi_basis::jacobi_all(unweighted.a, unweighted.b, rows - 1, 1.0 - 2.0 * one_minus);
        let v = match potential_quadrature_all_tol(kernel_power, basis, cols - 1, x, 10.0 * tol) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                return;
            }
        };
        for k in 0..rows {
            for n in 0..cols {
                out[k * cols + n] = measure * p[k] * v[n];
            }
            out[rows * cols + k] = measure * p[k] * p[k];
        }
    })?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (num, norms) = res.values.split_at(rows * cols);
    Ok((0..rows * cols).map(|i| num[i] / norms[i / cols]).collect())
}

/// Closed form at the origin:
/// `|S^{d-1}|/2 · (a+1)_n/n! · Σ_j (-n)_j (n+a+b+1)_j / ((a+1)_j j!) · B((κ+d)/2, a+j+1)`.
pub fn potential_at_origin(kernel_power: Real, basis: &BasisSpec, n: usize) -> Result<Real, OracleError> {
    check_integrable(kernel_power, basis.d)?;
    let (a, b) = (basis.a, basis.b);
    let p = (kernel_power + basis.d as Real) / 2.0;
    let mut sum = 0.0;
    for j in 0..=n {
        let mut term = LogProduct::one();
        term.mul_pochhammer(-(n as Real), j)
            .mul_pochhammer(n as Real + a + b + 1.0, j)
            .mul_gamma(p)?
            .mul_gamma(a + j as Real + 1.0)?
            .div_gamma(p + a + j as Real + 1.0)?
            .div_gamma(j as Real + 1.0)?;
        let mut den = LogProduct::one();
        den.mul_pochhammer(a + 1.0, j);
        sum += term.value() / den.value();
    }
    let lead = specfun::pochhammer(a + 1.0, n) / specfun::gamma(n as Real + 1.0)?;
    Ok(sphere_area(basis.d - 1)? / 2.0 * lead * sum)
}

/// `(1/α) ∫|x-y|^α ρ(y) dy - (1/β) ∫|x-y|^β ρ(y) dy` over the support ball
/// at physical radius `x_r ∈ [0, R]`.
pub fn combined_potential(measure: &Measure, x_r: Real, params: &ProblemParams) -> Result<Real, OracleError> {
    let radius = measure.radius;
    if !(0.0..=radius).contains(&x_r) {
        return Err(OracleError::OutsideBall(x_r / radius));
    }
    let coeffs = &measure.rho.coeffs;
    if coeffs.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    let basis = &measure.rho.basis;
    let n_max = coeffs.len() - 1;
    let d = params.d as Real;
    let unit = x_r / radius;
    let mut total = 0.0;
    for power in [params.alpha, params.beta] {
        let values = potential_quadrature_all(power, basis, n_max, unit)?;
        let series: Real = values.iter().zip(coeffs).map(|(v, c)| v * c).sum();
        let term = radius.powf(power + d) * series / power;
        total += if power == params.alpha { term } else { -term };
    }
    Ok(total)
}

/// Mass `∫_{B_R} ρ` of a measure by direct radial quadrature.
pub fn mass_quadrature(measure: &Measure) -> Result<Real, OracleError> {
    let d = measure.rho.basis.d;
    let basis = measure.rho.basis;
    let rule = TanhSinh::default();
    let coeffs = &measure.rho.coeffs;
    let n = coeffs.len().saturating_sub(1);
    let unit = rule.integrate_scalar(0.0, 1.0, |s, _, dh| {
        let one_minus = dh * (1.0 + s);
        let w = if basis.weighted { one_minus.powf(basis.a) } else { 1.0 };
        let p = jacobi_basis::jacobi_all(basis.a, basis.b, n, 1.0 - 2.0 * one_minus);
        let v: Real = p.iter().zip(coeffs).map(|(p, c)| p * c).sum();
        s.powi(d as i32 - 1) * w * v
    })?;
    Ok(sphere_area(d - 1)? * measure.radius.powi(d as i32) * unit)
}

/// Settings of the particle gradient flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleConfig {
    /// Stop once the largest particle speed falls below this.
    pub velocity_tol: Real,
    pub max_iterations: usize,
    pub initial_step: Real,
    pub max_step: Real,
    /// Positions beyond this norm abort the run.
    pub blow_up: Real,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            velocity_tol: 1e-8,
            max_iterations: 200_000,
            initial_step: 1e-3,
            max_step: 10.0,
            blow_up: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub d: usize,
    /// Flat `n_particles × d` coordinates.
    pub positions: Vec<Real>,
    pub mass: Real,
    pub step: Real,
    pub iterations: usize,
    pub time: Real,
    pub max_velocity: Real,
    pub energy: Real,
    pub converged: bool,
}

impl ParticleState {
    pub fn n_particles(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn particle(&self, i: usize) -> &[Real] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn radii(&self) -> Vec<Real> {
        self.positions
            .chunks(self.d)
            .map(|p| p.iter().map(|v| v * v).sum::<Real>().sqrt())
            .collect()
    }

    pub fn center_of_mass(&self) -> Vec<Real> {
        let n = self.n_particles() as Real;
        let mut c = vec![0.0; self.d];
        for p in self.positions.chunks(self.d) {
            for (c, v) in c.iter_mut().zip(p) {
                *c += v / n;
            }
        }
        c
    }
}

/// Uniform sample in the unit ball: direction by rejection from the cube,
/// radius by the `U^{1/d}` law.
pub fn uniform_in_ball(n: usize, d: usize, seed: u64) -> Vec<Real> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let dir: Vec<Real> = loop {
            let v: Vec<Real> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<Real>().sqrt();
            if norm > 1e-3 && norm <= 1.0 {
                break v.iter().map(|x| x / norm).collect();
            }
        };
        let r = rng.random::<Real>().powf(1.0 / d as Real);
        out.extend(dir.iter().map(|x| x * r));
    }
    out
}

/// `r2^{p/2}` with the common integer cases done exactly.
fn half_power(r2: Real, p: Real) -> Real {
    if p == 2.0 {
        r2
    } else if p == 4.0 {
        r2 * r2
    } else if p == 1.0 {
        r2.sqrt()
    } else {
        r2.powf(0.5 * p)
    }
}

/// Velocities `-(M/N) Σ_j ∇K(x_i - x_j)` and the interaction energy
/// `(M/N)²/2 Σ_{i≠j} K`, visiting each pair once.
fn velocities(params: &ProblemParams, positions: &[Real], n: usize) -> (Vec<Real>, Real) {
    let d = params.d;
    let (alpha, beta) = (params.alpha, params.beta);
    let m = params.mass / n as Real;
    let mut vel = vec![0.0; n * d];
    let mut energy = 0.0;
    let mut diff = vec![0.0; d];
    for i in 0..n {
        let xi = &positions[i * d..(i + 1) * d];
        for j in i + 1..n {
            let xj = &positions[j * d..(j + 1) * d];
            let mut r2 = 0.0;
            for k in 0..d {
                diff[k] = xi[k] - xj[k];
                r2 += diff[k] * diff[k];
            }
            let pa = half_power(r2, alpha);
            let pb = half_power(r2, beta);
            let coef = m * (pa - pb) / r2;
            for k in 0..d {
                vel[i * d + k] -= coef * diff[k];
                vel[j * d + k] += coef * diff[k];
            }
            energy += pa / alpha - pb / beta;
        }
    }
    (vel, m * m * energy)
}

fn max_speed(vel: &[Real], d: usize) -> Real {
    vel.chunks(d)
        .map(|v| v.iter().map(|x| x * x).sum::<Real>().sqrt())
        .fold(0.0, Real::max)
}

/// Energies remembered by the nonmonotone acceptance test.
const ENERGY_MEMORY: usize = 10;

/// First-order gradient flow of the pairwise energy from a seeded uniform
/// start. Explicit Euler steps take Barzilai–Borwein lengths, accepted when
/// the energy stays below the recent maximum less a sufficient-decrease
/// margin and halved otherwise. Stops when the largest speed is below
/// `velocity_tol`; hitting `max_iterations` returns the state with
/// `converged = false`.
pub fn particle_simulate(
    params: &ProblemParams,
    n_particles: usize,
    seed: u64,
    config: &ParticleConfig,
) -> Result<ParticleState, OracleError> {
    if n_particles < 1 {
        return Err(OracleError::TooFewParticles { need: 1, got: n_particles });
    }
    if !(config.initial_step > 0.0 && config.max_step >= config.initial_step && config.velocity_tol > 0.0) {
        return Err(OracleError::InvalidSetting("steps and velocity tolerance must be positive".into()));
    }
    let d = params.d;
    let mut positions = uniform_in_ball(n_particles, d, seed);
    let (mut vel, mut energy) = velocities(params, &positions, n_particles);
    let mut recent = std::collections::VecDeque::from([energy]);
    let mut step = config.initial_step;
    let mut time = 0.0;
    let mut iterations = 0;
    let mut speed = max_speed(&vel, d);
    let mut converged = speed < config.velocity_tol;
    while !converged && iterations < config.max_iterations {
        let trial: Vec<Real> = positions.iter().zip(&vel).map(|(x, v)| x + step * v).collect();
        let (trial_vel, trial_energy) = velocities(params, &trial, n_particles);
        let v2: Real = vel.iter().map(|v| v * v).sum();
        let reference = recent.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        if !(trial_energy <= reference - 1e-4 * step * v2) || !trial_energy.is_finite() {
            step *= 0.5;
            if step < 1e-300 {
                break;
            }
            continue;
        }
        // BB1 length sᵀs / sᵀy with s = step·v and y = -(v_new - v).
        let mut ss = 0.0;
        let mut sy = 0.0;
        for (v_old, v_new) in vel.iter().zip(&trial_vel) {
            let sk = step * v_old;
            ss += sk * sk;
            sy -= sk * (v_new - v_old);
        }
        iterations += 1;
        time += step;
        positions = trial;
        vel = trial_vel;
        energy = trial_energy;
        if positions.iter().any(|x| x.abs() > config.blow_up || !x.is_finite()) {
            return Err(OracleError::BlowUp { limit: config.blow_up, iteration: iterations });
        }
        recent.push_back(energy);
        if recent.len() > ENERGY_MEMORY {
            recent.pop_front();
        }
        speed = max_speed(&vel, d);
        converged = speed < config.velocity_tol;
        step = if sy > 0.0 { (ss / sy).clamp(config.initial_step * 1e-3, config.max_step) } else { config.max_step };
    }
    Ok(ParticleState {
        d,
        positions,
        mass: params.mass,
        step,
        iterations,
        time,
        max_velocity: speed,
        energy,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialHistogram {
    pub edges: Vec<Real>,
    pub centers: Vec<Real>,
    /// Mass per unit volume in each shell.
    pub density: Vec<Real>,
    /// Mass in each shell.
    pub mass: Vec<Real>,
}

/// Volume `π^{d/2}/Γ(d/2+1) r^d` of a `d`-ball.
pub fn ball_volume(d: usize, r: Real) -> Result<Real, OracleError> {
    let h = d as Real / 2.0;
    Ok(PI.powf(h) / specfun::gamma(h + 1.0)? * r.powi(d as i32))
}

/// Shell-volume-normalised radial density on `bins` equal shells over
/// `[0, outer]`; `outer` defaults to the largest particle radius. Each
/// particle carries mass `M/N`.
pub fn radial_histogram(state: &ParticleState, bins: usize, outer: Option<Real>) -> Result<RadialHistogram, OracleError> {
    if bins == 0 {
        return Err(OracleError::InvalidSetting("need at least one bin".into()));
    }
    let radii = state.radii();
    let outer = outer.unwrap_or_else(|| radii.iter().cloned().fold(0.0, Real::max));
    if !(outer > 0.0) {
        return Err(OracleError::InvalidSetting("outer radius must be positive".into()));
    }
    let width = outer / bins as Real;
    let per = state.mass / radii.len() as Real;
    let mut mass = vec![0.0; bins];
    for r in radii {
        if r > outer {
            continue;
        }
        let k = ((r / width) as usize).min(bins - 1);
        mass[k] += per;
    }
    let edges: Vec<Real> = (0..=bins).map(|k| width * k as Real).collect();
    let mut density = Vec::with_capacity(bins);
    for k in 0..bins {
        let vol = ball_volume(state.d, edges[k + 1])? - ball_volume(state.d, edges[k])?;
        density.push(mass[k] / vol);
    }
    Ok(RadialHistogram {
        centers: edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        edges,
        density,
        mass,
    })
}

/// Mass of a radial density in the shell `[r0, r1]`.
pub fn shell_mass<F: Fn(Real) -> Real>(density: F, d: usize, r0: Real, r1: Real) -> Result<Real, OracleError> {
    let rule = TanhSinh { tol: 1e-10, ..Default::default() };
    let v = rule.integrate_scalar(r0, r1, |r, _, _| r.powi(d as i32 - 1) * density(r))?;
    Ok(sphere_area(d - 1)? * v)
}

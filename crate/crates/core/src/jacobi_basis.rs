//! Radial Jacobi bases `P_n^{(a,b)}(2r²-1)` on the unit ball, optionally
//! carrying the weight `(1-r²)^a`, with `b = (d-2)/2`.
//!
//! Besides pointwise evaluation this module provides the tridiagonal
//! multiplication-by-`r²` operator, parameter-raising conversions, a
//! Gauss–Jacobi rule, projection of callables onto the basis, and the mass
//! functional (only the 0-th weighted coefficient carries mass).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::specfun::{self, LogProduct, Real, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("kernel power {power} must exceed -d = -{d}")]
    PowerOutOfDomain { power: Real, d: usize },
    #[error("Jacobi parameters (a = {a}, b = {b}) must both exceed -1")]
    Inadmissible { a: Real, b: Real },
    #[error("radius {0} outside the closed unit ball")]
    OutsideBall(Real),
    #[error("truncation size {got} too small, need at least {min}")]
    TooSmall { got: usize, min: usize },
    #[error("incompatible bases: {0}")]
    Incompatible(String),
    #[error("mass functional requires a weighted basis")]
    Unweighted,
    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Special(#[from] SpecfunError),
}

/// Identifies `(1-r²)^a P_n^{(a,b)}(2r²-1)` on the unit ball in `R^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub d: usize,
    pub ell: usize,
    pub a: Real,
    pub b: Real,
    pub weighted: bool,
}

/// Tolerance for declaring a Jacobi `a` parameter too close to `-1`.
pub const ADMISSIBILITY_MARGIN: Real = 1e-8;

impl BasisSpec {
    /// Basis with explicit first parameter `a`.
    pub fn new(d: usize, ell: usize, a: Real, weighted: bool) -> Result<Self, BasisError> {
        if d == 0 {
            return Err(BasisError::ZeroDimension);
        }
        let b = (d as Real - 2.0) / 2.0;
        if !(a > -1.0 + ADMISSIBILITY_MARGIN) || !a.is_finite() {
            return Err(BasisError::Inadmissible { a, b });
        }
        Ok(Self {
            d,
            ell,
            a,
            b,
            weighted,
        })
    }

    /// Weighted basis matched to `power` with weight index `ell`:
    /// `a = ell - (power + d)/2`.
    pub fn for_power(power: Real, d: usize, ell: usize) -> Result<Self, BasisError> {
        if d == 0 {
            return Err(BasisError::ZeroDimension);
        }
        if !(power > -(d as Real)) {
            return Err(BasisError::PowerOutOfDomain { power, d });
        }
        Self::new(d, ell, ell as Real - (power + d as Real) / 2.0, true)
    }

    /// The kernel power whose potential this basis makes `2ell+1`-banded.
    pub fn matched_power(&self) -> Real {
        2.0 * self.ell as Real - self.d as Real - 2.0 * self.a
    }

    pub fn unweighted(&self) -> Self {
        Self {
            weighted: false,
            ..*self
        }
    }

    pub fn as_weighted(&self) -> Self {
        Self {
            weighted: true,
            ..*self
        }
    }

    /// `(1-r²)^a` with the subtraction done as `(1-r)(1+r)`.
    pub fn weight(&self, r: Real) -> Real {
        ((1.0 - r) * (1.0 + r)).powf(self.a)
    }

    fn same_family(&self, other: &Self) -> bool {
        self.d == other.d && self.b == other.b
    }
}

/// Weighted basis whose `α`-operator has `2ℓ+1` bands:
/// `ℓ = max(0, ⌊(α+d)/2⌋)`, `a = ℓ - (α+d)/2 ∈ (-1, 0]`.
pub fn choose_basis(alpha: Real, d: usize) -> Result<BasisSpec, BasisError> {
    if d == 0 {
        return Err(BasisError::ZeroDimension);
    }
    let half = (alpha + d as Real) / 2.0;
    if !(half > 0.0) {
        return Err(BasisError::PowerOutOfDomain { power: alpha, d });
    }
    let ell = half.floor().max(0.0) as usize;
    BasisSpec::for_power(alpha, d, ell)
}

/// Finite coefficient sequence in a given basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub coeffs: Vec<Real>,
    pub basis: BasisSpec,
}

impl CoefficientVector {
    pub fn new(coeffs: Vec<Real>, basis: BasisSpec) -> Result<Self, BasisError> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(BasisError::NonFinite(i));
        }
        Ok(Self { coeffs, basis })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value of the expansion at unit-ball radius `r`.
    pub fn evaluate(&self, r: Real) -> Result<Real, BasisError> {
        eval_series(&self.basis, &self.coeffs, r)
    }
}

/// Classical three-term coefficients `(A_n, B_n, C_n)` of
/// `P_{n+1} = (A_n t + B_n) P_n - C_n P_{n-1}`, valid for `n ≥ 1`.
pub fn recurrence_coeffs(a: Real, b: Real, n: usize) -> (Real, Real, Real) {
    let nf = n as Real;
    let s = 2.0 * nf + a + b;
    let an = (s + 1.0) * (s + 2.0) / (2.0 * (nf + 1.0) * (nf + a + b + 1.0));
    let bn = (a * a - b * b) * (s + 1.0) / (2.0 * (nf + 1.0) * (nf + a + b + 1.0) * s);
    let cn = (nf + a) * (nf + b) * (s + 2.0) / ((nf + 1.0) * (nf + a + b + 1.0) * s);
    (an, bn, cn)
}

/// `P_0..P_{n_max}` at `t ∈ [-1, 1]` by forward recurrence.
pub fn jacobi_all(a: Real, b: Real, n_max: usize, t: Real) -> Vec<Real> {
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(1.0);
    if n_max == 0 {
        return p;
    }
    p.push(((a + b + 2.0) * t + (a - b)) / 2.0);
    for n in 1..n_max {
        let (an, bn, cn) = recurrence_coeffs(a, b, n);
        let next = (an * t + bn) * p[n] - cn * p[n - 1];
        p.push(next);
    }
    p
}

pub fn jacobi(a: Real, b: Real, n: usize, t: Real) -> Real {
    jacobi_all(a, b, n, t)[n]
}

/// Explicit monomial representation in `z = (1+t)/2`:
/// `Σ_k (-1)^{n+k} (n+a+b+1)_k (b+k+1)_{n-k} / (k!(n-k)!) z^k`.
pub fn jacobi_explicit(a: Real, b: Real, n: usize, z: Real) -> Real {
    let mut sum = 0.0;
    let mut fact_k = 1.0;
    for k in 0..=n {
        if k > 0 {
            fact_k *= k as Real;
        }
        let fact_nk: Real = (1..=n - k).map(|j| j as Real).product();
        let sign = if (n + k).is_multiple_of(2) { 1.0 } else { -1.0 };
        sum += sign * specfun::pochhammer(n as Real + a + b + 1.0, k)
            * specfun::pochhammer(b + k as Real + 1.0, n - k)
            / (fact_k * fact_nk)
            * z.powi(k as i32);
    }
    sum
}

fn check_radius(r: Real) -> Result<(), BasisError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(BasisError::OutsideBall(r))
    }
}

/// `P_n^{(a,b)}(2r²-1)`, times `(1-r²)^a` if the basis is weighted.
pub fn eval_radial(spec: &BasisSpec, n: usize, r: Real) -> Result<Real, BasisError> {
    check_radius(r)?;
    let p = jacobi(spec.a, spec.b, n, 2.0 * r * r - 1.0);
    Ok(if spec.weighted { p * spec.weight(r) } else { p })
}

/// `Σ c_n P_n(2r²-1)` (times the weight if the basis is weighted).
pub fn eval_series(spec: &BasisSpec, coeffs: &[Real], r: Real) -> Result<Real, BasisError> {
    check_radius(r)?;
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    let p = jacobi_all(spec.a, spec.b, coeffs.len() - 1, 2.0 * r * r - 1.0);
    let s: Real = coeffs.iter().zip(&p).map(|(c, p)| c * p).sum();
    Ok(if spec.weighted { s * spec.weight(r) } else { s })
}

/// Tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// `sub[i] = X[i+1, i]`
    pub sub: Vec<Real>,
    pub diag: Vec<Real>,
    /// `sup[i] = X[i, i+1]`
    pub sup: Vec<Real>,
}

impl Tridiagonal {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[Real]) -> Vec<Real> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<Real> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.sub[i];
                m[(i, i + 1)] = self.sup[i];
            }
        }
        m
    }
}

/// `X` with `r²·Σ f_n P_n = Σ (X f)_k P_k` in the unweighted basis.
pub fn multiplication_operator(spec: &BasisSpec, n: usize) -> Result<Tridiagonal, BasisError> {
    if n < 2 {
        return Err(BasisError::TooSmall { got: n, min: 2 });
    }
    let (a, b) = (spec.a, spec.b);
    let mut sub = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n - 1];
    // r² P_0 = (P_1 + (b+1)) / (a+b+2)
    diag[0] = (b + 1.0) / (a + b + 2.0);
    sub[0] = 1.0 / (a + b + 2.0);
    for k in 1..n {
        let (an, bn, cn) = recurrence_coeffs(a, b, k);
        let two_a = 2.0 * an;
        diag[k] = -(bn - an) / two_a;
        sup[k - 1] = cn / two_a;
        if k + 1 < n {
            sub[k] = 1.0 / two_a;
        }
    }
    Ok(Tridiagonal { sub, diag, sup })
}

/// Converts coefficients in the `a` basis to the `a + k` basis (same `b`).
pub fn conversion_operator(
    from: &BasisSpec,
    to: &BasisSpec,
    n: usize,
) -> Result<DMatrix<Real>, BasisError> {
    if !from.same_family(to) {
        return Err(BasisError::Incompatible(format!(
            "b/d differ: ({}, {}) vs ({}, {})",
            from.b, from.d, to.b, to.d
        )));
    }
    let shift = to.a - from.a;
    let k = shift.round();
    if (shift - k).abs() > 1e-12 || k < 0.0 {
        return Err(BasisError::Incompatible(format!(
            "parameter shift {shift} is not a non-negative integer"
        )));
    }
    let mut total = DMatrix::identity(n, n);
    let b = from.b;
    for step in 0..k as usize {
        let a = from.a + step as Real;
        let mut s = DMatrix::zeros(n, n);
        for j in 0..n {
            let jf = j as Real;
            let den = 2.0 * jf + a + b + 1.0;
            if j == 0 {
                s[(0, 0)] = 1.0;
                continue;
            }
            s[(j, j)] = (jf + a + b + 1.0) / den;
            s[(j - 1, j)] = -(jf + b) / den;
        }
        total = s * total;
    }
    Ok(total)
}

/// `∫_{-1}^{1} (1-t)^a (1+t)^b P_k(t)² dt`.
pub fn norm_sq_t(a: Real, b: Real, k: usize) -> Result<Real, BasisError> {
    let kf = k as Real;
    let mut p = LogProduct::one();
    p.mul_gamma(kf + a + 1.0)?.mul_gamma(kf + b + 1.0)?;
    if k == 0 {
        p.mul_rgamma(a + b + 2.0);
    } else {
        p.div(2.0 * kf + a + b + 1.0)
            .div_gamma(kf + a + b + 1.0)?
            .div_gamma(kf + 1.0)?;
    }
    Ok(p.value() * 2f64.powf(a + b + 1.0))
}

/// Same norm in the `z = r²` variable against `(1-z)^a z^b dz`.
pub fn norm_sq_z(a: Real, b: Real, k: usize) -> Result<Real, BasisError> {
    Ok(norm_sq_t(a, b, k)? / 2f64.powf(a + b + 1.0))
}

/// Gauss rule for `∫_{-1}^{1} (1-t)^a (1+t)^b f(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Real>,
    pub weights: Vec<Real>,
    pub a: Real,
    pub b: Real,
}

impl QuadratureRule {
    pub fn integrate<F: Fn(Real) -> Real>(&self, f: F) -> Real {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Golub–Welsch nodes, Newton-polished, with Christoffel-function weights.
pub fn gauss_jacobi_rule(a: Real, b: Real, n_nodes: usize) -> Result<QuadratureRule, BasisError> {
    if !(a > -1.0 && b > -1.0) {
        return Err(BasisError::Inadmissible { a, b });
    }
    if n_nodes == 0 {
        return Err(BasisError::TooSmall { got: 0, min: 1 });
    }
    let n = n_nodes;
    let mut jm = DMatrix::<Real>::zeros(n, n);
    for k in 0..n {
        let kf = k as Real;
        let s = 2.0 * kf + a + b;
        jm[(k, k)] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let j = kf + 1.0;
            let s = 2.0 * j + a + b;
            let beta_sq = if j == 1.0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
            } else {
                4.0 * j * (j + a) * (j + b) * (j + a + b) / (s * s * (s + 1.0) * (s - 1.0))
            };
            jm[(k, k + 1)] = beta_sq.sqrt();
            jm[(k + 1, k)] = beta_sq.sqrt();
        }
    }
    let eig = SymmetricEigen::new(jm);
    let mut nodes: Vec<Real> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());

    for t in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d) = jacobi_with_derivative(a, b, n, *t);
            if d == 0.0 {
                break;
            }
            let step = p / d;
            let cand = *t - step;
            if cand > -1.0 && cand < 1.0 {
                *t = cand;
            }
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    // Christoffel numbers: 1 / Σ_k P_k(t)² / h_k
    let inv_norms: Vec<Real> = (0..n)
        .map(|k| norm_sq_t(a, b, k).map(|h| 1.0 / h))
        .collect::<Result<_, _>>()?;
    let weights = nodes
        .iter()
        .map(|&t| {
            let p = jacobi_all(a, b, n - 1, t);
            1.0 / p.iter().zip(&inv_norms).map(|(p, h)| p * p * h).sum::<Real>()
        })
        .collect();
    Ok(QuadratureRule { nodes, weights, a, b })
}

fn jacobi_with_derivative(a: Real, b: Real, n: usize, t: Real) -> (Real, Real) {
    let p = jacobi(a, b, n, t);
    let d = if n == 0 {
        0.0
    } else {
        0.5 * (n as Real + a + b + 1.0) * jacobi(a + 1.0, b + 1.0, n - 1, t)
    };
    (p, d)
}

/// Default projection node count for `n` coefficients.
pub fn default_projection_nodes(n: usize) -> usize {
    2 * (n + 40)
}

/// Result of [`project`]: coefficients plus a decay diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coeffs: CoefficientVector,
    /// Largest magnitude among the last quarter of coefficients relative to
    /// the largest overall.
    pub tail_ratio: Real,
}

/// Expands `f(r)` on `[0, 1]` in the unweighted basis of `spec`; for a
/// weighted `spec`, `f` is divided by the weight first so that the returned
/// coefficients (tagged with `spec`) reproduce `f`.
pub fn project<F: Fn(Real) -> Real>(
    f: F,
    spec: &BasisSpec,
    n: usize,
    n_nodes: Option<usize>,
) -> Result<Projection, BasisError> {
    let rule = gauss_jacobi_rule(spec.a, spec.b, n_nodes.unwrap_or(default_projection_nodes(n)))?;
    let norms: Vec<Real> = (0..n)
        .map(|k| norm_sq_t(spec.a, spec.b, k))
        .collect::<Result<_, _>>()?;
    let mut c = vec![0.0; n];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let r = ((1.0 + t) / 2.0).sqrt();
        let mut fv = f(r);
        if spec.weighted {
            fv /= ((1.0 - t) / 2.0).powf(spec.a);
        }
        let p = jacobi_all(spec.a, spec.b, n.saturating_sub(1), t);
        for k in 0..n {
            c[k] += w * fv * p[k];
        }
    }
    for k in 0..n {
        c[k] /= norms[k];
    }
    let max = c.iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
    let tail = c[n - n / 4..].iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
    let tail_ratio = if max > 0.0 { tail / max } else { 0.0 };
    Ok(Projection {
        coeffs: CoefficientVector::new(c, *spec)?,
        tail_ratio,
    })
}

/// Mass of `Σ ρ_n (1-r²)^a P_n` on the ball of radius `R`:
/// `R^d π^{d/2} Γ(a+1)/Γ(a+d/2+1) ρ_0`.
pub fn mass_functional(rho: &CoefficientVector, radius: Real) -> Result<Real, BasisError> {
    if !rho.basis.weighted {
        return Err(BasisError::Unweighted);
    }
    Ok(unit_mass_factor(&rho.basis)? * radius.powi(rho.basis.d as i32) * rho.coeffs.first().copied().unwrap_or(0.0))
}

/// `π^{d/2} Γ(a+1)/Γ(a+d/2+1)`, the mass of the weight on the unit ball.
pub fn unit_mass_factor(spec: &BasisSpec) -> Result<Real, BasisError> {
    let d = spec.d as Real;
    let mut p = LogProduct::one();
    p.mul(PI.powf(d / 2.0))
        .mul_gamma(spec.a + 1.0)?
        .mul_rgamma(spec.a + d / 2.0 + 1.0);
    Ok(p.value())
}

/// Column-wise Vandermonde-free solve used by tests: coefficients of a
/// polynomial in `z` given its monomial coefficients.
pub fn monomial_to_jacobi(spec: &BasisSpec, monomials: &[Real]) -> Result<Vec<Real>, BasisError> {
    let n = monomials.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut out = DVector::zeros(n);
    // z^j = X^j e_0
    let x = multiplication_operator(spec, n.max(2))?;
    let mut power = vec![0.0; n.max(2)];
    power[0] = 1.0;
    for (j, &m) in monomials.iter().enumerate() {
        if j > 0 {
            power = x.apply(&power);
        }
        for k in 0..n {
            out[k] += m * power[k];
        }
    }
    Ok(out.iter().copied().collect())
}

//! Power-law potential operators `U` mapping coefficients in the weighted
//! basis `(1-r²)^a P_n^{(a,b)}` to coefficients of `∫|x-y|^κ ρ(y) dy` in the
//! unweighted `P_k^{(a,b)}` basis on the unit ball.
//!
//! The potential of weighted element `n` is
//! `pref_n · ₂F₁(n - κ/2, -a - n - (κ+d)/2; d/2; |x|²)`; its Jacobi
//! coefficients follow in closed form from Gauss's summation, which is what
//! [`potential_column`] evaluates. [`build_operator`] seeds columns 0 and 1
//! with it and marches the three-term column recurrence for the rest.

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::jacobi_basis::{self, BasisError, BasisSpec};
use crate::specfun::{self, HypergeometricArgs, LogProduct, Real, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("kernel power {power} outside ({lo}, {hi}) required by {what}")]
    OutOfRange {
        what: &'static str,
        power: Real,
        lo: Real,
        hi: Real,
    },
    #[error("potential of the weighted basis diverges: 2a + κ + d + 1 = {0} <= 0")]
    Divergent(Real),
    #[error("seed columns exist only for n in {{0, 1}}, got {0}")]
    SeedIndex(usize),
    #[error("recurrence degenerate at n = {n}: factor {factor} vanishes")]
    Degenerate { n: usize, factor: &'static str },
    #[error("truncation size {0} too small, need at least 3")]
    TooSmall(usize),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Special(#[from] SpecfunError),
}

/// Margin kept from the endpoints of the open parameter intervals.
pub const RANGE_MARGIN: Real = 1e-8;

fn check_open(what: &'static str, power: Real, lo: Real, hi: Real) -> Result<(), PotentialError> {
    if power > lo + RANGE_MARGIN && power < hi - RANGE_MARGIN {
        Ok(())
    } else {
        Err(PotentialError::OutOfRange { what, power, lo, hi })
    }
}

/// Eigenvalue of the `ℓ = 0` operator on `P_n^{(-(α+d)/2, (d-2)/2)}`:
/// `π^{d/2}Γ((α+d)/2)Γ(n-α/2)Γ(1-(α+d)/2+n) / (Γ(-α/2)Γ(d/2+n) n!)`.
pub fn diagonal_entry(alpha: Real, d: usize, n: usize) -> Result<Real, PotentialError> {
    let df = d as Real;
    check_open("the diagonal operator", alpha, -df, 2.0 - df)?;
    let nf = n as Real;
    let mut p = LogProduct::one();
    p.mul(PI.powf(df / 2.0))
        .mul_gamma((alpha + df) / 2.0)?
        .mul_gamma(nf - alpha / 2.0)?
        .mul_gamma(1.0 - (alpha + df) / 2.0 + nf)?
        .mul_rgamma(-alpha / 2.0)
        .div_gamma(df / 2.0 + nf)?
        .div_gamma(nf + 1.0)?;
    Ok(p.value())
}

/// Lemma-type constant `π^{d/2+1}/(Γ(d/2) sin((α+d)π/2))`: the potential of
/// `(1-|y|²)^{-(α+d)/2}` on the unit ball.
pub fn riesz_ball_constant(alpha: Real, d: usize) -> Real {
    let df = d as Real;
    PI.powf(df / 2.0 + 1.0) * specfun::reciprocal_gamma(df / 2.0) / ((alpha + df) * PI / 2.0).sin()
}

/// Coefficients `(κ_a, κ_b, κ_c)` landing on rows `n-1, n, n+1` for the
/// `ℓ = 1` basis, `α ∈ (2-d, 4-d)`. `κ_a` is zero at `n = 0`.
pub fn tridiagonal_column(alpha: Real, d: usize, n: usize) -> Result<(Real, Real, Real), PotentialError> {
    let df = d as Real;
    check_open("the tridiagonal operator", alpha, 2.0 - df, 4.0 - df)?;
    let nf = n as Real;
    let common = |p: &mut LogProduct| -> Result<(), SpecfunError> {
        p.mul(PI.powf(df / 2.0))
            .mul_gamma((alpha + df) / 2.0)?
            .mul_gamma(nf - (alpha + df) / 2.0 + 2.0)?
            .mul_rgamma(-alpha / 2.0)
            .div_gamma(nf + 1.0)?;
        Ok(())
    };
    let ka = if n == 0 {
        0.0
    } else {
        let mut p = LogProduct::one();
        common(&mut p)?;
        p.mul(-4.0)
            .mul_gamma(nf - alpha / 2.0)?
            .div((alpha - 4.0 * nf - 2.0) * (alpha - 4.0 * nf))
            .mul_rgamma(df / 2.0 + nf - 1.0);
        p.value()
    };
    let mut p = LogProduct::one();
    common(&mut p)?;
    p.mul(8.0)
        .mul_gamma(nf - alpha / 2.0 + 1.0)?
        .div((alpha - 4.0 * nf) * (alpha - 4.0 * (nf + 1.0)))
        .div_gamma(df / 2.0 + nf)?;
    let kb = p.value();
    let mut p = LogProduct::one();
    common(&mut p)?;
    p.mul(-4.0)
        .mul_gamma(nf - alpha / 2.0 + 2.0)?
        .div((alpha - 4.0 * nf - 2.0) * (alpha - 4.0 * (nf + 1.0)))
        .div_gamma(df / 2.0 + nf + 1.0)?;
    Ok((ka, kb, p.value()))
}

fn check_convergent(kernel_power: Real, basis: &BasisSpec) -> Result<(), PotentialError> {
    let d = basis.d as Real;
    if !(kernel_power > -d) {
        return Err(PotentialError::OutOfRange {
            what: "a locally integrable kernel",
            power: kernel_power,
            lo: -d,
            hi: Real::INFINITY,
        });
    }
    let s = 2.0 * basis.a + kernel_power + d + 1.0;
    if !(s > 0.0) {
        return Err(PotentialError::Divergent(s));
    }
    Ok(())
}

/// Prefactor of the hypergeometric form of the potential of weighted
/// element `n`: `π^{d/2}Γ((κ+d)/2)Γ(a+n+1)(1+κ/2-n)_n / (Γ(d/2) n! Γ((κ+d)/2+a+n+1))`.
pub fn hypergeometric_prefactor(kernel_power: Real, basis: &BasisSpec, n: usize) -> Result<LogProduct, PotentialError> {
    let d = basis.d as Real;
    let nf = n as Real;
    let half = (kernel_power + d) / 2.0;
    let mut p = LogProduct::one();
    p.mul(PI.powf(d / 2.0))
        .mul_gamma(half)?
        .mul_gamma(basis.a + nf + 1.0)?
        .mul_pochhammer(1.0 + kernel_power / 2.0 - nf, n)
        .div_gamma(d / 2.0)?
        .div_gamma(nf + 1.0)?
        .mul_rgamma(half + basis.a + nf + 1.0);
    Ok(p)
}

/// Upper parameters `(n - κ/2, -a - n - (κ+d)/2)` of the hypergeometric form.
pub fn hypergeometric_parameters(kernel_power: Real, basis: &BasisSpec, n: usize) -> (Real, Real) {
    let nf = n as Real;
    (
        nf - kernel_power / 2.0,
        -basis.a - nf - (kernel_power + basis.d as Real) / 2.0,
    )
}

/// Potential of weighted element `n` at unit-ball radius `r`, from the
/// hypergeometric closed form.
pub fn potential_hypergeometric(kernel_power: Real, basis: &BasisSpec, n: usize, r: Real) -> Result<Real, PotentialError> {
    check_convergent(kernel_power, basis)?;
    let pref = hypergeometric_prefactor(kernel_power, basis, n)?;
    if pref.sign() == 0.0 {
        return Ok(0.0);
    }
    let (p, q) = hypergeometric_parameters(kernel_power, basis, n);
    let f = specfun::gauss_2f1(HypergeometricArgs::new(p, q, basis.d as Real / 2.0, r * r))?;
    Ok(pref.value() * f)
}

/// Running `(x)_k` kept as log-magnitude, sign and a zero flag.
struct RunningPochhammer {
    x: Real,
    k: usize,
    ln: Real,
    sign: Real,
}

impl RunningPochhammer {
    fn new(x: Real) -> Self {
        Self { x, k: 0, ln: 0.0, sign: 1.0 }
    }

    fn advance(&mut self) {
        let f = self.x + self.k as Real;
        if f == 0.0 {
            self.sign = 0.0;
        } else {
            self.ln += f.abs().ln();
            self.sign *= f.signum();
        }
        self.k += 1;
    }
}

/// Rows `0..rows` of column `n` of the operator with kernel power `κ` in the
/// given weighted basis, by Gauss summation of the hypergeometric form:
/// entry `k` is `pref_n · Γ(b+1)(A)_k(B)_k Γ(2a+κ+d+1)(2k+a+b+1)Γ(a+b+k+1)
/// / (Γ(b+k+1)Γ(a+b+k+2-A)Γ(a+b+k+2-B))`.
pub fn potential_column(kernel_power: Real, basis: &BasisSpec, n: usize, rows: usize) -> Result<Vec<Real>, PotentialError> {
    check_convergent(kernel_power, basis)?;
    let pref = hypergeometric_prefactor(kernel_power, basis, n)?;
    let mut out = vec![0.0; rows];
    if pref.sign() == 0.0 {
        return Ok(out);
    }
    let (a, b, d) = (basis.a, basis.b, basis.d as Real);
    let (pa, pb) = hypergeometric_parameters(kernel_power, basis, n);
    let mut base = pref;
    base.mul_gamma(b + 1.0)?.mul_gamma(2.0 * a + kernel_power + d + 1.0)?;
    let mut poch_a = RunningPochhammer::new(pa);
    let mut poch_b = RunningPochhammer::new(pb);
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            poch_a.advance();
            poch_b.advance();
        }
        if poch_a.sign == 0.0 || poch_b.sign == 0.0 {
            continue;
        }
        let kf = k as Real;
        let mut ln = base.ln_abs() + poch_a.ln + poch_b.ln;
        let mut sign = base.sign() * poch_a.sign * poch_b.sign;
        // (2k+a+b+1)Γ(a+b+k+1) = Γ(a+b+k+2)/(a+b+k+1)·(2k+a+b+1), written to
        // survive a+b+1 = 0 at k = 0.
        let mut tail = LogProduct::one();
        if k == 0 {
            tail.mul_gamma(a + b + 2.0)?;
        } else {
            tail.mul(2.0 * kf + a + b + 1.0).mul_gamma(a + b + kf + 1.0)?;
        }
        tail.div_gamma(b + kf + 1.0)?
            .mul_rgamma(a + b + kf + 2.0 - pa)
            .mul_rgamma(a + b + kf + 2.0 - pb);
        if tail.sign() == 0.0 {
            continue;
        }
        ln += tail.ln_abs();
        sign *= tail.sign();
        *slot = sign * ln.exp();
    }
    Ok(out)
}

/// Seed columns `n ∈ {0, 1}` of the `β`-operator in `basis`.
pub fn seed_column(beta: Real, basis: &BasisSpec, n: usize, rows: usize) -> Result<Vec<Real>, PotentialError> {
    if n > 1 {
        return Err(PotentialError::SeedIndex(n));
    }
    potential_column(beta, basis, n, rows)
}

/// Column `n` obtained by projecting the prefactor-scaled ₂F₁ onto the
/// unweighted basis with Gauss–Jacobi quadrature.
pub fn projected_column(
    kernel_power: Real,
    basis: &BasisSpec,
    n: usize,
    rows: usize,
    n_nodes: Option<usize>,
) -> Result<Vec<Real>, PotentialError> {
    check_convergent(kernel_power, basis)?;
    let pref = hypergeometric_prefactor(kernel_power, basis, n)?;
    if pref.sign() == 0.0 {
        return Ok(vec![0.0; rows]);
    }
    let (p, q) = hypergeometric_parameters(kernel_power, basis, n);
    let c = basis.d as Real / 2.0;
    let err = std::cell::RefCell::new(None);
    let proj = jacobi_basis::project(
        |r| match specfun::gauss_2f1(HypergeometricArgs::new(p, q, c, r * r)) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &basis.unweighted(),
        rows,
        n_nodes,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e.into());
    }
    let v = pref.value();
    Ok(proj.coeffs.coeffs.iter().map(|c| c * v).collect())
}

/// `(𝔠_a, 𝔠_b, 𝔠_c)` with `col_{n+1} = (𝔠_a X + 𝔠_b I) col_n + 𝔠_c col_{n-1}`,
/// for the `β`-operator in the basis `a = m - (α+d)/2`.
pub fn column_recurrence_coeffs(
    alpha: Real,
    beta: Real,
    d: usize,
    m: usize,
    n: usize,
) -> Result<(Real, Real, Real), PotentialError> {
    if n == 0 {
        return Err(PotentialError::Degenerate { n, factor: "n" });
    }
    let (df, mf, nf) = (d as Real, m as Real, n as Real);
    let s = -alpha + 2.0 * mf; // = 2a + d
    let denominators = [
        ("n + 1", nf + 1.0),
        ("-α+β+2m+2n+2", s + beta + 2.0 * nf + 2.0),
        ("-α+β+d+2m+2n", s + beta + df + 2.0 * nf),
        ("-α+2m+4n-2", s + 4.0 * nf - 2.0),
    ];
    for (factor, v) in denominators {
        if v.abs() < 1e-14 {
            return Err(PotentialError::Degenerate { n, factor });
        }
    }
    let ca = -((s + 4.0 * nf) * (s + 4.0 * nf + 2.0) * (alpha + df - 2.0 * (mf + nf + 1.0)))
        / (2.0 * (nf + 1.0) * (s + beta + 2.0 * nf + 2.0) * (s + beta + df + 2.0 * nf));
    let cb = -((s + 4.0 * nf)
        * (alpha + df - 2.0 * (mf + nf + 1.0))
        * (df * (s + 2.0 * beta + 2.0) - 2.0 * (2.0 * nf - beta) * (s + beta + 2.0 * nf)))
        / (2.0 * (nf + 1.0) * (s + 4.0 * nf - 2.0) * (s + beta + 2.0 * nf + 2.0) * (s + beta + df + 2.0 * nf));
    let cc = ((-beta + 2.0 * nf - 2.0)
        * (beta + df - 2.0 * nf)
        * (s + 4.0 * nf + 2.0)
        * (alpha + df - 2.0 * (mf + nf))
        * (alpha + df - 2.0 * (mf + nf + 1.0)))
        / (4.0 * nf * (nf + 1.0) * (s + 4.0 * nf - 2.0) * (s + beta + 2.0 * nf + 2.0) * (s + beta + df + 2.0 * nf));
    Ok((ca, cb, cc))
}

/// How the operator matrix is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Nonzeros confined to `|row - col| <= half_width`.
    Banded { half_width: usize },
    Dense,
}

/// Truncated matrix of a power-law potential in a fixed basis pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOperator {
    pub matrix: DMatrix<Real>,
    pub kernel_power: Real,
    pub basis: BasisSpec,
    pub declared_bandwidth: Option<usize>,
    pub n: usize,
    pub storage: Storage,
    pub drop_tol: Option<Real>,
}

impl PotentialOperator {
    /// Largest `|entry|` with `|row - col| > half_width`, relative to the
    /// largest entry.
    pub fn off_band_ratio(&self, half_width: usize) -> Real {
        let max = self.matrix.amax();
        let mut off: Real = 0.0;
        for c in 0..self.n {
            for r in 0..self.n {
                if r.abs_diff(c) > half_width {
                    off = off.max(self.matrix[(r, c)].abs());
                }
            }
        }
        if max > 0.0 { off / max } else { 0.0 }
    }

    /// Largest `|entry|` outside the leading `size × size` block, relative.
    pub fn outside_block_ratio(&self, size: usize) -> Real {
        let max = self.matrix.amax();
        let mut off: Real = 0.0;
        for c in 0..self.n {
            for r in 0..self.n {
                if r >= size || c >= size {
                    off = off.max(self.matrix[(r, c)].abs());
                }
            }
        }
        if max > 0.0 { off / max } else { 0.0 }
    }

    /// Number of diagonals carrying an entry above `tol` relative to the max.
    pub fn numerical_bandwidth(&self, tol: Real) -> usize {
        let max = self.matrix.amax();
        let mut w = 0;
        for c in 0..self.n {
            for r in 0..self.n {
                if self.matrix[(r, c)].abs() > tol * max {
                    w = w.max(r.abs_diff(c));
                }
            }
        }
        2 * w + 1
    }
}

/// Tolerance for treating the kernel power as the basis-matched one.
const MATCH_TOL: Real = 1e-12;

fn storage_for(kernel_power: Real, basis: &BasisSpec) -> (Storage, Option<usize>) {
    if (kernel_power - basis.matched_power()).abs() < MATCH_TOL {
        (Storage::Banded { half_width: basis.ell }, Some(2 * basis.ell + 1))
    } else {
        (Storage::Dense, None)
    }
}

/// Extra rows carried while marching so that truncation error, which climbs
/// one row per step, never reaches the kept block.
pub fn recurrence_buffer(n: usize, basis: &BasisSpec) -> usize {
    n + basis.ell + 10
}

thread_local! {
    static BUILDS: Cell<usize> = const { Cell::new(0) };
}

/// Number of operators built on the calling thread so far.
pub fn builds_on_this_thread() -> usize {
    BUILDS.with(Cell::get)
}

/// Operator from seed columns 0, 1 and the column recurrence.
pub fn build_operator(kernel_power: Real, basis: &BasisSpec, n: usize) -> Result<PotentialOperator, PotentialError> {
    build_operator_with(kernel_power, basis, n, None)
}

/// [`build_operator`] with an optional relative drop tolerance applied to
/// dense results.
pub fn build_operator_with(
    kernel_power: Real,
    basis: &BasisSpec,
    n: usize,
    drop_tol: Option<Real>,
) -> Result<PotentialOperator, PotentialError> {
    if n < 3 {
        return Err(PotentialError::TooSmall(n));
    }
    check_convergent(kernel_power, basis)?;
    BUILDS.with(|b| b.set(b.get() + 1));
    let basis = basis.as_weighted();
    let rows = n + recurrence_buffer(n, &basis);
    let x = jacobi_basis::multiplication_operator(&basis, rows)?;
    let alpha = basis.matched_power();
    let mut cols: Vec<Vec<Real>> = Vec::with_capacity(n);
    cols.push(seed_column(kernel_power, &basis, 0, rows)?);
    cols.push(seed_column(kernel_power, &basis, 1, rows)?);
    for k in 1..n - 1 {
        let (ca, cb, cc) = column_recurrence_coeffs(alpha, kernel_power, basis.d, basis.ell, k)?;
        let xc = x.apply(&cols[k]);
        let next: Vec<Real> = (0..rows)
            .map(|i| ca * xc[i] + cb * cols[k][i] + cc * cols[k - 1][i])
            .collect();
        cols.push(next);
    }
    let mut matrix = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
    let (storage, declared_bandwidth) = storage_for(kernel_power, &basis);
    if let (Some(tol), Storage::Dense) = (drop_tol, storage) {
        let max = matrix.amax();
        matrix.iter_mut().filter(|v| v.abs() < tol * max).for_each(|v| *v = 0.0);
    }
    Ok(PotentialOperator {
        matrix,
        kernel_power,
        basis,
        declared_bandwidth,
        n,
        storage,
        drop_tol,
    })
}

/// Operator with every column from [`potential_column`].
pub fn build_operator_direct(kernel_power: Real, basis: &BasisSpec, n: usize) -> Result<PotentialOperator, PotentialError> {
    if n < 3 {
        return Err(PotentialError::TooSmall(n));
    }
    let basis = basis.as_weighted();
    let cols = (0..n)
        .map(|c| potential_column(kernel_power, &basis, c, n))
        .collect::<Result<Vec<_>, _>>()?;
    let (storage, declared_bandwidth) = storage_for(kernel_power, &basis);
    Ok(PotentialOperator {
        matrix: DMatrix::from_fn(n, n, |r, c| cols[c][r]),
        kernel_power,
        basis,
        declared_bandwidth,
        n,
        storage,
        drop_tol: None,
    })
}

/// Band-only evaluation of the matched operator `U^α_α`: entries with
/// `|row - col| <= ℓ` from the closed form, zeros elsewhere.
pub fn banded_fast_path(basis: &BasisSpec, n: usize) -> Result<PotentialOperator, PotentialError> {
    let basis = basis.as_weighted();
    let alpha = basis.matched_power();
    let ell = basis.ell;
    let mut matrix = DMatrix::zeros(n, n);
    for c in 0..n {
        let col = potential_column(alpha, &basis, c, (c + ell + 1).min(n))?;
        for (r, v) in col.iter().enumerate().skip(c.saturating_sub(ell)) {
            matrix[(r, c)] = *v;
        }
    }
    Ok(PotentialOperator {
        matrix,
        kernel_power: alpha,
        basis,
        declared_bandwidth: Some(2 * ell + 1),
        n,
        storage: Storage::Banded { half_width: ell },
        drop_tol: None,
    })
}

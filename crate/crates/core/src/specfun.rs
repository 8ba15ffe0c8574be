//! Gamma family, Pochhammer symbols, Beta and the Gauss hypergeometric
//! function on the unit interval.
//!
//! Everything here works in [`Real`] (binary64). Prefactors that are products
//! and quotients of Gamma values go through [`LogProduct`], which keeps a
//! log-magnitude and a sign so that moderate indices do not overflow.

use thiserror::Error;

/// Working scalar. Swapping this alias is the hook for an extended-precision
/// build; nothing in the acceptance suite requires it.
pub type Real = f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("gamma pole at x = {0}")]
    Pole(Real),
    #[error("hypergeometric lower parameter c = {0} is a non-positive integer")]
    LowerParameterPole(Real),
    #[error("hypergeometric argument z = {0} outside [0, 1)")]
    ArgumentOutOfRange(Real),
    #[error("2F1 at z = 1 diverges: c - a - b = {0} <= 0")]
    DivergentAtOne(Real),
    #[error("2F1({a}, {b}; {c}; {z}) did not converge within {terms} terms")]
    NonConvergence {
        a: Real,
        b: Real,
        c: Real,
        z: Real,
        terms: usize,
    },
}

/// Maximum number of Maclaurin terms before giving up.
pub const SERIES_TERM_CAP: usize = 20_000;

/// Above this argument the series is replaced by a transformation.
const SERIES_SWITCH: Real = 0.9;

/// Distance of `c - a - b` from the integers below which the `1 - z`
/// connection formula loses too many digits to cancellation.
const CONNECTION_MIN_GAP: Real = 1e-3;

/// True when `x` is 0, -1, -2, ...
pub fn is_nonpositive_integer(x: Real) -> bool {
    x <= 0.0 && x == x.floor()
}

/// `ln|Γ(x)|` together with the sign of `Γ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnGamma {
    pub ln_abs: Real,
    pub sign: Real,
}

pub fn ln_gamma(x: Real) -> Result<LnGamma, SpecfunError> {
    if is_nonpositive_integer(x) {
        return Err(SpecfunError::Pole(x));
    }
    let (ln_abs, s) = libm::lgamma_r(x);
    Ok(LnGamma {
        ln_abs,
        sign: if s < 0 { -1.0 } else { 1.0 },
    })
}

pub fn gamma(x: Real) -> Result<Real, SpecfunError> {
    if is_nonpositive_integer(x) {
        return Err(SpecfunError::Pole(x));
    }
    Ok(libm::tgamma(x))
}

/// `1/Γ(x)`, exactly zero at the poles of Γ.
pub fn reciprocal_gamma(x: Real) -> Real {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x.abs() < 170.0 {
        let g = libm::tgamma(x);
        if g.is_finite() && g != 0.0 {
            return 1.0 / g;
        }
    }
    let (l, s) = libm::lgamma_r(x);
    let sign = if s < 0 { -1.0 } else { 1.0 };
    sign * (-l).exp()
}

/// Rising factorial `(x)_n`.
pub fn pochhammer(x: Real, n: usize) -> Real {
    (0..n).fold(1.0, |acc, k| acc * (x + k as Real))
}

/// `B(x, y) = Γ(x)Γ(y)/Γ(x+y)` in log space with sign tracking.
pub fn beta(x: Real, y: Real) -> Result<Real, SpecfunError> {
    let mut p = LogProduct::one();
    p.mul_gamma(x)?;
    p.mul_gamma(y)?;
    p.mul_rgamma(x + y);
    Ok(p.value())
}

/// Sign-tracked product of factors kept as a log-magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProduct {
    ln_abs: Real,
    sign: Real,
}

impl LogProduct {
    pub fn one() -> Self {
        Self {
            ln_abs: 0.0,
            sign: 1.0,
        }
    }

    pub fn mul(&mut self, v: Real) -> &mut Self {
        if v == 0.0 {
            self.sign = 0.0;
        } else {
            self.ln_abs += v.abs().ln();
            self.sign *= v.signum();
        }
        self
    }

    pub fn div(&mut self, v: Real) -> &mut Self {
        if v == 0.0 {
            self.ln_abs = Real::INFINITY;
        } else {
            self.ln_abs -= v.abs().ln();
            self.sign *= v.signum();
        }
        self
    }

    pub fn mul_gamma(&mut self, x: Real) -> Result<&mut Self, SpecfunError> {
        let g = ln_gamma(x)?;
        self.ln_abs += g.ln_abs;
        self.sign *= g.sign;
        Ok(self)
    }

    pub fn div_gamma(&mut self, x: Real) -> Result<&mut Self, SpecfunError> {
        let g = ln_gamma(x)?;
        self.ln_abs -= g.ln_abs;
        self.sign *= g.sign;
        Ok(self)
    }

    /// Multiply by `1/Γ(x)`; a pole of Γ zeroes the product.
    pub fn mul_rgamma(&mut self, x: Real) -> &mut Self {
        match ln_gamma(x) {
            Ok(g) => {
                self.ln_abs -= g.ln_abs;
                self.sign *= g.sign;
            }
            Err(_) => self.sign = 0.0,
        }
        self
    }

    /// Multiply by `(x)_n`, accumulated factor by factor.
    pub fn mul_pochhammer(&mut self, x: Real, n: usize) -> &mut Self {
        for k in 0..n {
            self.mul(x + k as Real);
        }
        self
    }

    pub fn ln_abs(&self) -> Real {
        self.ln_abs
    }

    pub fn sign(&self) -> Real {
        self.sign
    }

    pub fn value(&self) -> Real {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }
}

/// Parameters of `₂F₁(a, b; c; z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeometricArgs {
    pub a: Real,
    pub b: Real,
    pub c: Real,
    pub z: Real,
}

impl HypergeometricArgs {
    pub fn new(a: Real, b: Real, c: Real, z: Real) -> Self {
        Self { a, b, c, z }
    }

    /// Number of terms when an upper parameter is a non-positive integer.
    fn terminating_degree(&self) -> Option<usize> {
        [self.a, self.b]
            .into_iter()
            .filter(|&p| is_nonpositive_integer(p))
            .map(|p| (-p) as usize)
            .min()
    }

    fn validate(&self) -> Result<(), SpecfunError> {
        if is_nonpositive_integer(self.c) {
            let ok = matches!(self.terminating_degree(), Some(n) if (n as Real) < -self.c + 1.0);
            if !ok {
                return Err(SpecfunError::LowerParameterPole(self.c));
            }
        }
        if !(0.0..=1.0).contains(&self.z) {
            return Err(SpecfunError::ArgumentOutOfRange(self.z));
        }
        Ok(())
    }
}

/// `₂F₁(a, b; c; z)` for `z ∈ [0, 1]`.
///
/// Terminating cases are summed exactly. Otherwise the Maclaurin series is
/// used up to `z = 0.9`; above that the `1 - z` connection formula is used
/// when `c - a - b` is safely non-integer, and the series (or its Euler
/// transform, whichever decays faster) otherwise. `z = 1` uses Gauss's sum.
pub fn gauss_2f1(args: HypergeometricArgs) -> Result<Real, SpecfunError> {
    args.validate()?;
    let HypergeometricArgs { a, b, c, z } = args;
    if let Some(n) = args.terminating_degree() {
        return Ok(finite_sum(a, b, c, z, n));
    }
    if z == 1.0 {
        let s = c - a - b;
        if s <= 0.0 {
            return Err(SpecfunError::DivergentAtOne(s));
        }
        let mut p = LogProduct::one();
        p.mul_gamma(c)?.mul_gamma(s)?.mul_rgamma(c - a).mul_rgamma(c - b);
        return Ok(p.value());
    }
    if z <= SERIES_SWITCH {
        return maclaurin(a, b, c, z);
    }
    let s = c - a - b;
    if (s - s.round()).abs() >= CONNECTION_MIN_GAP {
        return connection(a, b, c, z);
    }
    if s > 0.0 {
        maclaurin(a, b, c, z)
    } else {
        Ok((1.0 - z).powf(s) * maclaurin(c - a, c - b, c, z)?)
    }
}

fn finite_sum(a: Real, b: Real, c: Real, z: Real, n: usize) -> Real {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        let kf = k as Real;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
    }
    sum
}

fn maclaurin(a: Real, b: Real, c: Real, z: Real) -> Result<Real, SpecfunError> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small_in_a_row = 0;
    for k in 0..SERIES_TERM_CAP {
        let kf = k as Real;
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        if term.abs() <= Real::EPSILON * 0.25 * sum.abs() && ratio.abs() < 1.0 {
            small_in_a_row += 1;
            if small_in_a_row >= 3 {
                return Ok(sum);
            }
        } else {
            small_in_a_row = 0;
        }
    }
    Err(SpecfunError::NonConvergence {
        a,
        b,
        c,
        z,
        terms: SERIES_TERM_CAP,
    })
}

fn connection(a: Real, b: Real, c: Real, z: Real) -> Result<Real, SpecfunError> {
    let s = c - a - b;
    let w = 1.0 - z;
    let mut p1 = LogProduct::one();
    p1.mul_gamma(c)?.mul_gamma(s)?.mul_rgamma(c - a).mul_rgamma(c - b);
    let mut p2 = LogProduct::one();
    p2.mul_gamma(c)?.mul_gamma(-s)?.mul_rgamma(a).mul_rgamma(b);
    let mut total = 0.0;
    if p1.sign() != 0.0 {
        total += p1.value() * hyp_small(a, b, 1.0 - s, w)?;
    }
    if p2.sign() != 0.0 {
        total += p2.value() * w.powf(s) * hyp_small(c - a, c - b, 1.0 + s, w)?;
    }
    Ok(total)
}

/// Series at a small argument, honouring termination.
fn hyp_small(a: Real, b: Real, c: Real, z: Real) -> Result<Real, SpecfunError> {
    let args = HypergeometricArgs::new(a, b, c, z);
    match args.terminating_degree() {
        Some(n) => Ok(finite_sum(a, b, c, z, n)),
        None => maclaurin(a, b, c, z),
    }
}

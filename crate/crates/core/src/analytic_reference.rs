//! Closed-form equilibrium measures for attraction powers 2 and 4.
//!
//! Both have the form `(R²-r²)^{1-(β+d)/2}` times a polynomial in `r²` of
//! degree 0 (power 2) or 1 (power 4).

use std::f64::consts::PI;

use thiserror::Error;

use crate::specfun::{self, LogProduct, Real, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("closed form undefined for beta = {beta}, d = {d}: {why}")]
    Degenerate { beta: Real, d: usize, why: &'static str },
    #[error("radius {r} outside [0, {radius}]")]
    OutsideSupport { r: Real, radius: Real },
    #[error(transparent)]
    Special(#[from] SpecfunError),
}

/// Which closed form a solution comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticKind {
    /// `c · (R²-r²)^e`
    Quadratic { coefficient: Real },
    /// `(R²-r²)^e (A₁R² + A₂(R²-r²))`
    Quartic { a1: Real, a2: Real },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSolution {
    pub radius: Real,
    /// Exponent `1 - (β+d)/2` of the boundary factor.
    pub exponent: Real,
    pub kind: AnalyticKind,
    /// Constants finite and density nonnegative at the origin.
    pub valid: bool,
}

impl AnalyticSolution {
    /// Density at physical radius `r ∈ [0, R]`.
    pub fn density(&self, r: Real) -> Result<Real, AnalyticError> {
        if !(0.0..=self.radius).contains(&r) {
            return Err(AnalyticError::OutsideSupport { r, radius: self.radius });
        }
        let gap = (self.radius - r) * (self.radius + r);
        let boundary = gap.powf(self.exponent);
        Ok(match self.kind {
            AnalyticKind::Quadratic { coefficient } => coefficient * boundary,
            AnalyticKind::Quartic { a1, a2 } => boundary * (a1 * self.radius * self.radius + a2 * gap),
        })
    }

    pub fn density_at_origin(&self) -> Real {
        self.density(0.0).unwrap_or(Real::NAN)
    }
}

fn degenerate(beta: Real, d: usize, why: &'static str) -> AnalyticError {
    AnalyticError::Degenerate { beta, d, why }
}

/// Attraction power 2:
/// `R = (πΓ(2-β/2) / (sin(π(β+d)/2) Γ(d/2+1) Γ(1-d/2-β/2)))^{1/(2-β)}`,
/// `ρ = -M d Γ(d/2) sin(π(β+d)/2) / ((β+d-2) π^{(d+2)/2}) · (R²-r²)^{1-(β+d)/2}`.
pub fn alpha2_solution(beta: Real, d: usize, mass: Real) -> Result<AnalyticSolution, AnalyticError> {
    let df = d as Real;
    if !(beta < 2.0) {
        return Err(degenerate(beta, d, "requires beta < 2"));
    }
    let sine = (PI * (beta + df) / 2.0).sin();
    if sine == 0.0 || (beta + df - 2.0) == 0.0 {
        return Err(degenerate(beta, d, "sine or (beta + d - 2) vanishes"));
    }
    let mut base = LogProduct::one();
    base.mul(PI)
        .mul_gamma(2.0 - beta / 2.0)?
        .div(sine)
        .div_gamma(df / 2.0 + 1.0)?
        .div_gamma(1.0 - df / 2.0 - beta / 2.0)?;
    if base.sign() <= 0.0 {
        return Err(degenerate(beta, d, "radius base is not positive"));
    }
    let radius = (base.ln_abs() / (2.0 - beta)).exp();
    let coefficient = -mass * df * specfun::gamma(df / 2.0)? * sine / ((beta + df - 2.0) * PI.powf((df + 2.0) / 2.0));
    let valid = radius.is_finite() && coefficient.is_finite() && coefficient >= 0.0;
    Ok(AnalyticSolution {
        radius,
        exponent: 1.0 - (beta + df) / 2.0,
        kind: AnalyticKind::Quadratic { coefficient },
        valid,
    })
}

/// Constants `(A₁, A₂)` of the power-4 density. `A₂` carries a single
/// factor of the mass so that the density is linear in it.
pub fn alpha4_constants(beta: Real, d: usize, mass: Real) -> Result<(Real, Real), AnalyticError> {
    let df = d as Real;
    let lead = specfun::gamma(df / 2.0)? / PI.powf(df / 2.0) * df * (df + 2.0) * mass;
    let h = (beta + df) / 2.0;
    let root = ((2.0 - beta) * (6.0 - beta)).sqrt();
    let a1 = lead / (2.0 * specfun::beta(h, 2.0 - h)?) * (1.0 / root + 1.0 / (2.0 - beta));
    let a2 = lead / (specfun::beta(h, 3.0 - h)? * 4.0 * (beta - 2.0));
    Ok((a1, a2))
}

/// Attraction power 4:
/// `R = [d(d+2)Γ(d/2) / (2Γ((β+d)/2)Γ(2-β/2)) · (1/(4-β) + 1/√((2-β)(6-β)))]^{-1/(4-β)}`,
/// `ρ = (R²-r²)^{1-(β+d)/2} (A₁R² + A₂(R²-r²))`.
pub fn alpha4_solution(beta: Real, d: usize, mass: Real) -> Result<AnalyticSolution, AnalyticError> {
    let df = d as Real;
    if !(beta < 2.0) {
        return Err(degenerate(beta, d, "requires beta < 2"));
    }
    let mut base = LogProduct::one();
    base.mul(df * (df + 2.0) / 2.0)
        .mul_gamma(df / 2.0)?
        .div_gamma((beta + df) / 2.0)?
        .div_gamma(2.0 - beta / 2.0)?
        .mul(1.0 / (4.0 - beta) + 1.0 / ((2.0 - beta) * (6.0 - beta)).sqrt());
    if base.sign() <= 0.0 {
        return Err(degenerate(beta, d, "radius base is not positive"));
    }
    let radius = (-base.ln_abs() / (4.0 - beta)).exp();
    let (a1, a2) = alpha4_constants(beta, d, mass)?;
    let valid = radius.is_finite() && a1.is_finite() && a2.is_finite() && a1 + a2 >= 0.0;
    Ok(AnalyticSolution {
        radius,
        exponent: 1.0 - (beta + df) / 2.0,
        kind: AnalyticKind::Quartic { a1, a2 },
        valid,
    })
}

/// Value of `β` at which the power-4 density at the origin changes sign:
/// `(2 + 2d - d²)/(d + 1)`.
pub fn alpha4_gap_boundary(d: usize) -> Real {
    let df = d as Real;
    (2.0 + 2.0 * df - df * df) / (df + 1.0)
}

/// Dispatch on the attraction power.
pub fn solution_for(alpha: Real, beta: Real, d: usize, mass: Real) -> Option<Result<AnalyticSolution, AnalyticError>> {
    if alpha == 2.0 {
        Some(alpha2_solution(beta, d, mass))
    } else if alpha == 4.0 {
        Some(alpha4_solution(beta, d, mass))
    } else {
        None
    }
}

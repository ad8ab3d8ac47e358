//! Gain-vector polynomials and their state-space realizations.
//!
//! A gain vector `γ = (γ1, …, γn)` is identified with the monic polynomial
//! `P_γ(s) = s^n + γ1 s^(n-1) + … + γn` and with its companion matrix, whose
//! last row is `(-γn, …, -γ1)`. Direct filters need `P_γ` Hurwitz; passive
//! filters additionally need the truncation `π(γ) = (γ1, …, γ(n-1))` Hurwitz.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Pivot magnitude below which the Routh array is treated as degenerate.
pub const ROUTH_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GainVector(Vec<f64>);

/// Outcome of the Routh test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurwitzStatus {
    Stable,
    Unstable,
    /// A Routh pivot vanished while every coefficient was positive: the
    /// polynomial has roots on (or numerically at) the imaginary axis.
    Indeterminate { row: usize },
}

impl GainVector {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::EmptyGains);
        }
        Ok(Self(gains))
    }

    /// `γ_l = C(n, l) α^l`, so that `P_γ(s) = (s + α)^n`.
    pub fn binomial(order: usize, alpha: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::EmptyGains);
        }
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        let mut gains = Vec::with_capacity(order);
        let mut binom = 1.0;
        for l in 1..=order {
            binom = binom * (order + 1 - l) as f64 / l as f64;
            gains.push(binom.round() * alpha.powi(l as i32));
        }
        Ok(Self(gains))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Last entry `γn`, the input gain of the compensator.
    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Monic coefficients `[1, γ1, …, γn]`, highest power first.
    pub fn char_poly_coeffs(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.0.iter().copied()).collect()
    }

    pub fn companion_matrix(&self) -> DMatrix<f64> {
        companion_of(&self.0)
    }

    /// Drops the last entry.
    pub fn project(&self) -> Result<Self> {
        if self.0.len() < 2 {
            return Err(Error::ProjectionUndefined);
        }
        Ok(Self(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn hurwitz_status(&self) -> HurwitzStatus {
        routh_status(&self.char_poly_coeffs())
    }

    /// `true` iff every root of `P_γ` has a strictly negative real part.
    pub fn is_hurwitz(&self) -> Result<bool> {
        match self.hurwitz_status() {
            HurwitzStatus::Stable => Ok(true),
            HurwitzStatus::Unstable => Ok(false),
            HurwitzStatus::Indeterminate { row } => Err(Error::IndeterminateRouth { row }),
        }
    }

    /// Membership in the passive-filter gain set: `γ` and `π(γ)` both Hurwitz.
    /// For `n = 1` there is nothing to project and this reduces to [`Self::is_hurwitz`].
    pub fn in_hbar(&self) -> Result<bool> {
        if !self.is_hurwitz()? {
            return Ok(false);
        }
        if self.order() == 1 {
            return Ok(true);
        }
        self.project()?.is_hurwitz()
    }
}

/// Companion matrix: ones on the superdiagonal, last row `(-γn, …, -γ1)`.
fn companion_of(gains: &[f64]) -> DMatrix<f64> {
    let n = gains.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, g) in gains.iter().rev().enumerate() {
        a[(n - 1, j)] = -g;
    }
    a
}

/// Routh test for a polynomial given highest power first with a positive
/// leading coefficient.
fn routh_status(coeffs: &[f64]) -> HurwitzStatus {
    let degree = coeffs.len() - 1;
    // positivity of all coefficients is necessary; a zero or negative
    // coefficient is a definite "no", never an indeterminate pivot
    if coeffs.iter().any(|&c| c <= 0.0) {
        return HurwitzStatus::Unstable;
    }
    if degree == 0 {
        return HurwitzStatus::Stable;
    }

    let mut prev: Vec<f64> = coeffs.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = coeffs.iter().skip(1).step_by(2).copied().collect();
    for row in 1..=degree {
        let pivot = cur[0];
        if pivot.abs() < ROUTH_PIVOT_TOL {
            return HurwitzStatus::Indeterminate { row };
        }
        if pivot < 0.0 {
            return HurwitzStatus::Unstable;
        }
        let next: Vec<f64> = (0..prev.len().saturating_sub(1))
            .map(|j| {
                let c = cur.get(j + 1).copied().unwrap_or(0.0);
                prev[j + 1] - prev[0] * c / pivot
            })
            .collect();
        if next.is_empty() {
            break;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    HurwitzStatus::Stable
}

/// `E ⊗ I_k`.
pub fn kron_with_identity(e: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    e.kronecker(&DMatrix::identity(k, k))
}

//! Continuous Lyapunov equation `AᵀP + PA = -Q` for small dense matrices.

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of `AᵀP + PA + Q`.
    pub residual_norm: f64,
}

fn check_inputs(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if q.shape() != a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Q is {:?} but A is {:?}",
            q.shape(),
            a.shape()
        )));
    }
    let scale = q.abs().max().max(1.0);
    if (q - q.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::AsymmetricWeight);
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::WeightNotPositiveDefinite);
    }
    Ok(())
}

pub fn residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a + q).norm()
}

fn finish(a: &DMatrix<f64>, q: &DMatrix<f64>, p: DMatrix<f64>) -> Result<LyapunovSolution> {
    let p = (&p + p.transpose()) * 0.5;
    if !p.iter().all(|x| x.is_finite()) || p.clone().cholesky().is_none() {
        return Err(Error::NotHurwitz);
    }
    let residual_norm = residual(a, &p, q);
    Ok(LyapunovSolution { p, residual_norm })
}

/// Solve by vectorization: `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = -vec(Q)`.
///
/// The caller is expected to pass a Hurwitz `A`; otherwise the system is
/// singular or the solution is indefinite, and [`Error::NotHurwitz`] is returned.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovSolution> {
    check_inputs(a, q)?;
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let lu = k.lu();
    let x = lu.solve(&rhs).ok_or(Error::NotHurwitz)?;
    finish(a, q, DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Independent route: Cayley transform to a Stein equation, then Smith doubling.
///
/// With `M = (A - pI)^-1` and `T = (A + pI) M`, the solution satisfies
/// `P = TᵀPT + 2p MᵀQM`, and the doubling iteration converges quadratically
/// because the spectral radius of `T` is below one for Hurwitz `A`.
pub fn solve_lyapunov_smith(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovSolution> {
    check_inputs(a, q)?;
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let shift = (a.norm() / (n as f64).sqrt()).max(1e-3);
    // a singular shifted matrix means `shift > 0` is an eigenvalue of A
    let m = (a - &eye * shift).try_inverse().ok_or(Error::NotHurwitz)?;
    let mut t = (a + &eye * shift) * &m;
    let mut p = m.transpose() * q * &m * (2.0 * shift);
    for _ in 0..64 {
        let step = t.transpose() * &p * &t;
        let done = step.norm() <= 1e-17 * p.norm();
        p += step;
        if done {
            return finish(a, q, p);
        }
        if !p.iter().all(|x| x.is_finite()) {
            break;
        }
        t = &t * &t;
    }
    Err(Error::NotHurwitz)
}

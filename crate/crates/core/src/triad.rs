//! Two-vector (TRIAD) attitude determination.

use crate::so3::{Mat3, RotationMatrix, Vec3};
use crate::{Error, Result};

/// Smallest cross-product norm accepted for either frame.
pub const TRIAD_COLLINEAR_TOL: f64 = 1e-3;

/// A direction observed in the body frame together with its inertial counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorPair {
    pub body: Vec3,
    pub reference: Vec3,
}

impl VectorPair {
    pub fn new(body: Vec3, reference: Vec3) -> Self {
        Self { body, reference }
    }
}

fn frame_basis(v1: &Vec3, v2: &Vec3, frame: &'static str) -> Result<Mat3> {
    let t1 = v1.normalize();
    let c = t1.cross(&v2.normalize());
    let cross_norm = c.norm();
    if !(cross_norm > TRIAD_COLLINEAR_TOL) {
        return Err(Error::DegenerateTriad { frame, cross_norm });
    }
    let t2 = c / cross_norm;
    let t3 = t1.cross(&t2);
    Ok(Mat3::from_columns(&[t1, t2, t3]))
}

/// Rotation `R` with `Rᵀ r = b`, the primary pair matched exactly and the
/// secondary pair matched within the plane they span.
///
/// The result is orthonormal even when the two pairs are mutually inconsistent.
pub fn triad_estimate(primary: &VectorPair, secondary: &VectorPair) -> Result<RotationMatrix> {
    let mb = frame_basis(&primary.body, &secondary.body, "body")?;
    let mr = frame_basis(&primary.reference, &secondary.reference, "reference")?;
    Ok(RotationMatrix(mr * mb.transpose()))
}

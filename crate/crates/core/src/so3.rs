//! Quaternion and rotation-matrix algebra on SO(3).
//!
//! Conventions used throughout the crate:
//!
//! * A quaternion is stored scalar first, `(q0, q)`, and multiplied with the
//!   Hamilton product.
//! * `R(Q) = I + 2 q0 S(q) + 2 S(q)^2` maps body coordinates to the inertial
//!   frame, so a constant inertial direction `r` is observed in the body frame
//!   as `b = R^T r`.
//! * Euler angles are aerospace Z-Y-X (yaw, then pitch, then roll) and are only
//!   used for reporting.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Skew-symmetric matrix `S(v)` such that `S(v) y = v × y`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Time derivative of a body-frame observation of a constant inertial direction.
#[inline]
pub fn body_vector_derivative(b: &Vec3, omega: &Vec3) -> Vec3 {
    -skew(omega) * b
}

/// Unit quaternion `(q0, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub v: Vec3,
}

impl Quaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        v: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self {
            w,
            v: Vec3::new(x, y, z),
        }
    }

    pub fn from_parts(w: f64, v: Vec3) -> Self {
        Self { w, v }
    }

    pub fn from_vector4(q: &Vector4<f64>) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.v.x, self.v.y, self.v.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.v.x, self.v.y, self.v.z]
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::from_parts(c, axis.normalize() * s)
    }

    /// Uniform sample on the unit 3-sphere (normalized 4-D standard Gaussian).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q = Vector4::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
            let n = q.norm();
            if n > 1e-6 {
                return Self::from_vector4(&(q / n));
            }
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.v.norm_squared()).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Self::from_parts(self.w / n, self.v / n)
    }

    /// Inverse of a unit quaternion, `(q0, -q)`.
    pub fn inverse(&self) -> Self {
        Self::from_parts(self.w, -self.v)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.v.dot(&other.v)
    }

    /// Hamilton product without renormalization.
    pub fn hamilton(&self, other: &Self) -> Self {
        Self::from_parts(
            self.w * other.w - self.v.dot(&other.v),
            self.w * other.v + other.w * self.v + self.v.cross(&other.v),
        )
    }

    /// Euler-Rodrigues map `R(Q) = I + 2 q0 S(q) + 2 S(q)^2`.
    pub fn to_rotation(&self) -> RotationMatrix {
        let s = skew(&self.v);
        RotationMatrix(Mat3::identity() + 2.0 * self.w * s + 2.0 * s * s)
    }

    /// Shepperd's method, returning the representative with `q0 >= 0`.
    pub fn from_rotation(r: &RotationMatrix) -> Self {
        let m = &r.0;
        let trace = m.trace();
        let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        // pick the largest of 4 q0^2, 4 qx^2, 4 qy^2, 4 qz^2
        let candidates = [trace, diag[0], diag[1], diag[2]];
        let (mut best, mut best_val) = (0, candidates[0]);
        for (i, &c) in candidates.iter().enumerate().skip(1) {
            if c > best_val {
                best = i;
                best_val = c;
            }
        }
        let q = match best {
            0 => {
                let s = 2.0 * (1.0 + trace).sqrt();
                Self::new(
                    0.25 * s,
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                )
            }
            1 => {
                let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
                Self::new(
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    0.25 * s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                )
            }
            2 => {
                let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
                Self::new(
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    0.25 * s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                )
            }
            _ => {
                let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
                Self::new(
                    (m[(1, 0)] - m[(0, 1)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                    0.25 * s,
                )
            }
        };
        let q = q.normalize();
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }

    /// Kinematics `Q̇ = ½ Q ⊙ (0, ω)` with `ω` expressed in the body frame.
    pub fn derivative(&self, omega: &Vec3) -> Vector4<f64> {
        let w = -0.5 * self.v.dot(omega);
        let v = 0.5 * (self.w * Mat3::identity() + skew(&self.v)) * omega;
        Vector4::new(w, v.x, v.y, v.z)
    }

    /// Rotate a body vector into the inertial frame, `R(Q) x`.
    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.to_rotation().0 * x
    }

    /// Express an inertial vector in the body frame, `R(Q)^T x`.
    pub fn inverse_rotate(&self, x: &Vec3) -> Vec3 {
        self.to_rotation().0.transpose() * x
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.v.iter().all(|x| x.is_finite())
    }
}

/// Hamilton product, renormalized.
impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.hamilton(&rhs).normalize()
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Self::from_parts(-self.w, -self.v)
    }
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Largest element-wise deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).abs().max()
    }

    /// True when `R^T R = I` and `det R = 1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion::from_rotation(self)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rotation angle (radians, in `[0, π]`) between two attitudes.
pub fn attitude_angle_error(a: &Quaternion, b: &Quaternion) -> f64 {
    let d = a.hamilton(&b.inverse());
    // same as 2 acos(|q0|) but well conditioned near zero
    2.0 * d.v.norm().atan2(d.w.abs())
}

/// Roll, pitch and yaw in degrees (aerospace Z-Y-X).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn to_quaternion(&self) -> Quaternion {
        euler_to_quat(self)
    }
}

/// Distance from ±90° pitch (radians) below which yaw and roll are not separable.
pub const GIMBAL_LOCK_TOL: f64 = 1e-6;

pub fn euler_to_quat(e: &EulerAngles) -> Quaternion {
    let (sr, cr) = (0.5 * e.roll.to_radians()).sin_cos();
    let (sp, cp) = (0.5 * e.pitch.to_radians()).sin_cos();
    let (sy, cy) = (0.5 * e.yaw.to_radians()).sin_cos();
    let q = Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    );
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

pub fn quat_to_euler(q: &Quaternion) -> Result<EulerAngles> {
    let m = q.to_rotation().0;
    let sin_pitch = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    if (pitch.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_LOCK_TOL {
        return Err(Error::GimbalLock {
            pitch_deg: pitch.to_degrees(),
        });
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Ok(EulerAngles::new(
        wrap_deg(roll.to_degrees()),
        pitch.to_degrees(),
        wrap_deg(yaw.to_degrees()),
    ))
}

/// Wrap to `(-180, 180]`.
fn wrap_deg(a: f64) -> f64 {
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

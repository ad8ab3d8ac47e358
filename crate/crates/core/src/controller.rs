//! Attitude tracking driven by filtered vector measurements.
//!
//! The controller never reconstructs attitude. It runs one first-order filter
//! per reference direction,
//!
//! `b̂̇_i = -S(ω) b_i + α_i (b_i - b̂_i) + S(ω_d)(b_i - b̂_i) + δ_i S(b_i^d)(ω - ω_d)`,
//!
//! and applies
//!
//! `τ = S(ω) J ω - J S(ω_d) ω + J ω̇_d + J Σ ρ_i S(b_i^d) b̂_i - k J (ω - ω_d)`.
//!
//! In the error coordinates `Θ = (b̄_i, Q̄, ω̄)` with `b̄_i = R_d (b_i - b̂_i)`,
//! `Q̄ = Q ⊙ Q_d⁻¹` and `ω̄ = R_d (ω - ω_d)`, the closed loop is autonomous:
//!
//! ```text
//! b̄̇_i = -α_i b̄_i - δ_i S(r_i) ω̄
//! q̄̇₀  = -½ q̄ᵀ ω̄
//! q̄̇   =  ½ (q̄₀ I + S(q̄)) ω̄
//! ω̄̇   = -2 (q̄₀ I - S(q̄)) W q̄ - Σ ρ_i S(r_i) b̄_i - k ω̄,    W = -Σ ρ_i S(r_i)²
//! ```

use nalgebra::{SymmetricEigen, Vector4};

use crate::so3::{attitude_angle_error, skew, Mat3, Quaternion, RotationMatrix, Vec3};
use crate::{Error, Result};

/// Relative eigenvalue gap below which `W` is treated as having a repeated eigenvalue.
pub const EIGEN_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub rho: Vec<f64>,
    /// Angular-velocity damping, 1/s.
    pub k: f64,
    /// Filter bandwidths, 1/s.
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
}

impl ControllerGains {
    pub fn new(rho: Vec<f64>, k: f64, alpha: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let g = Self { rho, k, alpha, delta };
        g.validate()?;
        Ok(g)
    }

    /// Gains used on the quadrotor bench: `ρ = (1.66, 0.1161)`, `k = 0.2621`,
    /// `α = (6, 10)`, with `δ = 1`.
    pub fn bench() -> Self {
        Self {
            rho: vec![1.66, 0.1161],
            k: 0.2621,
            alpha: vec![6.0, 10.0],
            delta: vec![1.0, 1.0],
        }
    }

    /// Stiffer two-vector gain set used for basin-of-attraction sweeps; it
    /// settles from arbitrary attitudes well within 30 s.
    pub fn sweep() -> Self {
        Self {
            rho: vec![20.0, 20.0],
            k: 3.0,
            alpha: vec![6.0, 10.0],
            delta: vec![1.0, 1.0],
        }
    }

    pub fn count(&self) -> usize {
        self.rho.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rho.len();
        if m == 0 || self.alpha.len() != m || self.delta.len() != m {
            return Err(Error::InvalidControllerGains(format!(
                "rho, alpha and delta need one entry per vector (got {}, {}, {})",
                m,
                self.alpha.len(),
                self.delta.len()
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.k) {
            return Err(Error::InvalidControllerGains(format!("k = {}", self.k)));
        }
        for (name, values) in [("rho", &self.rho), ("alpha", &self.alpha), ("delta", &self.delta)] {
            if let Some(v) = values.iter().find(|v| !positive(**v)) {
                return Err(Error::InvalidControllerGains(format!("{name} contains {v}")));
            }
        }
        Ok(())
    }
}

/// Symmetric positive-definite inertia, kg·m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    j: Mat3,
    inv: Mat3,
}

impl Inertia {
    pub fn new(j: Mat3) -> Result<Self> {
        let scale = j.abs().max().max(f64::MIN_POSITIVE);
        if (j - j.transpose()).abs().max() > 1e-12 * scale || j.cholesky().is_none() {
            return Err(Error::InvalidInertia);
        }
        let inv = j.try_inverse().ok_or(Error::InvalidInertia)?;
        Ok(Self { j, inv })
    }

    pub fn diagonal(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(x, y, z)))
    }

    /// Representative small quadrotor, `diag(0.0082, 0.0082, 0.0149)`.
    pub fn quadrotor() -> Self {
        Self::diagonal(0.0082, 0.0082, 0.0149).expect("constant inertia is valid")
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.j
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inv
    }
}

/// `W = -Σ ρ_i S(r_i)²` with its spectrum, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix {
    pub matrix: Mat3,
    pub eigenvalues: Vec3,
    /// Unit eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Mat3,
}

impl WMatrix {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Fails when two eigenvalues are too close for the eigenvectors to be well defined.
    pub fn check_distinct(&self) -> Result<()> {
        let scale = self.eigenvalues[2].abs().max(f64::MIN_POSITIVE);
        let e = &self.eigenvalues;
        if (e[1] - e[0]) < EIGEN_GAP_TOL * scale || (e[2] - e[1]) < EIGEN_GAP_TOL * scale {
            return Err(Error::RepeatedEigenvalues);
        }
        Ok(())
    }
}

/// `W` without the positive-definiteness requirement.
pub fn w_matrix_unchecked(rho: &[f64], references: &[Vec3]) -> Mat3 {
    rho.iter()
        .zip(references)
        .fold(Mat3::zeros(), |acc, (p, r)| {
            let s = skew(r);
            acc - s * s * *p
        })
}

pub fn w_matrix(rho: &[f64], references: &[Vec3]) -> Result<WMatrix> {
    if rho.len() != references.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for {} reference vectors",
            rho.len(),
            references.len()
        )));
    }
    let matrix = w_matrix_unchecked(rho, references);
    let matrix = (matrix + matrix.transpose()) * 0.5;
    let eig = SymmetricEigen::new(matrix);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Vec3::from_iterator(order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = Mat3::from_columns(&order.map(|i| eig.eigenvectors.column(i).normalize()));
    let lambda_min = eigenvalues[0];
    let tol = 1e-12 * eigenvalues[2].abs().max(1.0);
    if !(lambda_min > tol) {
        return Err(Error::WNotPositiveDefinite { lambda_min });
    }
    Ok(WMatrix {
        matrix,
        eigenvalues,
        eigenvectors,
    })
}

/// Desired attitude, body angular velocity and its derivative at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    pub q: Quaternion,
    pub omega: Vec3,
    pub omega_dot: Vec3,
}

impl DesiredState {
    pub fn rest(q: Quaternion) -> Self {
        Self {
            q,
            omega: Vec3::zeros(),
            omega_dot: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> RotationMatrix {
        self.q.to_rotation()
    }

    /// `b_i^d = R_dᵀ r_i`.
    pub fn desired_vectors(&self, references: &[Vec3]) -> Vec<Vec3> {
        references.iter().map(|r| self.q.inverse_rotate(r)).collect()
    }
}

/// A desired trajectory `t ↦ (R_d, ω_d, ω̇_d)` with `Ṙ_d = R_d S(ω_d)`.
pub trait DesiredTrajectory: Send + Sync {
    fn sample(&self, t: f64) -> DesiredState;
}

/// Fixed attitude (stabilization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedAttitude(pub Quaternion);

impl DesiredTrajectory for FixedAttitude {
    fn sample(&self, _t: f64) -> DesiredState {
        DesiredState::rest(self.0)
    }
}

/// `R_d(t) = R_z(yaw_rate·t) · R_x(amplitude·sin(frequency·t))`: a steady yaw
/// with a superimposed roll oscillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawWithRollNod {
    pub yaw_rate: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl DesiredTrajectory for YawWithRollNod {
    fn sample(&self, t: f64) -> DesiredState {
        let (wz, c, f) = (self.yaw_rate, self.amplitude, self.frequency);
        let yaw = Quaternion::from_axis_angle(&Vec3::z(), wz * t);
        let roll_angle = c * (f * t).sin();
        let roll = Quaternion::from_axis_angle(&Vec3::x(), roll_angle);
        let roll_rate = Vec3::x() * (c * f * (f * t).cos());
        let roll_acc = Vec3::x() * (-c * f * f * (f * t).sin());
        // body rate of A·B is Bᵀ ω_A + ω_B
        let yaw_in_body = roll.inverse_rotate(&(Vec3::z() * wz));
        DesiredState {
            q: yaw * roll,
            omega: yaw_in_body + roll_rate,
            omega_dot: -roll_rate.cross(&yaw_in_body) + roll_acc,
        }
    }
}

/// Right-hand side of the control filter for every direction.
pub fn tracking_filter_derivative(
    gains: &ControllerGains,
    estimates: &[Vec3],
    measured: &[Vec3],
    omega: &Vec3,
    desired_vectors: &[Vec3],
    omega_d: &Vec3,
) -> Vec<Vec3> {
    let s_w = skew(omega);
    let s_wd = skew(omega_d);
    let omega_err = omega - omega_d;
    measured
        .iter()
        .zip(estimates)
        .zip(desired_vectors)
        .enumerate()
        .map(|(i, ((b, bh), bd))| {
            let err = b - bh;
            -s_w * b + err * gains.alpha[i] + s_wd * err + skew(bd) * omega_err * gains.delta[i]
        })
        .collect()
}

/// `Σ ρ_i S(b_i^d) b̂_i`.
fn vector_feedback(gains: &ControllerGains, desired_vectors: &[Vec3], estimates: &[Vec3]) -> Vec3 {
    desired_vectors
        .iter()
        .zip(estimates)
        .zip(&gains.rho)
        .fold(Vec3::zeros(), |acc, ((bd, bh), rho)| acc + bd.cross(bh) * *rho)
}

/// Tracking torque, N·m.
pub fn control_torque(
    gains: &ControllerGains,
    inertia: &Inertia,
    omega: &Vec3,
    desired: &DesiredState,
    desired_vectors: &[Vec3],
    estimates: &[Vec3],
) -> Vec3 {
    let j = inertia.matrix();
    let feedback = vector_feedback(gains, desired_vectors, estimates) - (omega - desired.omega) * gains.k;
    omega.cross(&(j * omega)) - j * desired.omega.cross(omega) + j * desired.omega_dot + j * feedback
}

/// Stabilization input `Σ ρ_i S(b_i^d) b̂_i - k ω` (an angular acceleration
/// command; the tracking torque at `ω_d = 0` is `S(ω) J ω + J` times this).
pub fn stabilization_input(
    gains: &ControllerGains,
    omega: &Vec3,
    desired_vectors: &[Vec3],
    estimates: &[Vec3],
) -> Vec3 {
    vector_feedback(gains, desired_vectors, estimates) - omega * gains.k
}

/// Error coordinates `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub b_bar: Vec<Vec3>,
    pub q: Quaternion,
    pub omega: Vec3,
}

impl ClosedLoopState {
    /// Map plant quantities into error coordinates.
    pub fn from_plant(
        q: &Quaternion,
        omega: &Vec3,
        estimates: &[Vec3],
        references: &[Vec3],
        desired: &DesiredState,
    ) -> Self {
        let rd = desired.rotation();
        let b_bar = references
            .iter()
            .zip(estimates)
            .map(|(r, bh)| rd.0 * (q.inverse_rotate(r) - bh))
            .collect();
        Self {
            b_bar,
            q: q.hamilton(&desired.q.inverse()),
            omega: rd.0 * (omega - desired.omega),
        }
    }

    /// Inverse of [`Self::from_plant`]: attitude, rate and filter estimates.
    pub fn to_plant(&self, references: &[Vec3], desired: &DesiredState) -> (Quaternion, Vec3, Vec<Vec3>) {
        let q = self.q.hamilton(&desired.q).normalize();
        let rd = desired.rotation();
        let omega = desired.omega + rd.0.transpose() * self.omega;
        let estimates = references
            .iter()
            .zip(&self.b_bar)
            .map(|(r, bb)| q.inverse_rotate(r) - rd.0.transpose() * bb)
            .collect();
        (q, omega, estimates)
    }

    fn axpy(&self, h: f64, d: &ClosedLoopRate) -> Self {
        Self {
            b_bar: self.b_bar.iter().zip(&d.b_bar).map(|(b, db)| b + db * h).collect(),
            q: Quaternion::from_vector4(&(self.q.to_vector4() + d.q * h)),
            omega: self.omega + d.omega * h,
        }
    }

    /// Euclidean distance in `(b̄, Q̄, ω̄)`, taking the closer of `±Q̄`.
    pub fn distance(&self, other: &Self) -> f64 {
        let b: f64 = self
            .b_bar
            .iter()
            .zip(&other.b_bar)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        let qa = self.q.to_vector4();
        let qb = other.q.to_vector4();
        let dq = (qa - qb).norm_squared().min((qa + qb).norm_squared());
        (b + dq + (self.omega - other.omega).norm_squared()).sqrt()
    }

    /// Angle of the attitude error, rad.
    pub fn attitude_error(&self) -> f64 {
        attitude_angle_error(&self.q, &Quaternion::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite()
            && self.omega.iter().all(|v| v.is_finite())
            && self.b_bar.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Time derivative of a [`ClosedLoopState`]; the quaternion part is not unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRate {
    pub b_bar: Vec<Vec3>,
    pub q: Vector4<f64>,
    pub omega: Vec3,
}

impl ClosedLoopRate {
    pub fn norm(&self) -> f64 {
        let b: f64 = self.b_bar.iter().map(|v| v.norm_squared()).sum();
        (b + self.q.norm_squared() + self.omega.norm_squared()).sqrt()
    }
}

/// Outcome of a perturbation test around an undesired equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityProbe {
    pub v3_perturbed: f64,
    pub v3_equilibrium: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// The trajectory ended farther than `max(0.1, initial_distance)` from the equilibrium.
    pub escaped: bool,
    pub final_state: ClosedLoopState,
}

/// Closed-loop dynamics in error coordinates.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    gains: ControllerGains,
    references: Vec<Vec3>,
    w: WMatrix,
}

impl ClosedLoopModel {
    pub fn new(gains: ControllerGains, references: &[Vec3]) -> Result<Self> {
        gains.validate()?;
        if gains.count() != references.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} controller gains for {} reference vectors",
                gains.count(),
                references.len()
            )));
        }
        let references: Vec<Vec3> = references.iter().map(|r| r.normalize()).collect();
        let w = w_matrix(&gains.rho, &references)?;
        Ok(Self { gains, references, w })
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn references(&self) -> &[Vec3] {
        &self.references
    }

    pub fn w(&self) -> &WMatrix {
        &self.w
    }

    pub fn derivative(&self, s: &ClosedLoopState) -> ClosedLoopRate {
        let g = &self.gains;
        let (q0, qv) = (s.q.w, s.q.v);
        let w = &self.w.matrix;
        let mut coupling = Vec3::zeros();
        let b_bar = s
            .b_bar
            .iter()
            .zip(&self.references)
            .enumerate()
            .map(|(i, (bb, r))| {
                coupling += r.cross(bb) * g.rho[i];
                -bb * g.alpha[i] - r.cross(&s.omega) * g.delta[i]
            })
            .collect();
        let dq0 = -0.5 * qv.dot(&s.omega);
        let dqv = (s.omega * q0 + qv.cross(&s.omega)) * 0.5;
        let domega = -(w * qv * q0 - qv.cross(&(w * qv))) * 2.0 - coupling - s.omega * g.k;
        ClosedLoopRate {
            b_bar,
            q: Vector4::new(dq0, dqv.x, dqv.y, dqv.z),
            omega: domega,
        }
    }

    /// `V3 = Σ (ρ_i/δ_i)|b̄_i|² + 4 q̄ᵀ W q̄ + |ω̄|²`.
    pub fn v3(&self, s: &ClosedLoopState) -> f64 {
        let g = &self.gains;
        let b: f64 = s
            .b_bar
            .iter()
            .enumerate()
            .map(|(i, bb)| g.rho[i] / g.delta[i] * bb.norm_squared())
            .sum();
        b + 4.0 * s.q.v.dot(&(self.w.matrix * s.q.v)) + s.omega.norm_squared()
    }

    /// `V̇3 = -2 k |ω̄|² - 2 Σ α_i (ρ_i/δ_i) |b̄_i|²`.
    pub fn v3_rate(&self, s: &ClosedLoopState) -> f64 {
        let g = &self.gains;
        let b: f64 = s
            .b_bar
            .iter()
            .enumerate()
            .map(|(i, bb)| g.alpha[i] * g.rho[i] / g.delta[i] * bb.norm_squared())
            .sum();
        -2.0 * (g.k * s.omega.norm_squared() + b)
    }

    /// One RK4 step with the quaternion renormalized afterwards.
    pub fn rk4_step(&self, s: &ClosedLoopState, dt: f64) -> ClosedLoopState {
        let k1 = self.derivative(s);
        let k2 = self.derivative(&s.axpy(0.5 * dt, &k1));
        let k3 = self.derivative(&s.axpy(0.5 * dt, &k2));
        let k4 = self.derivative(&s.axpy(dt, &k3));
        let mut out = s.clone();
        for (k, w) in [(&k1, dt / 6.0), (&k2, dt / 3.0), (&k3, dt / 3.0), (&k4, dt / 6.0)] {
            out = out.axpy(w, k);
        }
        out.q = out.q.normalize();
        out
    }

    /// Integrate for `duration` seconds, calling `observe` after every step.
    pub fn simulate<F>(&self, start: &ClosedLoopState, duration: f64, dt: f64, mut observe: F) -> Result<ClosedLoopState>
    where
        F: FnMut(f64, &ClosedLoopState),
    {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep { dt, max: f64::INFINITY });
        }
        let steps = (duration / dt).round() as usize;
        let mut s = start.clone();
        for k in 1..=steps {
            s = self.rk4_step(&s, dt);
            let t = k as f64 * dt;
            if !s.is_finite() {
                return Err(Error::Divergence { t });
            }
            observe(t, &s);
        }
        Ok(s)
    }

    fn with_attitude(&self, q: Quaternion) -> ClosedLoopState {
        ClosedLoopState {
            b_bar: vec![Vec3::zeros(); self.references.len()],
            q,
            omega: Vec3::zeros(),
        }
    }

    /// `Θ₁±` (desired attitude) then `Θ_(j+1)±` for each unit eigenvector `v_j`
    /// of `W`, eigenvalues ascending: 8 states in total.
    pub fn equilibria(&self) -> Result<Vec<ClosedLoopState>> {
        self.w.check_distinct()?;
        let mut out = vec![
            self.with_attitude(Quaternion::IDENTITY),
            self.with_attitude(-Quaternion::IDENTITY),
        ];
        for j in 0..3 {
            let v = self.w.eigenvectors.column(j).into_owned();
            out.push(self.with_attitude(Quaternion::from_parts(0.0, v)));
            out.push(self.with_attitude(Quaternion::from_parts(0.0, -v)));
        }
        Ok(out)
    }

    /// Perturb the undesired equilibrium `Q̄ = (0, v_j)` to
    /// `Q̄* = (0, v_j) ⊙ (√(1-ε²), ε v_j) = (-ε, √(1-ε²) v_j)`, which lowers
    /// `4 q̄ᵀ W q̄` by exactly `4 λ_j ε²`, add the given `b̄*` and `ω̄*`, then
    /// simulate for `horizon` seconds.
    pub fn instability_probe(
        &self,
        j: usize,
        eps: f64,
        b_bar: &[Vec3],
        omega: &Vec3,
        horizon: f64,
        dt: f64,
    ) -> Result<InstabilityProbe> {
        self.w.check_distinct()?;
        if j >= 3 {
            return Err(Error::DimensionMismatch(format!("eigen-index {j} out of range")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidScenario(format!("perturbation size {eps} not in (0, 0.5)")));
        }
        if b_bar.len() != self.references.len() {
            return Err(Error::DimensionMismatch("b̄* needs one entry per vector".into()));
        }
        let v = self.w.eigenvectors.column(j).into_owned();
        let equilibrium = self.with_attitude(Quaternion::from_parts(0.0, v));
        let x0 = (1.0 - eps * eps).sqrt();
        let q = equilibrium.q.hamilton(&Quaternion::from_parts(x0, v * eps));
        let start = ClosedLoopState {
            b_bar: b_bar.to_vec(),
            q,
            omega: *omega,
        };
        let initial_distance = start.distance(&equilibrium);
        let end = self.simulate(&start, horizon, dt, |_, _| {})?;
        let final_distance = end.distance(&equilibrium);
        Ok(InstabilityProbe {
            v3_perturbed: self.v3(&start),
            v3_equilibrium: self.v3(&equilibrium),
            initial_distance,
            final_distance,
            escaped: final_distance > initial_distance.max(0.1),
            final_state: end,
        })
    }
}

//! Rigid-body plant and sensor synthesis.

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controller::Inertia;
use crate::filters::MeasurementFrame;
use crate::so3::{Quaternion, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub q: Quaternion,
    /// Body angular velocity, rad/s.
    pub omega: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(q: Quaternion) -> Self {
        Self {
            q,
            omega: Vec3::zeros(),
        }
    }

    fn axpy(&self, h: f64, dq: &Vector4<f64>, dw: &Vec3) -> Self {
        Self {
            q: Quaternion::from_vector4(&(self.q.to_vector4() + dq * h)),
            omega: self.omega + dw * h,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.omega.iter().all(|v| v.is_finite())
    }

    /// Inertial-frame angular momentum `R J ω`.
    pub fn angular_momentum(&self, inertia: &Inertia) -> Vec3 {
        self.q.rotate(&(inertia.matrix() * self.omega))
    }

    pub fn kinetic_energy(&self, inertia: &Inertia) -> f64 {
        0.5 * self.omega.dot(&(inertia.matrix() * self.omega))
    }
}

/// `Q̇ = ½ Q ⊙ (0, ω)`, `ω̇ = J⁻¹(-S(ω) J ω + τ)`.
pub fn body_dynamics_derivative(inertia: &Inertia, state: &RigidBodyState, tau: &Vec3) -> (Vector4<f64>, Vec3) {
    let j = inertia.matrix();
    let w = &state.omega;
    let dw = inertia.inverse() * (-w.cross(&(j * w)) + tau);
    (state.q.derivative(w), dw)
}

/// Classical RK4 with the torque evaluated at each stage, quaternion renormalized after the step.
pub fn rk4_step_with<F>(inertia: &Inertia, state: &RigidBodyState, t: f64, dt: f64, mut torque: F) -> Result<RigidBodyState>
where
    F: FnMut(f64, &RigidBodyState) -> Vec3,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep { dt, max: f64::INFINITY });
    }
    let mut stage = |tt: f64, s: &RigidBodyState| {
        let tau = torque(tt, s);
        body_dynamics_derivative(inertia, s, &tau)
    };
    let (q1, w1) = stage(t, state);
    let (q2, w2) = stage(t + 0.5 * dt, &state.axpy(0.5 * dt, &q1, &w1));
    let (q3, w3) = stage(t + 0.5 * dt, &state.axpy(0.5 * dt, &q2, &w2));
    let (q4, w4) = stage(t + dt, &state.axpy(dt, &q3, &w3));
    let dq = (q1 + q2 * 2.0 + q3 * 2.0 + q4) / 6.0;
    let dw = (w1 + w2 * 2.0 + w3 * 2.0 + w4) / 6.0;
    let mut next = state.axpy(dt, &dq, &dw);
    next.q = next.q.normalize();
    if !next.is_finite() {
        return Err(Error::Divergence { t: t + dt });
    }
    Ok(next)
}

/// RK4 step with torque held constant.
pub fn rk4_step(inertia: &Inertia, state: &RigidBodyState, tau: &Vec3, dt: f64) -> Result<RigidBodyState> {
    rk4_step_with(inertia, state, 0.0, dt, |_, _| *tau)
}

/// Prescribed body rate `ω_k(t) = amplitude · sin(frequency_k t + phase_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidalRate {
    pub amplitude: f64,
    pub frequency: Vec3,
    pub phase: Vec3,
}

impl Default for SinusoidalRate {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            frequency: Vec3::new(0.5, 0.7, 0.3),
            phase: Vec3::new(0.0, 1.0, 2.0),
        }
    }
}

impl SinusoidalRate {
    pub fn omega(&self, t: f64) -> Vec3 {
        (self.frequency * t + self.phase).map(f64::sin) * self.amplitude
    }

    pub fn omega_dot(&self, t: f64) -> Vec3 {
        (self.frequency * t + self.phase)
            .map(f64::cos)
            .component_mul(&self.frequency)
            * self.amplitude
    }

    /// Open-loop torque `J ω̇ + S(ω) J ω` that realizes the profile exactly.
    pub fn torque(&self, inertia: &Inertia, t: f64) -> Vec3 {
        let j = inertia.matrix();
        let w = self.omega(t);
        j * self.omega_dot(t) + w.cross(&(j * w))
    }
}

/// Ground truth sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrajectory {
    pub dt: f64,
    pub states: Vec<RigidBodyState>,
}

impl TruthTrajectory {
    /// Drive the plant with the open-loop torque of `profile` from `q0`.
    pub fn generate(inertia: &Inertia, q0: Quaternion, profile: &SinusoidalRate, duration: f64, dt: f64) -> Result<Self> {
        let steps = (duration / dt).round() as usize;
        let mut states = Vec::with_capacity(steps + 1);
        let mut s = RigidBodyState {
            q: q0,
            omega: profile.omega(0.0),
        };
        states.push(s);
        for k in 0..steps {
            s = rk4_step_with(inertia, &s, k as f64 * dt, dt, |t, _| profile.torque(inertia, t))?;
            states.push(s);
        }
        Ok(Self { dt, states })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Gyro bias, white noise levels and sample rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// Constant gyro bias `η`, rad/s.
    pub bias: Vec3,
    /// Optional linear bias drift, rad/s²; `None` keeps the bias constant.
    pub bias_drift: Option<Vec3>,
    pub sigma_gyro: f64,
    /// Noise level of each direction sensor (applied before renormalization).
    pub sigma_vectors: Vec<f64>,
    /// Update rate of each direction sensor, Hz; samples are held between updates.
    pub vector_rates: Vec<f64>,
    pub seed: u64,
}

impl SensorModel {
    /// Bias only, no noise, every channel updated at every call.
    pub fn noise_free(bias: Vec3, vectors: usize) -> Self {
        Self {
            bias,
            bias_drift: None,
            sigma_gyro: 0.0,
            sigma_vectors: vec![0.0; vectors],
            vector_rates: vec![f64::INFINITY; vectors],
            seed: 0,
        }
    }

    pub fn bias_at(&self, t: f64) -> Vec3 {
        match self.bias_drift {
            Some(d) => self.bias + d * t,
            None => self.bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_vectors.len() != self.vector_rates.len() {
            return Err(Error::InvalidScenario("one noise level and one rate per direction sensor".into()));
        }
        let bad_sigma = std::iter::once(self.sigma_gyro)
            .chain(self.sigma_vectors.iter().copied())
            .any(|s| !(s >= 0.0 && s.is_finite()));
        if bad_sigma {
            return Err(Error::InvalidScenario("noise levels must be finite and non-negative".into()));
        }
        if self.vector_rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidScenario("sensor rates must be positive".into()));
        }
        Ok(())
    }
}

/// Stateful measurement channel: owns the RNG stream and the held samples.
#[derive(Debug, Clone)]
pub struct Sensors {
    model: SensorModel,
    references: Vec<Vec3>,
    rng: ChaCha8Rng,
    held: Vec<Option<Vec3>>,
    samples_taken: Vec<u64>,
}

impl Sensors {
    pub fn new(model: SensorModel, references: &[Vec3]) -> Result<Self> {
        model.validate()?;
        if model.sigma_vectors.len() != references.len() {
            return Err(Error::InvalidScenario(format!(
                "{} sensor channels for {} reference vectors",
                model.sigma_vectors.len(),
                references.len()
            )));
        }
        let m = references.len();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            references: references.iter().map(|r| r.normalize()).collect(),
            held: vec![None; m],
            samples_taken: vec![0; m],
            model,
        })
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    fn gaussian(&mut self, sigma: f64) -> Vec3 {
        if sigma == 0.0 {
            return Vec3::zeros();
        }
        let n = Normal::new(0.0, sigma).expect("validated sigma");
        Vec3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng))
    }

    /// Sample every channel at time `t`. Calls must have non-decreasing `t`.
    pub fn sense(&mut self, state: &RigidBodyState, t: f64) -> MeasurementFrame {
        let omega_m = state.omega + self.model.bias_at(t) + self.gaussian(self.model.sigma_gyro);
        for i in 0..self.references.len() {
            let rate = self.model.vector_rates[i];
            let due = self.held[i].is_none()
                || rate.is_infinite()
                || t + 1e-9 >= self.samples_taken[i] as f64 / rate;
            if due {
                let sigma = self.model.sigma_vectors[i];
                let b = state.q.inverse_rotate(&self.references[i]) + self.gaussian(sigma);
                self.held[i] = Some(b.normalize());
                self.samples_taken[i] = if rate.is_infinite() {
                    self.samples_taken[i] + 1
                } else {
                    (t * rate + 1e-9).floor() as u64 + 1
                };
            }
        }
        MeasurementFrame {
            t,
            vectors: self.held.iter().map(|b| b.expect("all channels sampled")).collect(),
            omega_m,
        }
    }
}

/// Exact measurements `b_i = Rᵀ r_i`, `ω_m = ω + η`.
pub fn exact_frame(state: &RigidBodyState, references: &[Vec3], bias: &Vec3, t: f64) -> MeasurementFrame {
    MeasurementFrame {
        t,
        vectors: references.iter().map(|r| state.q.inverse_rotate(&r.normalize())).collect(),
        omega_m: state.omega + bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_is_stationary() {
        let j = Inertia::quadrotor();
        let s = RigidBodyState::at_rest(Quaternion::from_axis_angle(&Vec3::x(), 0.3));
        let (dq, dw) = body_dynamics_derivative(&j, &s, &Vec3::zeros());
        assert_eq!(dq, Vector4::zeros());
        assert_eq!(dw, Vec3::zeros());
        let next = rk4_step(&j, &s, &Vec3::zeros(), 1e-3).unwrap();
        assert_relative_eq!(next.q.to_vector4(), s.q.to_vector4(), epsilon = 1e-15);
        assert_eq!(next.omega, s.omega);
    }

    #[test]
    fn isotropic_body_has_no_gyroscopic_term() {
        let j = Inertia::diagonal(1.0, 1.0, 1.0).unwrap();
        let s = RigidBodyState {
            q: Quaternion::IDENTITY,
            omega: Vec3::new(0.3, -1.0, 2.0),
        };
        let (_, dw) = body_dynamics_derivative(&j, &s, &Vec3::zeros());
        assert_eq!(dw, Vec3::zeros());
    }

    #[test]
    fn gyroscopic_term_by_hand() {
        // -ω × Jω with ω = (1,1,1), J = diag(1,2,3): -(1,1,1)×(1,2,3) = (-1, 2, -1)
        let j = Inertia::diagonal(1.0, 2.0, 3.0).unwrap();
        let s = RigidBodyState {
            q: Quaternion::IDENTITY,
            omega: Vec3::new(1.0, 1.0, 1.0),
        };
        let (_, dw) = body_dynamics_derivative(&j, &s, &Vec3::zeros());
        assert_relative_eq!(dw, Vec3::new(-1.0, 1.0, -1.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn open_loop_torque_tracks_profile() {
        let j = Inertia::quadrotor();
        let profile = SinusoidalRate::default();
        let truth = TruthTrajectory::generate(&j, Quaternion::IDENTITY, &profile, 5.0, 1e-3).unwrap();
        for (k, s) in truth.states.iter().enumerate().step_by(500) {
            assert_relative_eq!(s.omega, profile.omega(truth.time(k)), epsilon = 1e-9);
        }
    }

    #[test]
    fn noise_free_sensing_is_exact() {
        let refs = [Vec3::z(), Vec3::x()];
        let q = Quaternion::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.4);
        let s = RigidBodyState {
            q,
            omega: Vec3::new(0.1, 0.2, 0.3),
        };
        let mut sensors = Sensors::new(SensorModel::noise_free(Vec3::zeros(), 2), &refs).unwrap();
        let f = sensors.sense(&s, 0.0);
        assert_eq!(f.omega_m, s.omega);
        for (b, r) in f.vectors.iter().zip(&refs) {
            assert_relative_eq!(*b, q.to_rotation().0.transpose() * r, epsilon = 1e-15);
        }
    }

    #[test]
    fn slow_channel_is_held() {
        let refs = [Vec3::z(), Vec3::x()];
        let mut model = SensorModel::noise_free(Vec3::zeros(), 2);
        model.vector_rates = vec![100.0, 10.0];
        let mut sensors = Sensors::new(model, &refs).unwrap();
        let mut updates = 0;
        let mut last = None;
        for k in 0..100 {
            let t = k as f64 * 0.01;
            let q = Quaternion::from_axis_angle(&Vec3::z(), t);
            let f = sensors.sense(&RigidBodyState::at_rest(q), t);
            if last != Some(f.vectors[1]) {
                updates += 1;
                last = Some(f.vectors[1]);
            }
        }
        assert_eq!(updates, 10);
    }

    #[test]
    fn bias_drift_flag() {
        let mut model = SensorModel::noise_free(Vec3::new(0.01, 0.0, 0.0), 2);
        assert_eq!(model.bias_at(100.0), model.bias);
        model.bias_drift = Some(Vec3::new(1e-4, 0.0, 0.0));
        assert_relative_eq!(model.bias_at(10.0).x, 0.011, epsilon = 1e-15);
    }

    #[test]
    fn invalid_models_rejected() {
        let mut model = SensorModel::noise_free(Vec3::zeros(), 2);
        model.sigma_gyro = -1.0;
        assert!(model.validate().is_err());
        let model = SensorModel::noise_free(Vec3::zeros(), 3);
        assert!(Sensors::new(model, &[Vec3::z(), Vec3::x()]).is_err());
    }
}

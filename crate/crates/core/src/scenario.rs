//! End-to-end scenarios: simulated estimation (filters followed by TRIAD) and
//! closed-loop attitude control on the rigid-body plant.

use nalgebra::DVector;

use crate::controller::{
    control_torque, tracking_filter_derivative, ClosedLoopModel, ClosedLoopState, ControllerGains,
    DesiredState, DesiredTrajectory, Inertia, YawWithRollNod,
};
use crate::filters::{estimation_errors, EstimationErrors, FilterDesign, FilterState, Integrator, MeasurementFrame};
use crate::log::{quat, xyz, Table};
use crate::sim::{exact_frame, rk4_step, RigidBodyState, SensorModel, Sensors, SinusoidalRate, TruthTrajectory};
use crate::so3::{attitude_angle_error, quat_to_euler, EulerAngles, Quaternion, Vec3};
use crate::triad::{triad_estimate, VectorPair};
use crate::{Error, Result};

/// Gravity direction and local magnetic field direction of the bench, NED frame.
pub fn bench_references() -> Vec<Vec3> {
    vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.434, -0.04, 0.899).normalize()]
}

/// Gyro bias used by the estimation scenario, rad/s.
pub fn scenario_bias() -> Vec3 {
    Vec3::new(0.02, -0.01, 0.03)
}

/// Initial attitude of the stabilization experiment (roll, pitch, yaw in degrees).
pub fn bench_initial_attitude() -> EulerAngles {
    EulerAngles::new(-18.478, 41.192, 2.847)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationScenario {
    pub duration: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub references: Vec<Vec3>,
    pub initial_attitude: Quaternion,
    pub rate_profile: SinusoidalRate,
    pub inertia: Inertia,
    pub sensors: SensorModel,
}

impl EstimationScenario {
    /// 60 s at 100 Hz with forward Euler, sinusoidal body rates of amplitude
    /// 0.5 rad/s, constant gyro bias and noise-free sensors.
    pub fn bench() -> Self {
        Self {
            duration: 60.0,
            dt: 0.01,
            integrator: Integrator::Euler,
            references: bench_references(),
            initial_attitude: Quaternion::IDENTITY,
            rate_profile: SinusoidalRate::default(),
            inertia: Inertia::quadrotor(),
            sensors: SensorModel::noise_free(scenario_bias(), 2),
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.duration >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "duration {} and dt {} must be non-negative and positive",
                self.duration, self.dt
            )));
        }
        Ok((self.duration / self.dt).round() as usize)
    }
}

/// Feeds a stream of measurement frames through a filter, holding each frame
/// constant until the next one arrives. Shared by simulation and log replay.
#[derive(Debug, Clone)]
pub struct FilterRunner<'a> {
    design: &'a FilterDesign,
    integrator: Integrator,
    state: Option<FilterState>,
    last_frame: Option<MeasurementFrame>,
}

impl<'a> FilterRunner<'a> {
    pub fn new(design: &'a FilterDesign, integrator: Integrator) -> Self {
        Self {
            design,
            integrator,
            state: None,
            last_frame: None,
        }
    }

    /// Advance to the time of `frame` and return the state there. The first
    /// frame initializes the estimates to the measured directions.
    pub fn push(&mut self, frame: MeasurementFrame) -> Result<&FilterState> {
        let next = match (&self.state, &self.last_frame) {
            (Some(s), Some(prev)) => {
                let dt = frame.t - prev.t;
                if !(dt > 0.0) {
                    return Err(Error::InvalidScenario(format!(
                        "time must increase: {} after {}",
                        frame.t, prev.t
                    )));
                }
                self.design.step(s, prev, dt, self.integrator)?
            }
            _ => self.design.initial_state(&frame)?,
        };
        self.last_frame = Some(frame);
        Ok(self.state.insert(next))
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }
}

/// TRIAD on the normalized estimates, first vector as primary.
pub fn attitude_from_estimates(estimates: &[Vec3], references: &[Vec3]) -> Option<Quaternion> {
    if estimates.len() < 2 || references.len() < 2 {
        return None;
    }
    let p = VectorPair::new(estimates[0].normalize(), references[0]);
    let s = VectorPair::new(estimates[1].normalize(), references[1]);
    triad_estimate(&p, &s).ok().map(|r| r.to_quaternion())
}

/// Ground truth needed for the error columns of an estimation log.
#[derive(Debug, Clone, Copy)]
pub struct TruthSample<'a> {
    pub state: &'a RigidBodyState,
    pub bias: Vec3,
}

pub fn estimation_columns(design: &FilterDesign, with_truth: bool) -> Vec<String> {
    let m = design.channels().len();
    let mut c = vec!["t".to_string()];
    if with_truth {
        c.extend(quat("q"));
        c.extend(xyz("w"));
        c.extend(xyz("eta"));
    }
    for i in 1..=m {
        c.extend(xyz(&format!("b{i}")));
    }
    c.extend(xyz("wm"));
    for i in 1..=m {
        c.extend(xyz(&format!("bhat{i}")));
    }
    c.extend(xyz("etahat"));
    c.extend(quat("qhat"));
    if with_truth {
        for i in 1..=m {
            c.push(format!("btilde{i}_norm"));
        }
        c.extend(xyz("etatilde"));
        c.push("etatilde_norm".into());
        c.push("att_err_deg".into());
        c.push("lyapunov".into());
    }
    for i in 1..=m {
        for k in 0..design.internal_dim() {
            c.push(format!("x{i}_{k}"));
        }
    }
    c
}

pub fn estimation_row(
    design: &FilterDesign,
    frame: &MeasurementFrame,
    state: &FilterState,
    truth: Option<TruthSample<'_>>,
) -> Vec<f64> {
    let refs = design.references();
    let mut row = vec![frame.t];
    let truth_vectors = truth.map(|tr| refs.iter().map(|r| tr.state.q.inverse_rotate(r)).collect::<Vec<_>>());
    if let Some(tr) = truth {
        row.extend(tr.state.q.to_array());
        row.extend(tr.state.omega.iter());
        row.extend(tr.bias.iter());
    }
    for b in &frame.vectors {
        row.extend(b.iter());
    }
    row.extend(frame.omega_m.iter());
    for b in &state.estimates {
        row.extend(b.iter());
    }
    row.extend(state.bias.iter());
    let q_hat = attitude_from_estimates(&state.estimates, &refs);
    row.extend(q_hat.map(|q| q.to_array()).unwrap_or([f64::NAN; 4]));
    if let (Some(tr), Some(tv)) = (truth, &truth_vectors) {
        let e = estimation_errors(state, tv, &tr.bias);
        row.extend(e.vectors.iter().map(|v| v.norm()));
        row.extend(e.bias.iter());
        row.push(e.bias.norm());
        row.push(q_hat.map_or(f64::NAN, |q| attitude_angle_error(&q, &tr.state.q).to_degrees()));
        row.push(design.lyapunov_value(state, tv, &tr.bias));
    }
    for x in &state.internal {
        row.extend(x.iter());
    }
    row
}

/// Result of a simulated estimation run.
#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub table: Table,
    pub final_state: FilterState,
    pub final_errors: EstimationErrors,
    /// Measurement frames at the filter rate, as fed to the filter.
    pub frames: Vec<MeasurementFrame>,
}

/// Simulate the plant and sensors and run the filter.
///
/// With forward Euler each frame is held over its step, exactly as in log
/// replay. With RK4 the sensors are also sampled at the step midpoints so
/// that every stage sees a consistent measurement.
pub fn run_estimation(design: &FilterDesign, sc: &EstimationScenario) -> Result<EstimationRun> {
    let n = sc.steps()?;
    let half = 0.5 * sc.dt;
    let truth = TruthTrajectory::generate(&sc.inertia, sc.initial_attitude, &sc.rate_profile, sc.duration, half)?;
    let mut sensors = Sensors::new(sc.sensors.clone(), &sc.references)?;
    let stride = match sc.integrator {
        Integrator::Euler => 2,
        Integrator::Rk4 => 1,
    };
    let sampled: Vec<MeasurementFrame> = (0..=2 * n)
        .step_by(stride)
        .map(|j| sensors.sense(&truth.states[j], j as f64 * half))
        .collect();
    let frame_at = |k: usize| &sampled[k * 2 / stride];

    let mut table = Table::new(estimation_columns(design, true));
    let mut frames = Vec::with_capacity(n + 1);
    let mut state = design.initial_state(frame_at(0))?;
    let mut runner = FilterRunner::new(design, Integrator::Euler);
    for k in 0..=n {
        let frame = frame_at(k).clone();
        let t = frame.t;
        state = match sc.integrator {
            Integrator::Euler => runner.push(frame.clone())?.clone(),
            Integrator::Rk4 if k == 0 => state,
            Integrator::Rk4 => design.step_with_source(&state, t - sc.dt, sc.dt, Integrator::Rk4, |tt| {
                let j = ((tt / half).round() as usize).min(2 * n);
                sampled[j].clone()
            })?,
        };
        let truth_state = &truth.states[2 * k];
        let sample = TruthSample {
            state: truth_state,
            bias: sc.sensors.bias_at(t),
        };
        table.push(estimation_row(design, &frame, &state, Some(sample)));
        frames.push(frame);
    }
    let last = &truth.states[2 * n];
    let truth_vectors: Vec<Vec3> = sc.references.iter().map(|r| last.q.inverse_rotate(&r.normalize())).collect();
    let final_errors = estimation_errors(&state, &truth_vectors, &sc.sensors.bias_at(n as f64 * sc.dt));
    Ok(EstimationRun {
        table,
        final_state: state,
        final_errors,
        frames,
    })
}

/// Run a filter over recorded frames (no truth available).
pub fn replay_frames<I>(design: &FilterDesign, integrator: Integrator, frames: I) -> Result<Table>
where
    I: IntoIterator<Item = MeasurementFrame>,
{
    let mut table = Table::new(estimation_columns(design, false));
    let mut runner = FilterRunner::new(design, integrator);
    for frame in frames {
        let state = runner.push(frame.clone())?.clone();
        table.push(estimation_row(design, &frame, &state, None));
    }
    Ok(table)
}

/// Desired attitude profile for a control scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesiredSpec {
    Fixed(Quaternion),
    YawWithRollNod(YawWithRollNod),
}

impl DesiredTrajectory for DesiredSpec {
    fn sample(&self, t: f64) -> DesiredState {
        match self {
            DesiredSpec::Fixed(q) => DesiredState::rest(*q),
            DesiredSpec::YawWithRollNod(n) => n.sample(t),
        }
    }
}

/// Which vectors enter the torque law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VectorFeedback {
    /// Filtered estimates `b̂_i` (the designed law).
    #[default]
    Filtered,
    /// Raw measurements `b_i`, for comparison.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlScenario {
    pub duration: f64,
    pub plant_dt: f64,
    /// Control loop rate, Hz. Torque is held between updates.
    pub control_rate: f64,
    pub inertia: Inertia,
    pub gains: ControllerGains,
    pub references: Vec<Vec3>,
    pub initial: RigidBodyState,
    /// Initial filter estimates; the first measurement when `None`.
    pub initial_estimates: Option<Vec<Vec3>>,
    pub desired: DesiredSpec,
    pub sensors: SensorModel,
    pub feedback: VectorFeedback,
}

impl ControlScenario {
    /// Stabilization to the level attitude from the bench initial condition,
    /// with the bench gains, 100 Hz control on a 1 kHz plant, 60 s.
    pub fn bench() -> Self {
        Self {
            duration: 60.0,
            plant_dt: 1e-3,
            control_rate: 100.0,
            inertia: Inertia::quadrotor(),
            gains: ControllerGains::bench(),
            references: bench_references(),
            initial: RigidBodyState::at_rest(bench_initial_attitude().to_quaternion()),
            initial_estimates: None,
            desired: DesiredSpec::Fixed(Quaternion::IDENTITY),
            sensors: SensorModel::noise_free(Vec3::zeros(), 2),
            feedback: VectorFeedback::Filtered,
        }
    }

    fn timing(&self) -> Result<(f64, usize, usize)> {
        let tc = 1.0 / self.control_rate;
        if !(self.plant_dt > 0.0 && tc.is_finite() && tc > 0.0 && self.duration >= 0.0) {
            return Err(Error::InvalidScenario("rates, step and duration must be positive".into()));
        }
        let sub = (tc / self.plant_dt).round() as usize;
        if sub == 0 || ((sub as f64) * self.plant_dt - tc).abs() > 1e-9 * tc {
            return Err(Error::InvalidScenario(format!(
                "plant step {} s must divide the control period {tc} s",
                self.plant_dt
            )));
        }
        Ok((tc, sub, (self.duration * self.control_rate).round() as usize))
    }
}

pub fn control_columns(m: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(quat("qbar"));
    c.extend(xyz("wbar"));
    for i in 1..=m {
        c.extend(xyz(&format!("bbar{i}")));
    }
    c.push("v3".into());
    c.extend(xyz("tau"));
    c.extend(["roll_deg".into(), "pitch_deg".into(), "yaw_deg".into()]);
    for i in 1..=m {
        c.extend(xyz(&format!("bhat{i}_unit")));
    }
    c.push("att_err_deg".into());
    c
}

#[derive(Debug, Clone)]
pub struct ControlRun {
    pub table: Table,
    pub final_theta: ClosedLoopState,
    pub final_plant: RigidBodyState,
    pub final_estimates: Vec<Vec3>,
}

/// Sampled-data closed loop: at each control tick the sensors are read, the
/// torque is computed and held, and the vector filter takes one Euler step.
pub fn run_control(sc: &ControlScenario) -> Result<ControlRun> {
    let (tc, sub, n) = sc.timing()?;
    let model = ClosedLoopModel::new(sc.gains.clone(), &sc.references)?;
    let refs = model.references().to_vec();
    let mut sensors = Sensors::new(sc.sensors.clone(), &refs)?;
    let mut plant = sc.initial;
    let mut table = Table::new(control_columns(refs.len()));
    let mut estimates: Option<Vec<Vec3>> = sc.initial_estimates.clone();
    if let Some(e) = &estimates {
        if e.len() != refs.len() {
            return Err(Error::InvalidScenario("one initial estimate per reference vector".into()));
        }
    }
    let mut theta = None;
    for k in 0..=n {
        let t = k as f64 * tc;
        let frame = sensors.sense(&plant, t);
        let bh = estimates.get_or_insert_with(|| frame.vectors.clone());
        let desired = sc.desired.sample(t);
        let bd = desired.desired_vectors(&refs);
        let feedback = match sc.feedback {
            VectorFeedback::Filtered => bh.as_slice(),
            VectorFeedback::Raw => frame.vectors.as_slice(),
        };
        let tau = control_torque(&sc.gains, &sc.inertia, &frame.omega_m, &desired, &bd, feedback);
        let th = ClosedLoopState::from_plant(&plant.q, &plant.omega, bh, &refs, &desired);
        let euler = quat_to_euler(&plant.q).unwrap_or(EulerAngles::new(f64::NAN, f64::NAN, f64::NAN));

        let mut row = vec![t];
        row.extend(th.q.to_array());
        row.extend(th.omega.iter());
        for b in &th.b_bar {
            row.extend(b.iter());
        }
        row.push(model.v3(&th));
        row.extend(tau.iter());
        row.extend([euler.roll, euler.pitch, euler.yaw]);
        for b in bh.iter() {
            row.extend(b.normalize().iter());
        }
        row.push(th.attitude_error().to_degrees());
        table.push(row);
        theta = Some(th);
        if k == n {
            break;
        }

        let rate = tracking_filter_derivative(&sc.gains, bh, &frame.vectors, &frame.omega_m, &bd, &desired.omega);
        for (b, d) in bh.iter_mut().zip(rate) {
            *b += d * tc;
        }
        for s in 0..sub {
            plant = rk4_step(&sc.inertia, &plant, &tau, sc.plant_dt)
                .map_err(|_| Error::Divergence { t: t + (s + 1) as f64 * sc.plant_dt })?;
        }
        if !bh.iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence { t: t + tc });
        }
    }
    Ok(ControlRun {
        table,
        final_theta: theta.expect("at least one tick"),
        final_plant: plant,
        final_estimates: estimates.expect("at least one tick"),
    })
}

/// Continuous-time closed loop with exact measurements: plant, vector filters
/// and torque integrated together by RK4. Calls `observe` with the error
/// coordinates after every step (and once at `t = 0`).
#[allow(clippy::too_many_arguments)]
pub fn simulate_continuous_tracking<D, F>(
    gains: &ControllerGains,
    inertia: &Inertia,
    references: &[Vec3],
    desired: &D,
    initial: &RigidBodyState,
    initial_estimates: &[Vec3],
    duration: f64,
    dt: f64,
    mut observe: F,
) -> Result<ClosedLoopState>
where
    D: DesiredTrajectory + ?Sized,
    F: FnMut(f64, &ClosedLoopState),
{
    let m = references.len();
    let refs: Vec<Vec3> = references.iter().map(|r| r.normalize()).collect();
    let pack = |s: &RigidBodyState, bh: &[Vec3]| {
        let mut x = DVector::zeros(7 + 3 * m);
        x.fixed_rows_mut::<4>(0).copy_from(&s.q.to_vector4());
        x.fixed_rows_mut::<3>(4).copy_from(&s.omega);
        for (i, b) in bh.iter().enumerate() {
            x.fixed_rows_mut::<3>(7 + 3 * i).copy_from(b);
        }
        x
    };
    let unpack = |x: &DVector<f64>| {
        let s = RigidBodyState {
            q: Quaternion::from_vector4(&x.fixed_rows::<4>(0).into_owned()),
            omega: x.fixed_rows::<3>(4).into_owned(),
        };
        let bh: Vec<Vec3> = (0..m).map(|i| x.fixed_rows::<3>(7 + 3 * i).into_owned()).collect();
        (s, bh)
    };
    let rate = |t: f64, x: &DVector<f64>| {
        let (s, bh) = unpack(x);
        let d = desired.sample(t);
        let bd = d.desired_vectors(&refs);
        let frame = exact_frame(&s, &refs, &Vec3::zeros(), t);
        let tau = control_torque(gains, inertia, &s.omega, &d, &bd, &bh);
        let (dq, dw) = crate::sim::body_dynamics_derivative(inertia, &s, &tau);
        let db = tracking_filter_derivative(gains, &bh, &frame.vectors, &s.omega, &bd, &d.omega);
        let mut out = DVector::zeros(7 + 3 * m);
        out.fixed_rows_mut::<4>(0).copy_from(&dq);
        out.fixed_rows_mut::<3>(4).copy_from(&dw);
        for (i, b) in db.iter().enumerate() {
            out.fixed_rows_mut::<3>(7 + 3 * i).copy_from(b);
        }
        out
    };
    let theta_of = |t: f64, x: &DVector<f64>| {
        let (s, bh) = unpack(x);
        ClosedLoopState::from_plant(&s.q, &s.omega, &bh, &refs, &desired.sample(t))
    };

    let mut x = pack(initial, initial_estimates);
    observe(0.0, &theta_of(0.0, &x));
    let steps = (duration / dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rate(t, &x);
        let k2 = rate(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let k3 = rate(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let k4 = rate(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let qn = x.fixed_rows::<4>(0).normalize();
        x.fixed_rows_mut::<4>(0).copy_from(&qn);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t: t + dt });
        }
        observe(t + dt, &theta_of(t + dt, &x));
    }
    Ok(theta_of(steps as f64 * dt, &x))
}

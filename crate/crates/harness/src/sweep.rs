//! Monte-Carlo sweep over random closed-loop initial conditions.

use lincf_core::controller::{ClosedLoopModel, ClosedLoopState, DesiredTrajectory};
use lincf_core::log::Table;
use lincf_core::scenario::{run_control, ControlScenario};
use lincf_core::sim::RigidBodyState;
use lincf_core::so3::{Quaternion, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Final attitude error below which a run has converged, rad.
pub const CONVERGED_ATTITUDE: f64 = 1e-2;
/// Final rate error below which a run has converged, rad/s.
pub const CONVERGED_RATE: f64 = 1e-3;
/// Half-width of the uniform draw of each rate error component, rad/s.
pub const RATE_SPREAD: f64 = 1.0;
/// Half-width of the uniform draw of each vector error component.
pub const VECTOR_SPREAD: f64 = 0.2;

/// Draw the error coordinates of run `index`: uniform `Q̄` on the sphere,
/// `ω̄` and `b̄_i` uniform in boxes. Each index has its own stream.
pub fn random_error_state(seed: u64, index: u64, vectors: usize) -> ClosedLoopState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let q = Quaternion::random(&mut rng);
    let mut draw = |h: f64| Vec3::from_fn(|_, _| rng.random_range(-h..=h));
    let omega = draw(RATE_SPREAD);
    let b_bar = (0..vectors).map(|_| draw(VECTOR_SPREAD)).collect();
    ClosedLoopState { b_bar, q, omega }
}

/// Replace the plant state and filter estimates of `sc` by the draw for
/// `(seed, index)`, expressed relative to the desired state at `t = 0`.
pub fn apply_random_initial_condition(sc: &mut ControlScenario, seed: u64, index: u64) {
    let theta = random_error_state(seed, index, sc.references.len());
    let refs: Vec<Vec3> = sc.references.iter().map(|r| r.normalize()).collect();
    let (q, omega, estimates) = theta.to_plant(&refs, &sc.desired.sample(0.0));
    sc.initial = RigidBodyState { q, omega };
    sc.initial_estimates = Some(estimates);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub index: u64,
    pub converged: bool,
    pub diverged: bool,
    pub initial_v3: f64,
    pub initial_attitude_error: f64,
    pub final_attitude_error: f64,
    pub final_rate_error: f64,
    /// Scalar part of the final `Q̄`; its sign tells `Θ₁⁺` from `Θ₁⁻`.
    pub final_qbar0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub count: usize,
    pub converged: usize,
    pub diverged: usize,
    pub convergence_fraction: f64,
    pub duration: f64,
}

/// The scenario used for run `index`: the random initial condition for that
/// index and a sensor noise stream offset by the index.
pub fn sweep_scenario(base: &ControlScenario, seed: u64, index: u64) -> ControlScenario {
    let mut sc = base.clone();
    apply_random_initial_condition(&mut sc, seed, index);
    sc.sensors.seed = base.sensors.seed.wrapping_add(index);
    sc
}

pub fn run_one(base: &ControlScenario, seed: u64, index: u64) -> SweepRun {
    let sc = sweep_scenario(base, seed, index);
    let start = random_error_state(seed, index, sc.references.len());
    let initial_v3 = ClosedLoopModel::new(sc.gains.clone(), &sc.references)
        .map(|m| m.v3(&start))
        .unwrap_or(f64::NAN);
    let initial_attitude_error = start.attitude_error();
    match run_control(&sc) {
        Ok(run) => {
            let th = &run.final_theta;
            let att = th.attitude_error();
            let rate = th.omega.norm();
            SweepRun {
                index,
                converged: att < CONVERGED_ATTITUDE && rate < CONVERGED_RATE,
                diverged: false,
                initial_v3,
                initial_attitude_error,
                final_attitude_error: att,
                final_rate_error: rate,
                final_qbar0: th.q.w,
            }
        }
        Err(_) => SweepRun {
            index,
            converged: false,
            diverged: true,
            initial_v3,
            initial_attitude_error,
            final_attitude_error: f64::NAN,
            final_rate_error: f64::NAN,
            final_qbar0: f64::NAN,
        },
    }
}

/// Run `count` independent trajectories in parallel; results are ordered by
/// run index regardless of scheduling.
pub fn run_sweep(base: &ControlScenario, seed: u64, count: usize) -> (Vec<SweepRun>, SweepSummary) {
    let mut runs: Vec<SweepRun> = (0..count as u64).into_par_iter().map(|i| run_one(base, seed, i)).collect();
    runs.sort_by_key(|r| r.index);
    let converged = runs.iter().filter(|r| r.converged).count();
    let diverged = runs.iter().filter(|r| r.diverged).count();
    let summary = SweepSummary {
        seed,
        count,
        converged,
        diverged,
        convergence_fraction: if count == 0 { 0.0 } else { converged as f64 / count as f64 },
        duration: base.duration,
    };
    (runs, summary)
}

pub fn runs_table(runs: &[SweepRun]) -> Table {
    let mut t = Table::new([
        "index",
        "converged",
        "diverged",
        "initial_v3",
        "initial_att_err_rad",
        "final_att_err_rad",
        "final_wbar_norm",
        "final_qbar_0",
    ]);
    for r in runs {
        t.push(vec![
            r.index as f64,
            f64::from(u8::from(r.converged)),
            f64::from(u8::from(r.diverged)),
            r.initial_v3,
            r.initial_attitude_error,
            r.final_attitude_error,
            r.final_rate_error,
            r.final_qbar0,
        ]);
    }
    t
}

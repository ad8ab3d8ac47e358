use lincf_core::controller::{ClosedLoopModel, ClosedLoopState, ControllerGains, DesiredState, DesiredTrajectory, Inertia, YawWithRollNod};
use lincf_core::scenario::{bench_references, simulate_continuous_tracking};
use lincf_core::sim::RigidBodyState;
use lincf_core::so3::{Quaternion, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(gains: ControllerGains) -> ClosedLoopModel {
    ClosedLoopModel::new(gains, &bench_references()).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, spread: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-spread..spread))
}

fn random_state(rng: &mut ChaCha8Rng, m: usize) -> ClosedLoopState {
    ClosedLoopState {
        b_bar: (0..m).map(|_| random_vec(rng, 0.2)).collect(),
        q: Quaternion::random(rng),
        omega: random_vec(rng, 1.0),
    }
}

#[test]
fn all_eight_equilibria_are_stationary() {
    for gains in [ControllerGains::bench(), ControllerGains::sweep()] {
        let m = model(gains);
        let eq = m.equilibria().unwrap();
        assert_eq!(eq.len(), 8);
        for (i, s) in eq.iter().enumerate() {
            let r = m.derivative(s).norm();
            assert!(r < 1e-9, "equilibrium {i}: residual {r:e}");
        }
        // the undesired ones sit on the level sets 4λ_j
        for j in 0..3 {
            let v = m.v3(&eq[2 + 2 * j]);
            assert!((v - 4.0 * m.w().eigenvalues[j]).abs() < 1e-9);
        }
    }
}

/// The reduced error model and the full plant + filter + controller loop
/// driven by a moving desired attitude follow the same error trajectory.
#[test]
fn error_model_matches_full_tracking_loop() {
    let refs = bench_references();
    let gains = ControllerGains::bench();
    let inertia = Inertia::quadrotor();
    let desired = YawWithRollNod { yaw_rate: 0.3, amplitude: 0.4, frequency: 1.5 };
    let initial = RigidBodyState {
        q: Quaternion::from_axis_angle(&Vec3::new(1.0, -2.0, 0.5), 0.9),
        omega: Vec3::new(0.2, -0.1, 0.3),
    };
    let estimates: Vec<Vec3> = refs
        .iter()
        .zip([Vec3::new(0.05, 0.0, -0.02), Vec3::new(-0.03, 0.04, 0.0)])
        .map(|(r, d)| initial.q.inverse_rotate(r) + d)
        .collect();
    let d0: DesiredState = desired.sample(0.0);
    let start = ClosedLoopState::from_plant(&initial.q, &initial.omega, &estimates, &refs, &d0);
    let reduced = model(gains.clone()).simulate(&start, 5.0, 1e-3, |_, _| {}).unwrap();
    let full = simulate_continuous_tracking(&gains, &inertia, &refs, &desired, &initial, &estimates, 5.0, 1e-3, |_, _| {})
        .unwrap();
    let gap = reduced.distance(&full);
    assert!(gap < 1e-6, "gap {gap:e}");
}

#[test]
fn v3_rate_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let h = 1e-5;
    for gains in [ControllerGains::bench(), ControllerGains::sweep()] {
        let m = model(gains);
        for _ in 0..50 {
            let s = random_state(&mut rng, 2);
            let fd = (m.v3(&m.rk4_step(&s, h)) - m.v3(&m.rk4_step(&s, -h))) / (2.0 * h);
            let exact = m.v3_rate(&s);
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd {fd} vs {exact}");
            assert!(exact <= 0.0);
        }
    }
}

#[test]
fn v3_never_increases_along_rk4_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for gains in [ControllerGains::bench(), ControllerGains::sweep()] {
        let m = model(gains);
        for _ in 0..5 {
            let start = random_state(&mut rng, 2);
            let mut prev = m.v3(&start);
            let mut violations = 0;
            m.simulate(&start, 10.0, 1e-3, |_, s| {
                let v = m.v3(s);
                if v > prev + 1e-8 * prev {
                    violations += 1;
                }
                prev = v;
            })
            .unwrap();
            assert_eq!(violations, 0);
        }
    }
}

#[test]
fn convergence_holds_for_each_filter_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for delta in [0.5, 1.0, 2.0] {
        let g = ControllerGains::sweep();
        let gains = ControllerGains::new(g.rho, g.k, g.alpha, vec![delta; 2]).unwrap();
        let m = model(gains);
        for _ in 0..5 {
            let mut start = random_state(&mut rng, 2);
            if start.q.w < 0.0 {
                start.q = -start.q;
            }
            let end = m.simulate(&start, 30.0, 1e-3, |_, _| {}).unwrap();
            assert!(end.attitude_error() < 1e-2, "δ={delta}: {}", end.attitude_error());
            assert!(end.omega.norm() < 1e-3);
        }
    }
}

#[test]
fn undesired_equilibria_are_unstable() {
    let m = model(ControllerGains::bench());
    for j in 0..3 {
        let probe = m.instability_probe(j, 0.1, &[Vec3::zeros(), Vec3::zeros()], &Vec3::zeros(), 30.0, 1e-3).unwrap();
        assert!(probe.v3_perturbed < probe.v3_equilibrium);
        assert!(probe.escaped, "j={j}: final distance {}", probe.final_distance);
    }
}

/// Start points below the lowest undesired level set with a positive scalar
/// part cannot leave that sublevel set and must reach `Q̄ = +1`.
#[test]
fn sublevel_set_converges_to_positive_identity() {
    let m = model(ControllerGains::sweep());
    let bound = 4.0 * m.w().lambda_min();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut tested = 0;
    while tested < 20 {
        let mut s = random_state(&mut rng, 2);
        s.q = if s.q.w < 0.0 { -s.q } else { s.q };
        let scale = rng.random_range(0.1..1.0);
        s.omega *= scale;
        s.b_bar.iter_mut().for_each(|b| *b *= scale);
        if m.v3(&s) >= bound {
            continue;
        }
        let end = m.simulate(&s, 30.0, 1e-3, |_, _| {}).unwrap();
        assert!(end.q.w > 0.0 && end.attitude_error() < 1e-2, "{:?}", end.q);
        tested += 1;
    }
}

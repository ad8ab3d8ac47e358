use lincf_core::filters::{
    estimation_errors, isotropic_bias_gain, FilterDesign, FilterState, FilterVariant, Integrator, MeasurementFrame,
};
use lincf_core::poly::GainVector;
use lincf_core::scenario::{bench_references, run_estimation, scenario_bias, EstimationScenario};
use lincf_core::sim::{exact_frame, RigidBodyState, SensorModel};
use lincf_core::so3::{skew, Quaternion, Vec3};

const VARIANTS: [FilterVariant; 2] = [FilterVariant::Direct, FilterVariant::Passive];

fn design(variant: FilterVariant, n: usize, bias_gain: f64) -> FilterDesign {
    let g = GainVector::binomial(n, 1.0).unwrap();
    FilterDesign::new(variant, vec![g.clone(), g], &isotropic_bias_gain(bias_gain), &bench_references()).unwrap()
}

/// Body spinning at a constant rate: `Q(t) = Q0 ⊙ exp(ω t / 2)` in closed form.
struct ConstantSpin {
    q0: Quaternion,
    omega: Vec3,
}

impl ConstantSpin {
    fn state(&self, t: f64) -> RigidBodyState {
        let angle = self.omega.norm() * t;
        let step = if angle == 0.0 {
            Quaternion::IDENTITY
        } else {
            Quaternion::from_axis_angle(&self.omega, angle)
        };
        RigidBodyState {
            q: self.q0.hamilton(&step),
            omega: self.omega,
        }
    }

    fn frame(&self, refs: &[Vec3], bias: &Vec3, t: f64) -> MeasurementFrame {
        exact_frame(&self.state(t), refs, bias, t)
    }

    fn vectors(&self, refs: &[Vec3], t: f64) -> Vec<Vec3> {
        let s = self.state(t);
        refs.iter().map(|r| s.q.inverse_rotate(r)).collect()
    }
}

fn spin() -> ConstantSpin {
    ConstantSpin {
        q0: Quaternion::from_axis_angle(&Vec3::new(0.3, -1.0, 0.4), 0.7),
        omega: Vec3::new(0.2, -0.35, 0.5),
    }
}

/// Start away from the truth: perturbed estimates and non-zero compensator states.
fn perturbed_start(d: &FilterDesign, frame: &MeasurementFrame) -> FilterState {
    let mut s = d.initial_state(frame).unwrap();
    for (k, b) in s.estimates.iter_mut().enumerate() {
        *b += Vec3::new(0.05, -0.03 * k as f64, 0.02);
    }
    for x in s.internal.iter_mut() {
        for (j, v) in x.iter_mut().enumerate() {
            *v = 0.01 * (j as f64 + 1.0).sin();
        }
    }
    s
}

#[test]
fn lyapunov_rate_matches_finite_difference() {
    let refs = bench_references();
    let sp = spin();
    let eta = scenario_bias();
    let h = 1e-4;
    for variant in VARIANTS {
        for n in 1..=3 {
            let d = design(variant, n, 0.5);
            let t0 = 1.3;
            let s0 = perturbed_start(&d, &sp.frame(&refs, &eta, t0));
            let step = |s: &FilterState, t: f64| {
                d.step_with_source(s, t, h, Integrator::Rk4, |tt| sp.frame(&refs, &eta, tt)).unwrap()
            };
            let s1 = step(&s0, t0);
            let s2 = step(&s1, t0 + h);
            let v = |s: &FilterState, t: f64| d.lyapunov_value(s, &sp.vectors(&refs, t), &eta);
            let fd = (-3.0 * v(&s0, t0) + 4.0 * v(&s1, t0 + h) - v(&s2, t0 + 2.0 * h)) / (2.0 * h);
            let analytic = d.lyapunov_rate(&s0, &sp.vectors(&refs, t0));
            assert!(analytic < 0.0);
            assert!(
                (fd - analytic).abs() < 1e-6 * analytic.abs().max(1.0),
                "{variant} n={n}: finite difference {fd}, analytic {analytic}"
            );
        }
    }
}

#[test]
fn lyapunov_functions_never_increase_along_rk4_runs() {
    for variant in VARIANTS {
        for n in 1..=3 {
            let d = design(variant, n, 0.05);
            let sc = EstimationScenario {
                duration: 10.0,
                dt: 1e-3,
                integrator: Integrator::Rk4,
                ..EstimationScenario::bench()
            };
            let run = run_estimation(&d, &sc).unwrap();
            let v = run.table.column("lyapunov").unwrap();
            let violations = v.windows(2).filter(|w| w[1] - w[0] > 1e-8 * w[0]).count();
            assert_eq!(violations, 0, "{variant} n={n}");
            assert!(v.last().unwrap() < &v[0]);
        }
    }
}

/// First-order direct filter written out by hand:
/// `b̂̇ = -S(ω_m - η̂) b + γ (b - b̂)`, `η̂̇ = -(Γ γ / 2) Σ S(b) b̂`.
#[test]
fn first_order_direct_matches_hand_written_form() {
    let refs = bench_references();
    let sp = spin();
    let eta = scenario_bias();
    let (gamma, big_gamma, dt) = (1.7, 0.2, 0.01);
    let g = GainVector::new(vec![gamma]).unwrap();
    let d = FilterDesign::new(FilterVariant::Direct, vec![g.clone(), g], &isotropic_bias_gain(big_gamma), &refs)
        .unwrap();
    let mut state = perturbed_start(&d, &sp.frame(&refs, &eta, 0.0));
    let mut bh = state.estimates.clone();
    let mut eh = state.bias;
    for k in 0..3000 {
        let f = sp.frame(&refs, &eta, k as f64 * dt);
        let s = skew(&(f.omega_m - eh));
        let mut deta = Vec3::zeros();
        let mut next = Vec::new();
        for (b, est) in f.vectors.iter().zip(&bh) {
            next.push(est + (-s * b + (b - est) * gamma) * dt);
            deta -= skew(b) * est * (big_gamma * gamma / 2.0);
        }
        bh = next;
        eh += deta * dt;
        state = d.step(&state, &f, dt, Integrator::Euler).unwrap();
    }
    for (a, b) in state.estimates.iter().zip(&bh) {
        assert!((a - b).amax() < 1e-12);
    }
    assert!((state.bias - eh).amax() < 1e-12);
    assert!((state.bias - eta).norm() < 0.2 * eta.norm());
}

/// The bias update of the passive filter must oppose `Σ S(b) b̂`; with the
/// sign flipped the bias error grows instead of decaying.
#[test]
fn passive_bias_update_sign() {
    let refs = bench_references();
    let sp = spin();
    let eta = scenario_bias();
    let (gamma, big_gamma, dt) = (1.0, 0.5, 0.01);
    let d = design(FilterVariant::Passive, 1, big_gamma);
    let f0 = sp.frame(&refs, &eta, 0.0);
    let mut state = d.initial_state(&f0).unwrap();
    let (mut bh, mut eh) = (state.estimates.clone(), state.bias);
    let mut wrong_sign_diverged = false;
    for k in 0..6000 {
        let f = sp.frame(&refs, &eta, k as f64 * dt);
        state = d.step(&state, &f, dt, Integrator::Euler).unwrap();
        if !wrong_sign_diverged {
            let s = skew(&(f.omega_m - eh));
            let mut deta = Vec3::zeros();
            let mut next = Vec::new();
            for (b, est) in f.vectors.iter().zip(&bh) {
                next.push(est + (-s * est + (b - est) * gamma) * dt);
                deta += skew(b) * est * big_gamma;
            }
            bh = next;
            eh += deta * dt;
            wrong_sign_diverged = !((eh - eta).norm() < 1.0);
        }
    }
    assert!((state.bias - eta).norm() < 0.1 * eta.norm());
    assert!(wrong_sign_diverged, "flipped sign left bias error at {}", (eh - eta).norm());
}

/// With nearly collinear references and a body at rest, the bias component
/// along the common direction is practically unobservable and stays put,
/// while the orthogonal components converge.
#[test]
fn bias_along_a_lone_direction_is_not_recovered() {
    let r1 = Vec3::new(0.0, 0.0, 1.0);
    let r2 = Quaternion::from_axis_angle(&Vec3::x(), 2e-3).rotate(&r1);
    let refs = [r1, r2];
    let eta = Vec3::new(0.02, -0.01, 0.03);
    let rest = RigidBodyState::at_rest(Quaternion::IDENTITY);
    for variant in VARIANTS {
        let g = GainVector::binomial(1, 1.0).unwrap();
        let d = FilterDesign::new(variant, vec![g.clone(), g], &isotropic_bias_gain(0.5), &refs).unwrap();
        let mut s = d.initial_state(&exact_frame(&rest, &refs, &eta, 0.0)).unwrap();
        for k in 0..60_000 {
            let f = exact_frame(&rest, &refs, &eta, k as f64 * 1e-3);
            s = d.step(&s, &f, 1e-3, Integrator::Rk4).unwrap();
        }
        let e = estimation_errors(&s, &[r1, r2], &eta).bias;
        assert!(e.x.abs() < 1e-4 && e.y.abs() < 1e-4, "{variant}: {e:?}");
        assert!(e.z.abs() > 0.9 * eta.z, "{variant}: {e:?}");
    }
}

#[test]
fn euler_and_rk4_agree_on_the_bench_scenario() {
    for variant in VARIANTS {
        for n in 1..=3 {
            let d = design(variant, n, 0.003);
            let base = EstimationScenario {
                duration: 10.0,
                ..EstimationScenario::bench()
            };
            let euler = run_estimation(&d, &base).unwrap();
            let rk4 = run_estimation(
                &d,
                &EstimationScenario {
                    integrator: Integrator::Rk4,
                    ..base
                },
            )
            .unwrap();
            let gap = (euler.final_state.bias - rk4.final_state.bias).norm();
            assert!(gap < 5e-3, "{variant} n={n}: {gap}");
        }
    }
}

/// RMS over the last three quarters of the run of `b̂_i` with sensor noise
/// minus `b̂_i` without, i.e. the part of the estimate driven by noise.
fn noise_response(variant: FilterVariant, seed: u64) -> Vec<f64> {
    let d = design(variant, 1, 0.003);
    let run = |sigma: f64| {
        let sc = EstimationScenario {
            duration: 40.0,
            sensors: SensorModel {
                sigma_vectors: vec![sigma, sigma],
                seed,
                ..SensorModel::noise_free(scenario_bias(), 2)
            },
            ..EstimationScenario::bench()
        };
        run_estimation(&d, &sc).unwrap().table
    };
    let (noisy, clean) = (run(0.05), run(0.0));
    (1..=2)
        .map(|i| {
            let cols: Vec<usize> = ["x", "y", "z"]
                .iter()
                .map(|a| noisy.index_of(&format!("bhat{i}_{a}")).unwrap())
                .collect();
            let tail = noisy.len() / 4;
            let sum: f64 = noisy.rows[tail..]
                .iter()
                .zip(&clean.rows[tail..])
                .map(|(a, b)| cols.iter().map(|&c| (a[c] - b[c]).powi(2)).sum::<f64>())
                .sum();
            (sum / (noisy.len() - tail) as f64).sqrt()
        })
        .collect()
}

/// With the same first-order gains, feeding back the estimate instead of the
/// raw measurement in the rotation term lowers the noise in `b̂`.
#[test]
fn passive_filter_is_less_noise_sensitive() {
    for seed in [5, 6] {
        let direct = noise_response(FilterVariant::Direct, seed);
        let passive = noise_response(FilterVariant::Passive, seed);
        for (p, d) in passive.iter().zip(&direct) {
            assert!(p < d, "seed {seed}: passive {p} vs direct {d}");
        }
    }
}

/// Convergence to the truth in continuous time, shown with a bias gain large
/// enough for the bias to settle within the run and RK4 to remove the
/// discretization floor of forward Euler.
#[test]
fn estimates_converge_with_a_faster_bias_gain() {
    let cases = [
        (FilterVariant::Direct, 1, 1e-8),
        (FilterVariant::Direct, 2, 1e-8),
        (FilterVariant::Direct, 3, 1e-8),
        (FilterVariant::Passive, 1, 1e-8),
        (FilterVariant::Passive, 2, 1e-3),
        (FilterVariant::Passive, 3, 1e-2),
    ];
    for (variant, n, tol) in cases {
        let d = design(variant, n, 0.5);
        let sc = EstimationScenario {
            duration: 120.0,
            integrator: Integrator::Rk4,
            ..EstimationScenario::bench()
        };
        let e = run_estimation(&d, &sc).unwrap().final_errors;
        assert!(e.bias.norm() < tol, "{variant} n={n}: bias error {}", e.bias.norm());
        assert!(e.max_vector_norm() < tol, "{variant} n={n}: vector error {}", e.max_vector_norm());
    }
}

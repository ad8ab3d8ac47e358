use lincf_core::poly::{kron_with_identity, GainVector, HurwitzStatus};
use lincf_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest real part of the companion matrix eigenvalues; `None` when the
/// Schur iteration does not converge.
fn try_spectral_abscissa(g: &GainVector) -> Option<f64> {
    let schur = g.companion_matrix().try_schur(1e-14, 10_000)?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn spectral_abscissa(g: &GainVector) -> f64 {
    try_spectral_abscissa(g).expect("Schur iteration converges")
}

/// Coefficients of `∏ (s + r_k)` without the leading one.
fn gains_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, a) in c.iter().enumerate() {
            next[k] += a;
            next[k + 1] += a * r;
        }
        c = next;
    }
    c[1..].to_vec()
}

#[test]
fn binomial_gains_are_passive_admissible() {
    for n in 1..=4 {
        for alpha in [0.5, 1.0, 2.0] {
            let g = GainVector::binomial(n, alpha).unwrap();
            assert_eq!(g.is_hurwitz(), Ok(true), "n={n} alpha={alpha}");
            assert_eq!(g.in_hbar(), Ok(true), "n={n} alpha={alpha}");
            assert!(spectral_abscissa(&g) < 0.0);
        }
    }
}

#[test]
fn routh_agrees_with_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut checked, mut stable) = (0, 0);
    while checked < 1000 {
        let n = rng.random_range(1..=6);
        let g = GainVector::new((0..n).map(|_| rng.random_range(-1.0..6.0)).collect()).unwrap();
        // the eigenvalue oracle itself is unreliable within round-off of the axis
        let Some(abscissa) = try_spectral_abscissa(&g).filter(|a| a.abs() >= 1e-6) else {
            continue;
        };
        let routh = g.is_hurwitz().unwrap();
        assert_eq!(routh, abscissa < 0.0, "{:?}: abscissa {abscissa}", g.as_slice());
        checked += 1;
        stable += usize::from(routh);
    }
    // both outcomes must be exercised
    assert!(stable > 100 && stable < 900, "{stable} stable of {checked}");
}

#[test]
fn marginal_polynomials_are_indeterminate() {
    // s³ + s² + s + 1 = (s + 1)(s² + 1)
    let g = GainVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    assert!(matches!(g.hurwitz_status(), HurwitzStatus::Indeterminate { .. }));
    assert!(matches!(g.is_hurwitz(), Err(Error::IndeterminateRouth { .. })));
    // a zero coefficient is a definite answer
    let g = GainVector::new(vec![1.0, 0.0, 1.0]).unwrap();
    assert_eq!(g.hurwitz_status(), HurwitzStatus::Unstable);
}

/// Every Hurwitz cubic is passive-admissible: `s³ + γ1 s² + γ2 s + γ3` Hurwitz
/// forces `γ1, γ2 > 0`, which already makes `s² + γ1 s + γ2` Hurwitz.
/// A dense grid search finds no counterexample.
#[test]
fn third_order_hurwitz_set_is_inside_passive_set() {
    let axis: Vec<f64> = (1..=40).map(|k| 0.1 * k as f64).collect();
    let mut hurwitz = 0;
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                let g = GainVector::new(vec![a, b, c]).unwrap();
                if let Ok(true) = g.is_hurwitz() {
                    hurwitz += 1;
                    assert_eq!(g.in_hbar(), Ok(true), "({a}, {b}, {c})");
                }
            }
        }
    }
    assert!(hurwitz > 10_000);
}

/// From order five on the inclusion is strict.
#[test]
fn fifth_order_gain_outside_passive_set() {
    let g = GainVector::new(vec![0.27832077, 2.21878972, 0.55268139, 0.53792605, 0.06371681]).unwrap();
    assert_eq!(g.is_hurwitz(), Ok(true));
    assert!(spectral_abscissa(&g) < 0.0);
    assert_eq!(g.in_hbar(), Ok(false));
    assert!(spectral_abscissa(&g.project().unwrap()) > 0.0);
}

/// `A ⊗ I₃` has every root of `P_γ` three times: for each root `λ` with
/// companion eigenvector `v = (1, λ, …, λ^(n-1))`, the three vectors `v ⊗ e_k`
/// are eigenvectors, and together they span the whole space.
#[test]
fn kronecker_spectrum_repeats_each_root_three_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let mut roots: Vec<f64> = Vec::new();
        while roots.len() < n {
            let r = rng.random_range(0.5..4.0);
            if roots.iter().all(|x: &f64| (x - r).abs() > 0.3) {
                roots.push(r);
            }
        }
        let g = GainVector::new(gains_from_roots(&roots)).unwrap();
        let big = kron_with_identity(&g.companion_matrix(), 3);
        assert_eq!(big.shape(), (3 * n, 3 * n));
        let mut basis = DMatrix::zeros(3 * n, 3 * n);
        for (j, r) in roots.iter().enumerate() {
            let lambda = -r;
            let v = DVector::from_fn(n, |i, _| lambda.powi(i as i32));
            for k in 0..3 {
                let e = DVector::from_fn(3, |i, _| if i == k { 1.0 } else { 0.0 });
                let w = v.kronecker(&e);
                let res = (&big * &w - &w * lambda).amax();
                assert!(res < 1e-9 * w.amax(), "root {lambda}: residual {res}");
                basis.set_column(3 * j + k, &w);
            }
        }
        let sv = basis.singular_values();
        assert!(sv.min() > 1e-6 * sv.max(), "eigenvectors are dependent");
    }
}

#[test]
fn companion_characteristic_polynomial_matches() {
    // det(sI - A) at a few points against the monic polynomial
    let g = GainVector::new(vec![1.5, -0.3, 2.0, 0.7]).unwrap();
    let a = g.companion_matrix();
    for s in [-2.0, -0.5, 0.0, 0.3, 1.7] {
        let det = (DMatrix::identity(4, 4) * s - &a).determinant();
        let p: f64 = g.char_poly_coeffs().iter().fold(0.0, |acc, c| acc * s + c);
        assert!((det - p).abs() < 1e-12 * p.abs().max(1.0));
    }
}

proptest! {
    /// Scaling the roots by `c > 0` (γ_l → c^l γ_l) preserves stability.
    #[test]
    fn hurwitz_is_invariant_under_root_scaling(
        g in prop::collection::vec(0.05f64..5.0, 1..6),
        c in 0.2f64..5.0,
    ) {
        let a = GainVector::new(g.clone()).unwrap();
        let b = GainVector::new(g.iter().enumerate().map(|(l, x)| x * c.powi(l as i32 + 1)).collect()).unwrap();
        if let (Ok(x), Ok(y)) = (a.is_hurwitz(), b.is_hurwitz()) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn binomial_roots_are_at_minus_alpha(n in 1usize..=6, alpha in 0.1f64..4.0) {
        let g = GainVector::binomial(n, alpha).unwrap();
        let p = |s: f64| g.char_poly_coeffs().iter().fold(0.0, |acc, c| acc * s + c);
        prop_assert!(p(-alpha).abs() < 1e-9 * (1.0 + alpha).powi(n as i32));
        prop_assert!(g.in_hbar().unwrap());
    }
}

mod common;

use std::f64::consts::PI;

use landau_core::collision::{collision_invariants, lambda_tilde_matrix};
use landau_core::green::{node_permutation, signed_permutations};
use landau_core::quadrature::integrate;
use landau_core::{build_grid, ktilde_kernel, oracle, theta_eigs, CoeffProfile, GridSpec};
use ndarray::Array1;

/// `⟨−Λ̃f, f⟩` for `f = sin(ξ₁)M^{1/2}` is `∫ θ₁₁ cos²(ξ₁) M dξ`. With the
/// polar axis along `e₁`, `θ₁₁ = λ2 + (λ1 − λ2)c²` for `c = ξ₁/|ξ|`.
fn sine_form(gamma: f64) -> f64 {
    integrate(
        |r| {
            let (l1, l2) = theta_eigs(r, gamma).unwrap();
            let inner = integrate(|c| (l2 + (l1 - l2) * c * c) * (r * c).cos().powi(2), -1.0, 1.0, 1e-15, 1e-12).unwrap();
            2.0 * PI * r * r * (2.0 * PI).powf(-1.5) * (-0.5 * r * r).exp() * inner
        },
        0.0,
        12.0,
        1e-13,
        1e-10,
    )
    .unwrap()
}

fn discrete_sine_form(n: usize, gamma: f64) -> (f64, f64) {
    let spec = GridSpec { n_per_axis: n, radius: 5.0, gamma, ..GridSpec::default() };
    let grid = build_grid(spec).unwrap();
    let profile = CoeffProfile::for_radius(gamma, spec.radius).unwrap();
    let lt = lambda_tilde_matrix(&grid, &profile).unwrap();
    let f: Array1<f64> =
        grid.dof_points().iter().map(|x| x[0].sin() * (-0.25 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp() * (2.0 * PI).powf(-0.75)).collect();
    (grid.h, -grid.cell_volume() * lt.dot(&f).dot(&f))
}

#[test]
fn lambda_tilde_converges_at_second_order() {
    for gamma in [0.0, -1.0] {
        let exact = sine_form(gamma);
        let runs: Vec<(f64, f64)> = [9, 13, 17].iter().map(|&n| discrete_sine_form(n, gamma)).collect();
        let errs: Vec<f64> = runs.iter().map(|(_, v)| (v - exact).abs() / exact).collect();
        let order = (errs[0] / errs[2]).ln() / (runs[0].0 / runs[2].0).ln();
        eprintln!("gamma {gamma}: exact {exact:.6e}, errors {errs:?}, order {order:.3}");
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!((order - 2.0).abs() < 0.5, "observed order {order}");
    }
}

fn point() -> impl proptest::strategy::Strategy<Value = [f64; 3]> {
    proptest::array::uniform3(-2.5f64..2.5)
}

fn sep(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(64))]

    #[test]
    fn kernel_matches_finite_differences(xi in point(), xs in point(), g in 0usize..4) {
        proptest::prop_assume!(sep(&xi, &xs) > 0.3);
        let gamma = [0.0, -1.0, -0.5, 0.5][g];
        let exact = ktilde_kernel(&xi, &xs, gamma).unwrap();
        let fd = oracle::ktilde_fd(&xi, &xs, gamma, 1e-4);
        proptest::prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-6), "{fd} vs {exact}");
    }

    #[test]
    fn kernel_is_symmetric_and_rotation_invariant(xi in point(), xs in point(), q in 0usize..48) {
        proptest::prop_assume!(sep(&xi, &xs) > 1e-3);
        let g = signed_permutations()[q];
        let rot = |x: &[f64; 3]| {
            let mut y = [0.0; 3];
            for d in 0..3 {
                y[g.perm[d]] = g.sign[d] as f64 * x[d];
            }
            y
        };
        let k = ktilde_kernel(&xi, &xs, -1.0).unwrap();
        let swapped = ktilde_kernel(&xs, &xi, -1.0).unwrap();
        let rotated = ktilde_kernel(&rot(&xi), &rot(&xs), -1.0).unwrap();
        let tol = 1e-12 * k.abs().max(1e-12);
        proptest::prop_assert!((k - swapped).abs() <= tol && (k - rotated).abs() <= tol);
    }

    #[test]
    fn coercivity_holds_for_random_states(seed in 0u64..u64::MAX, g in 0usize..2) {
        use rand::{Rng, SeedableRng};
        let ops = common::ops(5, [0.0, -1.0][g]);
        let gram = landau_core::collision::coercivity_gram(&ops.grid);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = Array1::from_shape_fn(ops.dof(), |_| rng.gen_range(-1.0..1.0));
        let (lhs, rhs) = ops.coercivity_terms(f.view(), &gram);
        proptest::prop_assert!(ops.c0_hat > 0.0);
        proptest::prop_assert!(lhs >= ops.c0_hat * rhs * (1.0 - 1e-10), "{lhs} < {} * {rhs}", ops.c0_hat);
    }
}

#[test]
fn operators_are_symmetric_and_conservative() {
    for n in [5, 7] {
        for gamma in [0.0, -1.0] {
            let ops = common::ops(n, gamma);
            let l = &ops.l_full;
            let scale = l.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let asym = l.iter().zip(l.t().iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(asym <= 1e-12 * scale, "n={n} gamma={gamma}: asymmetry {asym}");
            let v = collision_invariants(&ops.grid);
            let lv = l.dot(&v);
            let res = lv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(res <= 1e-10 * scale, "n={n} gamma={gamma}: invariant residual {res}");
            // exactly five (numerically) zero eigenvalues, the rest negative
            let ev = {
                use ndarray_linalg::{EigValsh, UPLO};
                l.eigvalsh(UPLO::Lower).unwrap()
            };
            let top = ev[ev.len() - 1];
            let near_zero = ev.iter().filter(|e| e.abs() <= 1e-9 * scale).count();
            assert_eq!(near_zero, 5, "n={n} gamma={gamma}");
            assert!(top <= 1e-9 * scale && ev[ev.len() - 6] < -1e-3, "n={n} gamma={gamma}: {:?}", &ev.as_slice().unwrap()[ev.len() - 6..]);
        }
    }
}

#[test]
fn operator_commutes_with_signed_permutations() {
    for gamma in [0.0, -1.0] {
        let ops = common::ops(7, gamma);
        let l = &ops.l_full;
        let scale = l.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for q in signed_permutations() {
            let map = node_permutation(&ops.grid, &q);
            let worst = (0..ops.dof())
                .flat_map(|a| (0..ops.dof()).map(move |b| (a, b)))
                .map(|(a, b)| (l[[map[a], map[b]]] - l[[a, b]]).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-11 * scale, "gamma={gamma} {q:?}: {worst}");
        }
    }
}

#[test]
fn kernel_matrix_keeps_the_unit_offset_value() {
    // ξ = e₁, ξ* = 0 at γ = 0: 4 (2π)^{-3/2} e^{-1/4}
    let want = 4.0 * (2.0 * PI).powf(-1.5) * (-0.25f64).exp();
    assert!((want - 0.1977956).abs() < 1e-7);
    assert!((ktilde_kernel(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0).unwrap() - want).abs() < 1e-14);
}

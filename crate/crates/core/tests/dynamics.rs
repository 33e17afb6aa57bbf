mod common;

use common::{ops, rel_err, smooth_state};
use landau_core::kinetic::{chain_states, duhamel_quadrature, mixture1_quadrature, remainder_check};
use landau_core::linalg::expm;
use landau_core::mode::{mode_operator_unchecked, propagate_with, PropagationMethod};
use landau_core::ode::OdeOptions;
use landau_core::{mixture_apply, Generator};

fn tight() -> OdeOptions {
    OdeOptions { rtol: 1e-11, atol_rel: 1e-14, ..OdeOptions::default() }
}

#[test]
fn eigen_and_ode_propagation_agree() {
    for gamma in [0.0, -1.0] {
        let ops = ops(5, gamma);
        let f0 = smooth_state(&ops);
        for (k, eps) in [([1, 0, 0], 0.1), ([2, -1, 1], 0.3)] {
            for tag in [Generator::FullL, Generator::LambdaOnly, Generator::LambdaPlusKs] {
                let a = mode_operator_unchecked(&ops, k, eps, tag);
                let times = [0.0, 0.3, 1.0, 4.0];
                let eig = propagate_with(&a, &f0, &times, PropagationMethod::Eigen).unwrap();
                let ode = propagate_with(&a, &f0, &times, PropagationMethod::Ode).unwrap();
                assert_eq!(eig.method, PropagationMethod::Eigen);
                for (x, y) in eig.states.iter().zip(&ode.states) {
                    assert!(rel_err(x, y) < 1e-6, "{tag} k={k:?}: {}", rel_err(x, y));
                }
            }
        }
    }
}

#[test]
fn matrix_exponential_matches_eigen_path() {
    let ops = ops(5, -1.0);
    let f0 = smooth_state(&ops);
    let a = mode_operator_unchecked(&ops, [1, 1, 0], 0.2, Generator::FullL);
    for t in [0.1, 1.0, 3.0] {
        let direct = expm(&a.matrix, t).dot(&f0);
        let eig = propagate_with(&a, &f0, &[t], PropagationMethod::Eigen).unwrap();
        assert!(rel_err(&eig.states[0], &direct) < 1e-9, "t={t}: {}", rel_err(&eig.states[0], &direct));
    }
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(24))]

    /// Transport is skew and the collision part is dissipative, so the
    /// discrete `L²` norm never grows.
    #[test]
    fn mode_flow_is_a_contraction(kx in -3i64..4, ky in -3i64..4, eps in 0.02f64..0.5, t in 0.01f64..5.0) {
        let ops = ops(5, 0.0);
        let f0 = smooth_state(&ops);
        let a = mode_operator_unchecked(&ops, [kx, ky, 0], eps, Generator::FullL);
        let tr = propagate_with(&a, &f0, &[0.0, t], PropagationMethod::Eigen).unwrap();
        let (n0, n1) = (ops.grid.dof_norm(tr.states[0].view()), ops.grid.dof_norm(tr.states[1].view()));
        proptest::prop_assert!(n1 <= n0 * (1.0 + 1e-9), "{n1} > {n0}");
    }
}

#[test]
fn chain_first_iterate_matches_duhamel_quadrature() {
    for gamma in [0.0, -1.0] {
        let ops = ops(5, gamma);
        let f0 = smooth_state(&ops);
        let states = chain_states(&ops, [1, 0, 0], 0.1, &f0, 0, &[0.0, 1.0], &tight()).unwrap();
        let q = duhamel_quadrature(&ops, [1, 0, 0], 0.1, &f0, 1.0, 256).unwrap();
        assert!(rel_err(&states[1][1], &q) < 1e-4, "gamma={gamma}: {}", rel_err(&states[1][1], &q));
    }
}

#[test]
fn first_mixture_matches_nested_quadrature() {
    let ops = ops(5, 0.0);
    let f0 = smooth_state(&ops);
    let mix = mixture_apply(&f0, 1, &ops, [1, 0, 0], 0.1, &[0.0, 1.0], &tight()).unwrap();
    let q = mixture1_quadrature(&ops, [1, 0, 0], 0.1, &f0, 1.0, 256).unwrap();
    assert!(rel_err(&mix[1], &q) < 1e-4, "{}", rel_err(&mix[1], &q));
    // both mixtures vanish at t = 0
    let mix2 = mixture_apply(&f0, 2, &ops, [1, 0, 0], 0.1, &[0.0, 0.5], &tight()).unwrap();
    assert_eq!(ops.grid.dof_norm(mix2[0].view()), 0.0);
    assert!(mixture_apply(&f0, 3, &ops, [1, 0, 0], 0.1, &[0.0], &tight()).is_err());
}

#[test]
fn chain_starts_from_the_data_and_its_remainder_closes() {
    let ops = ops(5, -1.0);
    let f0 = smooth_state(&ops);
    let times = [0.0, 0.1, 1.0, 5.0];
    let states = chain_states(&ops, [1, 0, 0], 0.1, &f0, 3, &times, &tight()).unwrap();
    assert_eq!(states.len(), 5);
    assert!(rel_err(&states[0][0], &f0) < 1e-15);
    for block in &states[1..] {
        assert_eq!(ops.grid.dof_norm(block[0].view()), 0.0);
    }
    let rc = remainder_check(&ops, [1, 0, 0], 0.1, &f0, 3, &times, &tight()).unwrap();
    assert!(rc.initial <= 1e-12 * ops.grid.dof_norm(f0.view()), "R(0) = {}", rc.initial);
    assert!(rc.relative_gap < 1e-6, "remainder gap {}", rc.relative_gap);
}

#[test]
fn chain_rejects_bad_times() {
    let ops = ops(5, 0.0);
    let f0 = smooth_state(&ops);
    assert!(chain_states(&ops, [1, 0, 0], 0.1, &f0, 1, &[0.5, 1.0], &tight()).is_err());
    assert!(chain_states(&ops, [1, 0, 0], 0.1, &f0, 1, &[0.0, 1.0, 1.0], &tight()).is_err());
}

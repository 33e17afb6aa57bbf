mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::ops;
use landau_core::green::{
    bump_coefficient, gaussian_mode_sum, InitialProfile, Monomial, Reduction, SpatialProfile, VelocityProfile,
};
use landau_core::kinetic::chain_states;
use landau_core::ode::OdeOptions;
use landau_core::quadrature::integrate;
use landau_core::spectral::estimate_gap;
use landau_core::{classify_regime, picard_chain, prepare_initial, ChainOptions, GreenSynthesis, Regime, BETA};

fn plain(spatial: SpatialProfile) -> InitialProfile {
    InitialProfile {
        spatial,
        velocity: VelocityProfile::MaxwellianPolynomial { terms: vec![Monomial { coef: 1.0, powers: [0, 0, 0] }] },
        zero_mean: false,
        normalize: false,
    }
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(64))]

    #[test]
    fn bump_coefficient_matches_quadrature(k in -10i64..11, a in 0.02f64..0.5) {
        let direct = integrate(|u: f64| (PI * u / (2.0 * a)).cos().powi(2) * (2.0 * PI * k as f64 * u).cos(), -a, a, 1e-15, 1e-12).unwrap();
        let closed = bump_coefficient(k, a);
        proptest::prop_assert!((closed - direct).abs() <= 1e-10, "k={k} a={a}: {closed} vs {direct}");
    }
}

#[test]
fn bump_coefficient_at_the_removable_singularity() {
    // 2|k|a = 1 makes the closed form 0/0
    for k in [1i64, 2, 5] {
        let a = 0.5 / k as f64;
        let direct = integrate(|u: f64| (PI * u / (2.0 * a)).cos().powi(2) * (2.0 * PI * k as f64 * u).cos(), -a, a, 1e-15, 1e-12).unwrap();
        assert!((bump_coefficient(k, a) - direct).abs() < 1e-10);
        assert!((bump_coefficient(k, a * (1.0 + 1e-9)) - direct).abs() < 1e-7);
    }
}

#[test]
fn parseval_of_a_pure_mode() {
    let ops = ops(5, 0.0);
    let amp = 0.7;
    let field = prepare_initial(&plain(SpatialProfile::PureMode { k: [0, 2, -1], amplitude: amp }), ops.grid.clone(), 0.1, 4).unwrap();
    assert_eq!(field.coefficients.len(), 2);
    // ‖A cos(2πk·u) φ‖² over the unit box is A²/2 ‖φ‖²
    let phi = field.coefficients[&[0, 2, -1]].mapv(|z| z * (2.0 / amp));
    let want = amp / 2f64.sqrt() * ops.grid.dof_norm(phi.view());
    assert!((field.parseval_norm(0) - want).abs() < 1e-14 * want);
    let kappa2 = (BETA * 0.1).powi(2) * 5.0;
    assert!((field.parseval_norm(1) - want * (1.0 + kappa2).sqrt()).abs() < 1e-13 * want);
    assert_eq!(field.conjugate_defect(), 0.0);
    assert_eq!(field.mean_moments(), 0.0);
}

#[test]
fn parseval_of_a_bump_recovers_its_square_integral() {
    let ops = ops(5, 0.0);
    let a: f64 = 0.2;
    let field = prepare_initial(&plain(SpatialProfile::CosineBump { half_width: 2.0 * a, center: [0.0; 3] }), ops.grid.clone(), 0.1, 8).unwrap();
    let line = integrate(|u: f64| (PI * u / (2.0 * a)).cos().powi(4), -a, a, 1e-15, 1e-13).unwrap();
    let phi = ops.grid.dof_norm(field.coefficients[&[0, 0, 0]].mapv(|z| z / bump_coefficient(0, a).powi(3)).view());
    let want = line.powf(1.5) * phi;
    let got = field.parseval_norm(0);
    assert!(field.tail_bound > 0.0 && field.tail_bound < 1e-3, "tail {}", field.tail_bound);
    assert!(((got / want).powi(2) - 1.0).abs() <= field.tail_bound * 1.01 + 1e-12, "{got} vs {want}");
}

#[test]
fn zero_mean_profiles_carry_no_conserved_moments() {
    let ops = ops(7, -1.0);
    for name in ["cosine_bump", "narrow_bump", "shifted_bump"] {
        let field = prepare_initial(&InitialProfile::builtin(name).unwrap(), ops.grid.clone(), 0.1, 4).unwrap();
        assert!((field.parseval_norm(0) - 1.0).abs() < 1e-13, "{name}");
        assert!(field.mean_moments() < 1e-13, "{name}: {}", field.mean_moments());
        assert!(field.conjugate_defect() < 1e-14, "{name}");
    }
}

#[test]
fn symmetric_data_reduces_to_cubic_orbits() {
    let ops = ops(5, 0.0);
    let field = prepare_initial(&InitialProfile::builtin("cosine_bump").unwrap(), ops.grid.clone(), 0.1, 3).unwrap();
    let (red, orbits) = field.orbits();
    assert_eq!(red, Reduction::Cubic);
    assert_eq!(orbits.iter().map(|o| o.members.len()).sum::<usize>(), field.coefficients.len());
    // every member is reproduced from its representative
    for orb in &orbits {
        let rep = &field.coefficients[&orb.rep];
        for (k, map) in &orb.members {
            let d = &map.apply(rep) - &field.coefficients[k];
            assert!(ops.grid.dof_norm(d.view()) < 1e-13, "{k:?}");
        }
    }
    let shifted = prepare_initial(&InitialProfile::builtin("shifted_bump").unwrap(), ops.grid.clone(), 0.1, 3).unwrap();
    assert_eq!(shifted.orbits().0, Reduction::Conjugate);
}

#[test]
fn buckets_partition_the_solution() {
    let ops = ops(5, 0.0);
    let gap = estimate_gap(&ops, [1.0, 0.0, 0.0], 2.0, 0.05).unwrap();
    assert!(gap.tau_hat > 0.0 && gap.delta_hat > 0.0);
    for (eps, regime) in [(2.0 * gap.delta_hat / BETA, Regime::I), (0.5 * gap.delta_hat / BETA, Regime::II)] {
        assert_eq!(classify_regime(eps, &gap), regime);
        let field = prepare_initial(&InitialProfile::builtin("cosine_bump").unwrap(), ops.grid.clone(), eps, 3).unwrap();
        let syn = GreenSynthesis::new(&field, &ops, &gap).unwrap();
        assert_eq!(syn.regime, regime);
        let s0 = syn.snapshot(0.0, None).unwrap();
        assert!((s0.norms[0].total - 1.0).abs() < 1e-9, "{}", s0.norms[0].total);
        let mut last = f64::INFINITY;
        for t in [0.0, 0.5, 2.0, 8.0] {
            assert!(syn.bucket_defect(t).unwrap() < 1e-8);
            let s = syn.snapshot(t, None).unwrap().norms[0];
            assert!(s.total <= last * (1.0 + 1e-9));
            last = s.total;
            if regime == Regime::I {
                // only the mean mode is long, and its data has no invariant part
                assert!(s.fluid < 1e-12, "fluid {}", s.fluid);
            }
        }
    }
}

#[test]
fn mode_sum_approaches_the_gaussian_integral() {
    // fine lattice, moderate t: Riemann sum of ∫ e^{-|y|²t} dy
    for t in [5.0, 20.0] {
        let s = gaussian_mode_sum(0.002, 2.0, t);
        let want = PI.powf(1.5) * t.powf(-1.5);
        assert!((s / want - 1.0).abs() < 0.02, "t={t}: {s} vs {want}");
    }
}

#[test]
fn picard_norms_are_the_mode_sums_of_single_mode_chains() {
    let ops = ops(5, 0.0);
    let field = prepare_initial(&InitialProfile::builtin("pure_mode").unwrap(), Arc::clone(&ops.grid), 0.1, 2).unwrap();
    let times = [0.0, 0.2, 1.0, 3.0];
    let opts = ChainOptions { ode: OdeOptions { rtol: 1e-10, atol_rel: 1e-14, ..OdeOptions::default() }, keep_states: false };
    let chain = picard_chain(&field, &ops, 2, &times, &opts).unwrap();
    assert!((chain.initial_norm - 1.0).abs() < 1e-12);
    assert!((chain.norms[0][0] - 1.0).abs() < 1e-12);
    for (ti, _) in times.iter().enumerate() {
        for b in 0..4 {
            let want: f64 = field
                .coefficients
                .iter()
                .map(|(k, f0)| {
                    let st = chain_states(&ops, *k, 0.1, f0, 2, &times, &opts.ode).unwrap();
                    ops.grid.dof_norm(st[b][ti].view()).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            assert!((chain.norms[b][ti] - want).abs() <= 1e-7 * want.max(1e-12), "block {b} t{ti}: {} vs {want}", chain.norms[b][ti]);
        }
    }
}

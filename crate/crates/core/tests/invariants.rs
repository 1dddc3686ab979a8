//! Structural invariants of the simulator, checked over random inputs.

use paraxial_tr::io::{decode_field, encode_field};
use paraxial_tr::montecarlo::{ncc, run_ensemble};
use paraxial_tr::propagator::{green_field, propagate, reverse_green_field};
use paraxial_tr::{
    apply_scintillation_scaling, Complex64, ComplexField, ExperimentConfig, MediumRealization,
    RunConfig, ScalingConfig, Vec2,
};
use proptest::prelude::*;

const SMALL: &str =
    "k0 = 1\nL = 6\nR_m = 16.522711641858304\nrho_0 = 4\nsigma = 1.4142135623730951\n\
l_c = 1\ngrid_n = 128\ngrid_extent = 64\nn_steps = 32\nseed = 11\n";

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = RunConfig::parse(SMALL).unwrap().experiment;
    cfg.master_seed = seed;
    cfg
}

fn random_field(cfg: &ExperimentConfig, phase: f64) -> ComplexField {
    ComplexField::from_fn(cfg.grid, |x| {
        Complex64::from_polar((-x.norm_sq() / 20.0).exp(), phase * x.x + 0.3 * x.y * x.y)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_preserves_energy(seed in any::<u64>(), index in 0u64..1000, phase in -2.0f64..2.0) {
        let cfg = small(seed);
        let real = MediumRealization::generate(&cfg, index).unwrap();
        let f0 = random_field(&cfg, phase);
        let f = propagate(&f0, &real, cfg.k0).unwrap();
        let drift = (f.norm_l2() - f0.norm_l2()).abs() / f0.norm_l2();
        prop_assert!(drift < 1e-12, "drift {drift:e}");
    }

    #[test]
    fn green_functions_are_reciprocal(
        seed in any::<u64>(),
        a in (-8.0f64..8.0, -8.0f64..8.0),
        b in (-8.0f64..8.0, -8.0f64..8.0),
    ) {
        let cfg = small(seed);
        let real = MediumRealization::generate(&cfg, 0).unwrap();
        let (a, b) = (cfg.grid.snap(Vec2::new(a.0, a.1)), cfg.grid.snap(Vec2::new(b.0, b.1)));
        let ab = green_field(a, &real, &cfg).unwrap().sample(b);
        let ba = reverse_green_field(b, &real, &cfg).unwrap().sample(a);
        prop_assert!((ab - ba).norm() <= 1e-10 * ab.norm().max(ba.norm()), "{ab} vs {ba}");
    }

    #[test]
    fn realizations_are_pure_functions_of_seed_and_index(seed in any::<u64>(), index in 0u64..1000) {
        let cfg = small(seed);
        let a = MediumRealization::generate(&cfg, index).unwrap();
        prop_assert_eq!(&a, &MediumRealization::generate(&cfg, index).unwrap());
        prop_assert_ne!(&a.screens, &MediumRealization::generate(&cfg, index + 1).unwrap().screens);
    }

    #[test]
    fn scaling_composes(e1 in 0.05f64..1.0, e2 in 0.05f64..1.0) {
        let cfg = small(1);
        let s = |c: &ExperimentConfig, e: f64| apply_scintillation_scaling(c, ScalingConfig::new(e).unwrap()).unwrap();
        let two = s(&s(&cfg, e1), e2);
        let one = s(&cfg, e1 * e2);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
        prop_assert!(close(two.distance, one.distance));
        prop_assert!(close(two.medium.sigma, one.medium.sigma));
        prop_assert!(close(two.mirror.r_0, one.mirror.r_0));
        prop_assert!(close(two.mirror.rho_0, one.mirror.rho_0));
    }

    #[test]
    fn field_dumps_roundtrip(phase in -3.0f64..3.0, aux in -1e6f64..1e6) {
        let cfg = small(1);
        let f = random_field(&cfg, phase);
        let (g, a) = decode_field(std::path::Path::new("mem"), &encode_field(&f, aux)).unwrap();
        prop_assert_eq!(g, f);
        prop_assert_eq!(a, aux);
    }

    #[test]
    fn ncc_is_scale_invariant_and_bounded(v in prop::collection::vec(0.0f64..10.0, 2..50), c in 0.01f64..100.0) {
        let w: Vec<f64> = v.iter().map(|x| c * x).collect();
        let r: Vec<f64> = v.iter().rev().copied().collect();
        if v.iter().any(|&x| x > 0.0) {
            prop_assert!((ncc(&v, &w) - 1.0).abs() < 1e-12);
        }
        let n = ncc(&v, &r);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        prop_assert_eq!(n, ncc(&r, &v));
    }
}

#[test]
fn scaling_by_one_is_identity() {
    let cfg = small(3);
    assert_eq!(
        apply_scintillation_scaling(&cfg, ScalingConfig::new(1.0).unwrap()).unwrap(),
        cfg
    );
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let cfg = small(5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&cfg, 9).unwrap())
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(one.mean_field, three.mean_field);
    assert_eq!(one.variance_field, three.variance_field);
    assert_eq!(one.mean_intensity, three.mean_intensity);
}

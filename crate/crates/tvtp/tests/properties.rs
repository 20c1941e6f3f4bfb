//! Property-based invariants for the parameter mappings, transition
//! kernels, and file round-trips.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvtp::model::{
    from_econ, pack, relabel_regimes, to_econ, unpack, KernelFamily, KernelParams, ModelSpec,
    ParamVector,
};
use tvtp::transition::base_transition;

fn logistic_spec() -> ModelSpec {
    ModelSpec::new(1, 2, 2, true, false, false, KernelFamily::Logistic, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_rows_are_probability_vectors(
        b10 in -4.0f64..4.0, b11 in -4.0f64..4.0,
        b20 in -4.0f64..4.0, b21 in -4.0f64..4.0,
        x in -5.0f64..5.0, y1 in -5.0f64..5.0,
    ) {
        let spec = logistic_spec();
        let theta = ParamVector {
            mu: vec![-1.0, 1.0],
            gamma: vec![vec![0.2]],
            sigma: vec![0.7],
            kernel: KernelParams::Link {
                coef: vec![vec![vec![b10, b11]], vec![vec![b20, b21]]],
            },
        };
        for origin in 0..2u8 {
            let row = base_transition(&spec, &theta, &[origin, 0], &[y1], &[x]).unwrap();
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn pack_unpack_round_trip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, theta) = common::random_instance(&mut rng, true);
        let v = pack(&theta, &spec).unwrap();
        let back = unpack(&v, &spec).unwrap();
        let v2 = pack(&back, &spec).unwrap();
        for (a, b) in v.iter().zip(&v2) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn econ_round_trip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, theta) = common::random_instance(&mut rng, true);
        let e = to_econ(&theta, &spec);
        let back = from_econ(&e, &spec).unwrap();
        let e2 = to_econ(&back, &spec);
        for (a, b) in e.iter().zip(&e2) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn relabeling_is_idempotent(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, theta) = common::random_instance(&mut rng, true);
        if let Ok((once, _)) = relabel_regimes(&theta, &spec) {
            let (twice, perm) = relabel_regimes(&once, &spec).unwrap();
            prop_assert_eq!(perm, (0..spec.j).collect::<Vec<_>>());
            prop_assert_eq!(&once.mu, &twice.mu);
            prop_assert_eq!(&once.sigma, &twice.sigma);
        }
    }
}

#[test]
fn data_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (spec, _) = common::random_instance(&mut rng, true);
        let data = common::random_dataset(&mut rng, &spec, 25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        tvtp::io::write_data_csv(&path, &spec, &data, None).unwrap();
        let (back, truth) = tvtp::io::read_data_csv(&path, &spec).unwrap();
        assert!(truth.is_none());
        assert_eq!(data.y.len(), back.y.len());
        for (a, b) in data.y.iter().zip(&back.y) {
            assert_eq!(a, b, "y value changed in round trip");
        }
        for (ra, rb) in data.x.iter().zip(&back.x) {
            for (a, b) in ra.iter().zip(rb) {
                assert_eq!(a, b, "covariate changed in round trip");
            }
        }
    }
}

#[test]
fn spec_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ext in ["toml", "json"] {
        for _ in 0..10 {
            let (spec, theta) = common::random_instance(&mut rng, true);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join(format!("spec.{ext}"));
            tvtp::io::save_spec_file(&path, &spec, Some(&theta)).unwrap();
            let (spec2, theta2) = tvtp::io::load_spec_file(&path).unwrap();
            assert_eq!(spec, spec2);
            let theta2 = theta2.unwrap();
            // Text formats may round the last bit.
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
            assert!(theta.mu.iter().zip(&theta2.mu).all(|(&a, &b)| close(a, b)));
            assert!(theta.sigma.iter().zip(&theta2.sigma).all(|(&a, &b)| close(a, b)));
            for (ra, rb) in theta.gamma.iter().zip(&theta2.gamma) {
                assert!(ra.iter().zip(rb).all(|(&a, &b)| close(a, b)));
            }
        }
    }
}

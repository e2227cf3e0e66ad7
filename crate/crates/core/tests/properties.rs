use proptest::prelude::*;

use qdiscord::circuit::{measure_zz, renormalize_kernel, rotation_for};
use qdiscord::dataset;
use qdiscord::features::{extract_features, features_from_pauli, HermitianKernel, KernelBank, PathSet};
use qdiscord::qmath::{eig_hermitian, PAULI};
use qdiscord::states::{generate_dataset, item_rng, sample_random_state, DensityMatrix};

fn coeffs4() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0f64..2.0)
}

fn traceless() -> impl Strategy<Value = HermitianKernel> {
    (coeffs4(), -1.0f64..1.0)
        .prop_filter("nonzero traceless part", |(k, _)| k[1..].iter().map(|v| v * v).sum::<f64>() > 1e-6)
        .prop_map(|(k, id)| HermitianKernel::new([id, k[1], k[2], k[3]]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pauli_round_trip(seed in any::<u64>(), index in 0u64..1000) {
        let rho = sample_random_state(&mut item_rng(seed, index));
        let back = DensityMatrix::from_pauli(&rho.to_pauli()).unwrap();
        prop_assert!(back.matrix().approx_eq(rho.matrix(), 1e-12));
    }

    #[test]
    fn eig_reconstructs_states(seed in any::<u64>()) {
        let rho = sample_random_state(&mut item_rng(seed, 0));
        let eig = eig_hermitian(rho.matrix()).unwrap();
        prop_assert!(eig.reconstruct().approx_eq(rho.matrix(), 1e-10));
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(eig.values[3] > -1e-9);
    }

    #[test]
    fn renormalization_is_scale_invariant(k in traceless(), alpha in 1e-3f64..1e3) {
        let a = renormalize_kernel(&k).unwrap().components();
        let b = renormalize_kernel(&k.scaled(alpha)).unwrap().components();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_maps_observable_to_sigma_z(k in traceless()) {
        let r = renormalize_kernel(&k).unwrap();
        let u = rotation_for(&r);
        prop_assert!(u.unitarity_deviation() < 1e-12);
        prop_assert!((u.0 * r.observable() * u.0.dagger()).approx_eq(&PAULI[3], 1e-10));
    }

    #[test]
    fn measurement_stays_in_range(seed in any::<u64>(), k1 in traceless(), k2 in traceless()) {
        let rho = sample_random_state(&mut item_rng(seed, 1));
        let u = rotation_for(&renormalize_kernel(&k1).unwrap());
        let v = rotation_for(&renormalize_kernel(&k2).unwrap());
        prop_assert!(measure_zz(&rho, &u, &v).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn convolution_and_pauli_routes_agree(seed in any::<u64>(), l in 1usize..=16) {
        let mut rng = item_rng(seed, 2);
        let rho = sample_random_state(&mut rng);
        let bank = KernelBank::random(&mut rng);
        let paths = PathSet::first(l).unwrap();
        let conv = extract_features(&rho, &bank, &paths).unwrap();
        let mut fast = vec![0.0; l];
        features_from_pauli(&rho.to_pauli(), &bank, &paths, &mut fast);
        for (a, b) in conv.0.iter().zip(&fast) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_codec_round_trip(n in 1usize..40, seed in any::<u64>()) {
        let data = generate_dataset(n, 0.5, seed, false).unwrap();
        prop_assert_eq!(dataset::decode(&dataset::encode(&data)).unwrap(), data);
    }

    #[test]
    fn decoders_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = dataset::decode(&bytes);
        let _ = qdiscord::network::decode_checkpoint(&bytes);
        let _ = qdiscord::features::read_kernels_csv(bytes.as_slice());
    }
}

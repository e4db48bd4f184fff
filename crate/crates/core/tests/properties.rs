mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridgesv::baseline_path::{path_update, PathConfig};
use ridgesv::datakit::synthetic::{noisy_sine, two_gaussians};
use ridgesv::datakit::{fit_standardizer, split, SplitPlan};
use ridgesv::kernels::{kernel_eval, q_matrix, KernelSpec};
use ridgesv::linalg::{bordered_inverse, inverse_grow, inverse_grow_shrink, inverse_shrink, invert_spd, DenseMatrix};
use ridgesv::model::{Hyperparams, Sample, SampleId, SvmState, TaskKind, UpdateBatch};
use ridgesv::online_svm::{update_multi_svm, UpdateConfig};
use ridgesv::online_svr::update_multi_svr;
use ridgesv::solver::{train_svm_batch, train_svr_batch};

use common::{gauss_jordan_inverse, random_spd};

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.relative_frobenius_error(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spd_inverse_matches_direct(seed in any::<u64>(), n in 1usize..25) {
        let m = random_spd(&mut ChaCha8Rng::seed_from_u64(seed), n, 0.5);
        let inv = invert_spd(&m).unwrap();
        prop_assert!(rel(&inv, &gauss_jordan_inverse(&m).unwrap()) < 1e-10);
        prop_assert!(inv.is_symmetric(1e-12));
    }

    #[test]
    fn grow_then_shrink_round_trips(seed in any::<u64>(), m in 1usize..20, k in 1usize..6) {
        let full = random_spd(&mut ChaCha8Rng::seed_from_u64(seed), m + k, 0.3);
        let old: Vec<usize> = (0..m).collect();
        let new: Vec<usize> = (m..m + k).collect();
        let p_inv = invert_spd(&full.select(&old, &old)).unwrap();
        let grown = inverse_grow(&p_inv, &full.select(&old, &new), &full.select(&new, &new)).unwrap();
        prop_assert!(rel(&grown, &gauss_jordan_inverse(&full).unwrap()) < 1e-9);
        let back = inverse_shrink(&grown, &new).unwrap();
        prop_assert!(rel(&back, &p_inv) < 1e-9);
    }

    #[test]
    fn grow_shrink_matches_direct(seed in any::<u64>(), m in 2usize..20, k in 0usize..5, r in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = random_spd(&mut rng, m + k, 0.3);
        let old: Vec<usize> = (0..m).collect();
        let new: Vec<usize> = (m..m + k).collect();
        let removed: Vec<usize> = rand::seq::index::sample(&mut rng, m, r.min(m - 1)).into_vec();
        let keep: Vec<usize> = old.iter().copied().filter(|i| !removed.contains(i)).chain(new.iter().copied()).collect();
        let p_inv = invert_spd(&full.select(&old, &old)).unwrap();
        let got = inverse_grow_shrink(&p_inv, &full.select(&old, &new), &full.select(&new, &new), &removed).unwrap();
        prop_assert!(rel(&got, &gauss_jordan_inverse(&full.select(&keep, &keep)).unwrap()) < 1e-9);
    }

    #[test]
    fn bordered_inverse_is_inverse(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_spd(&mut rng, n, 0.5);
        let v: Vec<f64> = (0..n).map(|i| if (seed >> (i % 64)) & 1 == 0 { 1.0 } else { -1.0 }).collect();
        let b = bordered_inverse(&q, &v).unwrap();
        let full = DenseMatrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => 0.0,
            (0, j) => v[j - 1],
            (i, 0) => v[i - 1],
            (i, j) => q[(i - 1, j - 1)],
        });
        prop_assert!(rel(&b.inv, &gauss_jordan_inverse(&full).unwrap()) < 1e-9);
    }

    #[test]
    fn gram_is_symmetric_psd(seed in any::<u64>(), n in 2usize..12, sigma in 0.3f64..3.0) {
        let pts: Vec<Vec<f64>> = two_gaussians(n, seed, 0).into_iter().map(|s| s.features).collect();
        let labels = vec![1.0; n];
        let q = q_matrix(&pts, &labels, &KernelSpec::rbf(sigma, 0.1)).unwrap();
        prop_assert!(q.is_symmetric(1e-14));
        prop_assert!(invert_spd(&q).is_ok());
        for i in 0..n {
            let k = kernel_eval(&pts[i], &pts[i], &KernelSpec::rbf(sigma, 0.0)).unwrap();
            prop_assert!((k - 1.0).abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trained_models_validate(seed in any::<u64>(), n in 6usize..40, c in 0.2f64..5.0, rho in 0.05f64..1.0) {
        let spec = KernelSpec::rbf(1.0, rho);
        let svm = train_svm_batch(&two_gaussians(n, seed, 0), &spec, &Hyperparams::new(c, 0.0), &Default::default()).unwrap();
        prop_assert!(svm.validate().is_empty(), "{}", svm.validate());
        prop_assert!(svm.equality_residual() < 1e-9);
        let svr = train_svr_batch(&noisy_sine(n, seed, 0), &spec, &Hyperparams::new(c, 0.1), &Default::default()).unwrap();
        prop_assert!(svr.validate().is_empty(), "{}", svr.validate());
    }

    #[test]
    fn margins_shift_with_bias(seed in any::<u64>(), shift in -2.0f64..2.0) {
        let s = train_svm_batch(&two_gaussians(20, seed, 0), &KernelSpec::rbf(1.0, 0.5), &Hyperparams::new(1.0, 0.0), &Default::default()).unwrap();
        let moved = SvmState::from_parts(*s.kernel(), *s.hyper(), s.samples().to_vec(), s.multipliers().to_vec(), s.bias() + shift, Some(s.regions().to_vec())).unwrap();
        for (i, x) in s.samples().iter().enumerate() {
            let d = moved.compute_margins()[i] - s.compute_margins()[i];
            prop_assert!((d - x.target * shift).abs() < 1e-12);
        }
    }

    #[test]
    fn updates_match_retrain(seed in any::<u64>(), add in 0usize..8, remove in 0usize..4) {
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, 0.0);
        let data = two_gaussians(40 + add, seed, 0);
        let base = train_svm_batch(&data[..40], &spec, &hyper, &Default::default()).unwrap();
        let gone: Vec<SampleId> = (0..remove as u64).map(|k| SampleId(k * 7 % 40)).collect();
        let batch = UpdateBatch::new(data[40..].to_vec(), gone.clone());
        let mut one_shot = base.clone();
        update_multi_svm(&mut one_shot, &batch, &UpdateConfig::default()).unwrap();
        let mut path = base.clone();
        path_update(&mut path, &batch, &PathConfig::default()).unwrap();
        let kept: Vec<Sample> = data.iter().filter(|s| !gone.contains(&s.id)).cloned().collect();
        let oracle = train_svm_batch(&kept, &spec, &hyper, &Default::default()).unwrap();
        prop_assert!(one_shot.validate().is_empty(), "{}", one_shot.validate());
        prop_assert!(path.validate().is_empty(), "{}", path.validate());
        for k in 0..20 {
            let x = [-2.0 + 0.2 * k as f64, 1.0 - 0.1 * k as f64];
            let f = oracle.decision_value(&x).unwrap();
            prop_assert!((one_shot.decision_value(&x).unwrap() - f).abs() < 1e-6);
            prop_assert!((path.decision_value(&x).unwrap() - f).abs() < 1e-6);
        }
    }

    #[test]
    fn svr_updates_match_retrain(seed in any::<u64>(), add in 0usize..8, remove in 0usize..4, eps in 0.0f64..0.3) {
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, eps);
        let data = noisy_sine(40 + add, seed, 0);
        let base = train_svr_batch(&data[..40], &spec, &hyper, &Default::default()).unwrap();
        let gone: Vec<SampleId> = (0..remove as u64).map(|k| SampleId(k * 11 % 40)).collect();
        let batch = UpdateBatch::new(data[40..].to_vec(), gone.clone());
        let mut one_shot = base.clone();
        update_multi_svr(&mut one_shot, &batch, &UpdateConfig::default()).unwrap();
        let mut path = base.clone();
        path_update(&mut path, &batch, &PathConfig::default()).unwrap();
        let kept: Vec<Sample> = data.iter().filter(|s| !gone.contains(&s.id)).cloned().collect();
        let oracle = train_svr_batch(&kept, &spec, &hyper, &Default::default()).unwrap();
        prop_assert!(one_shot.validate().is_empty(), "{}", one_shot.validate());
        prop_assert!(path.validate().is_empty(), "{}", path.validate());
        for k in 0..20 {
            let x = [-3.0 + 0.3 * k as f64];
            let f = oracle.decision_value(&x).unwrap();
            prop_assert!((one_shot.decision_value(&x).unwrap() - f).abs() < 1e-6);
            prop_assert!((path.decision_value(&x).unwrap() - f).abs() < 1e-6);
        }
    }

    #[test]
    fn split_is_a_partition(n in 0usize..200, seed in any::<u64>()) {
        let data = two_gaussians(n, seed, 0);
        let (a, b, c) = split(&data, &SplitPlan { seed, ..SplitPlan::default() }).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        let mut ids: Vec<u64> = a.iter().chain(&b).chain(&c).map(|s| s.id.0).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n as u64).collect::<Vec<_>>());
    }

    #[test]
    fn standardized_train_is_unit(seed in any::<u64>(), n in 3usize..60) {
        let data = noisy_sine(n, seed, 0);
        let st = fit_standardizer(&data, TaskKind::Regression).unwrap();
        let z = st.apply(&data).unwrap();
        let m = z.iter().map(|s| s.features[0]).sum::<f64>() / n as f64;
        let v = z.iter().map(|s| (s.features[0] - m).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(m.abs() <= 1e-9);
        prop_assert!((v.sqrt() - 1.0).abs() <= 1e-9);
    }
}

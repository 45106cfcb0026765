use metadenoise_core::autodiff::{batch_loss, finite_diff_gradient, gradient, max_relative_error, Pair};
use metadenoise_core::evaluation::{paired_t_test_one_tailed, psnr, snr};
use metadenoise_core::nets::{build_autoencoder, build_conv_denoiser};
use metadenoise_core::tasks::{patchify, split_real, window_signal};
use metadenoise_core::tensor::PairedSet;
use metadenoise_core::training::reptile_outer_update;
use metadenoise_core::{DenoiserModel, NetworkSpec, ParamVector, RngStream, Tensor};
use proptest::prelude::*;

fn vals(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outer_update_is_order_free(theta in vals(6), list in prop::collection::vec(vals(6), 1..6), eps in 0.0f64..1.0, seed in any::<u64>()) {
        let theta = ParamVector::flat(theta);
        let list: Vec<ParamVector> = list.into_iter().map(ParamVector::flat).collect();
        let mut shuffled = list.clone();
        RngStream::new(seed).shuffle(&mut shuffled);
        let a = reptile_outer_update(&theta, &list, eps).unwrap();
        let b = reptile_outer_update(&theta, &shuffled, eps).unwrap();
        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn metrics_ignore_joint_permutation(pairs in prop::collection::vec((-3.0f64..3.0, 0.1f64..3.0), 2..40), seed in any::<u64>()) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        RngStream::new(seed).shuffle(&mut idx);
        let t = |v: &[f64]| Tensor::vector(v.to_vec()).unwrap();
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let close = |a: f64, b: f64| a == b || (a - b).abs() < 1e-9;
        prop_assert!(close(psnr(&t(&x), &t(&y), 3.0).unwrap(), psnr(&t(&xp), &t(&yp), 3.0).unwrap()));
        prop_assert!(close(snr(&t(&x), &t(&y)).unwrap(), snr(&t(&xp), &t(&yp)).unwrap()));
    }

    #[test]
    fn t_statistic_ignores_common_shift(a in vals(8), b in vals(8), c in -100.0f64..100.0) {
        let base = paired_t_test_one_tailed(&a, &b);
        prop_assume!(base.as_ref().map(|r| !r.degenerate).unwrap_or(false));
        let base = base.unwrap();
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
        let shifted = paired_t_test_one_tailed(&a2, &b2).unwrap();
        prop_assert!((shifted.t - base.t).abs() <= 1e-6 * base.t.abs().max(1.0));
        prop_assert!((0.0..=1.0).contains(&shifted.p));
    }

    #[test]
    fn windows_cover_the_signal(len in 1usize..200, size in 1usize..40, stride in 1usize..15) {
        let sig = Tensor::vector((0..len).map(|i| i as f64).collect()).unwrap();
        match window_signal(&sig, size, stride) {
            Ok(ws) => {
                prop_assert!(len >= size);
                prop_assert_eq!(ws.len(), (len - size) / stride + 1);
                for (i, w) in ws.iter().enumerate() {
                    prop_assert_eq!(w.data(), &sig.data()[i * stride..i * stride + size]);
                }
            }
            Err(_) => prop_assert!(len < size),
        }
    }

    #[test]
    fn patches_count(h in 4usize..40, w in 4usize..40, patch in 1usize..12, stride in 1usize..12) {
        let img = Tensor::zeros(vec![h, w]).unwrap();
        match patchify(&img, patch, stride) {
            Ok(ps) => prop_assert_eq!(ps.len(), ((h - patch) / stride + 1) * ((w - patch) / stride + 1)),
            Err(_) => prop_assert!(h < patch || w < patch),
        }
    }

    #[test]
    fn real_split_is_a_partition(n in 2usize..80, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let xs: Vec<Tensor> = (0..n).map(|i| Tensor::vector(vec![i as f64]).unwrap()).collect();
        let pairs = PairedSet::new(xs.clone(), xs).unwrap();
        let split = split_real(&pairs, k, &mut RngStream::new(seed)).unwrap();
        prop_assert_eq!(split.finetune.len(), k);
        let mut all: Vec<usize> = split.finetune_indices.iter().chain(&split.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn spec_text_round_trips(depth in 2usize..6, width in 1usize..9, residual in any::<bool>(), io in 2usize..12, hidden in 1usize..12, latent in 1usize..6) {
        for spec in [build_conv_denoiser(depth, width, residual).unwrap(), build_autoencoder(io, hidden, latent).unwrap()] {
            let parsed: NetworkSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(parsed, spec);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dense_gradients_match_finite_differences(hidden in 2usize..7, latent in 1usize..4, seed in any::<u64>()) {
        let mut s = RngStream::new(seed);
        let mut m = DenoiserModel::initialized(build_autoencoder(6, hidden, latent).unwrap(), seed);
        let jitter: Vec<f64> = m.get_params().values().iter().map(|w| w + 0.1 * s.standard_normal()).collect();
        m.set_param_values(&jitter).unwrap();
        let xs: Vec<Tensor> = (0..3).map(|_| Tensor::vector((0..6).map(|_| s.standard_normal()).collect()).unwrap()).collect();
        let ys: Vec<Tensor> = (0..3).map(|_| Tensor::vector((0..6).map(|_| s.standard_normal()).collect()).unwrap()).collect();
        let batch: Vec<Pair<'_>> = xs.iter().zip(&ys).collect();
        let g = gradient(m.spec(), m.get_params(), &batch).unwrap();
        let fd = finite_diff_gradient(|p| batch_loss(m.spec(), p, &batch), m.get_params(), 1e-5).unwrap();
        // a relu input within h of zero makes the difference quotient straddle the kink
        prop_assert!(max_relative_error(&g, &fd, 1e-6) < 1e-4);
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcm::layers::{gap_time, softmax, BatchNorm, Conv2d, Ctx, Layer, Mode, Padding, Relu};
use xcm::Tensor;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_padding_keeps_time_extent(b in 1usize..3, c in 1usize..4, t in 1usize..30, w in 1usize..5,
                                      k in 1usize..12, f in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[b, c, t, w], seed);
        let per_var = Conv2d::per_variable(c, f, k, 1, Padding::Same, &mut rng).unwrap();
        let (y, cache) = per_var.forward(&x, &mut Ctx::inference()).unwrap();
        prop_assert_eq!(y.shape(), &[b, f, t, w]);
        let (dx, _) = per_var.backward(&cache, &y, false);
        prop_assert_eq!(dx.shape(), x.shape());

        let full = Conv2d::full_width(c, f, k, w, 1, Padding::Same, &mut rng).unwrap();
        let (y, _) = full.forward(&x, &mut Ctx::inference()).unwrap();
        prop_assert_eq!(y.shape(), &[b, f, t, 1]);
    }

    #[test]
    fn strided_same_padding_rounds_up(t in 1usize..40, s in 1usize..5, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::per_variable(1, 2, k, s, Padding::Same, &mut rng).unwrap();
        let (y, _) = conv.forward(&random(&[1, 1, t, 2], 1), &mut Ctx::inference()).unwrap();
        prop_assert_eq!(y.dim(2), t.div_ceil(s));
    }

    #[test]
    fn softmax_rows_are_distributions(b in 1usize..5, k in 2usize..7, seed in any::<u64>(), shift in -500.0f64..500.0) {
        let logits = random(&[b, k], seed).map(|v| v * 20.0 + shift);
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(k) {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_ignores_time_order(f in 1usize..4, t in 1usize..20, seed in any::<u64>()) {
        let x = random(&[1, f, t, 1], seed);
        let mut perm: Vec<usize> = (0..t).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for i in (1..t).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = Tensor::from_fn(&[1, f, t, 1], |i| x.data()[(i / t) * t + perm[i % t]]);
        let (a, b) = (gap_time(&x).unwrap(), gap_time(&shuffled).unwrap());
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_train_output_is_standardized(b in 2usize..4, c in 1usize..4, t in 2usize..10, seed in any::<u64>()) {
        let bn = BatchNorm::new(c);
        let x = random(&[b, c, t, 2], seed).map(|v| 5.0 * v + 3.0);
        let (y, _) = bn.forward(&x, &mut Ctx::new(Mode::Train, 0)).unwrap();
        let per = t * 2;
        for ch in 0..c {
            let vals: Vec<f64> = (0..b).flat_map(|i| y.data()[(i * c + ch) * per..][..per].to_vec()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            // Only eps separates the variance from 1; constant channels stay 0.
            prop_assert!(var < 1.0 + 1e-9);
        }
    }

    #[test]
    fn relu_is_idempotent_and_nonnegative(seed in any::<u64>()) {
        let x = random(&[2, 3, 5, 2], seed);
        let (y, _) = Relu.forward(&x, &mut Ctx::inference()).unwrap();
        let (z, _) = Relu.forward(&y, &mut Ctx::inference()).unwrap();
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(y, z);
    }
}

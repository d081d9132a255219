use deformer_core::block::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
use deformer_core::gradcheck::{check_block, GradCheckSetup};
use deformer_core::{BlockConfig, DeformerBlock, DepthwiseMode, Error, InitScheme, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn block_gradients_match_finite_differences() {
    for seed in 0..4 {
        for (channels, groups) in [(4, 1), (4, 2), (4, 4)] {
            let r = check_block(&GradCheckSetup {
                seed,
                channels,
                deformable_groups: groups,
                ..GradCheckSetup::default()
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-5, "seed {seed} G_d {groups}: {r:#?}");
        }
    }
}

#[test]
fn batch_norm_standardizes_and_tracks_running_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (rows, f) = (50, 3);
    let u = Tensor::<f64>::from_fn(&[2, rows / 2, f], |i| {
        rng.random_range(-1.0..1.0) * (1 + i % f) as f64 + (i % f) as f64
    });
    let mut bn = BatchNorm::<f64>::new(f);
    let (y, _) = bn.forward_train(&u).unwrap();
    for c in 0..f {
        let col: Vec<f64> = u.data().iter().skip(c).step_by(f).copied().collect();
        let out: Vec<f64> = y.data().iter().skip(c).step_by(f).copied().collect();
        let m = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64;
        let om = out.iter().sum::<f64>() / rows as f64;
        let ov = out.iter().map(|v| (v - om).powi(2)).sum::<f64>() / rows as f64;
        assert!(om.abs() < 1e-12);
        assert!((ov - var / (var + BN_EPSILON)).abs() < 1e-10);
        let unbiased = var * rows as f64 / (rows - 1) as f64;
        assert!((bn.running_mean.data()[c] - BN_MOMENTUM * m).abs() < 1e-12);
        let expected_var = (1.0 - BN_MOMENTUM) + BN_MOMENTUM * unbiased;
        assert!((bn.running_var.data()[c] - expected_var).abs() < 1e-12);
    }
}

#[test]
fn regular_mode_is_the_zero_offset_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f64>::from_fn(&[2, 20, 6], |_| rng.random_range(-1.0..1.0));
    let mut deformable = DeformerBlock::<f64>::new(BlockConfig::new(6)).unwrap();
    let mut rigid = DeformerBlock::<f64>::new(BlockConfig {
        depthwise: DepthwiseMode::Regular,
        ..BlockConfig::new(6)
    })
    .unwrap();
    deformable.init_params(InitScheme::ZeroOffset, 3);
    rigid.init_params(InitScheme::ZeroOffset, 3);
    for mode in [Mode::Train, Mode::Eval] {
        let a = deformable.forward(&x, mode).unwrap();
        let b = rigid.forward(&x, mode).unwrap();
        assert!(a.bitwise_eq(&b));
    }
}

#[test]
fn backward_without_training_forward_is_a_usage_error() {
    let mut block = DeformerBlock::<f32>::new(BlockConfig::new(4)).unwrap();
    let x = Tensor::zeros(&[1, 8, 4]);
    block.forward(&x, Mode::Eval).unwrap();
    assert!(matches!(block.backward(&x), Err(Error::Usage(_))));
}

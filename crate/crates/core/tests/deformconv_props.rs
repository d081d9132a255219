use deformer_core::{
    conv1d_backward, conv1d_forward, deformable_backward, deformable_forward, Boundary,
    KernelGeometry, OffsetField, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Case {
    seed: u64,
    batch: usize,
    time: usize,
    channels: usize,
    depthwise: bool,
    groups_d: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
}

impl Case {
    fn geometry(&self) -> KernelGeometry {
        KernelGeometry::new(self.k, self.stride, self.dilation, self.padding).unwrap()
    }
    fn conv_groups(&self) -> usize {
        if self.depthwise {
            self.channels
        } else {
            1
        }
    }
    fn data(&self) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let f = self.channels;
        let x = Tensor::from_fn(&[self.batch, self.time, f], |_| rng.random_range(-1.0..1.0));
        let w = Tensor::from_fn(&[f, f / self.conv_groups(), self.k], |_| {
            rng.random_range(-1.0..1.0)
        });
        let b = Tensor::from_fn(&[f], |_| rng.random_range(-1.0..1.0));
        (x, w, b)
    }
}

fn case() -> impl Strategy<Value = Case> {
    (
        any::<u64>(),
        1usize..3,
        prop::sample::select(vec![1usize, 2, 4]),
        any::<bool>(),
        prop::sample::select(vec![1usize, 3, 5]),
        1usize..3,
        1usize..3,
    )
        .prop_flat_map(|(seed, batch, channels, depthwise, k, stride, dilation)| {
            let span = dilation * (k - 1);
            let groups: Vec<usize> = [1, 2, channels]
                .into_iter()
                .filter(|g| channels % g == 0)
                .collect();
            (0..=span, prop::sample::select(groups)).prop_flat_map(move |(padding, groups_d)| {
                let min_t = (span + 1).saturating_sub(2 * padding).max(1);
                (min_t..min_t + 10).prop_map(move |time| Case {
                    seed,
                    batch,
                    time,
                    channels,
                    depthwise,
                    groups_d,
                    k,
                    stride,
                    dilation,
                    padding,
                })
            })
        })
}

fn random_offsets(c: &Case, scale: f64) -> OffsetField<f64> {
    let g = c.geometry();
    let t_out = g.output_len(c.time);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x0FF5);
    loop {
        let delta = Tensor::from_fn(&[c.batch, t_out, c.groups_d, c.k], |_| {
            rng.random_range(-scale..scale)
        });
        let field = OffsetField::from_delta(delta, &g, c.time).unwrap();
        if field
            .p_prime
            .data()
            .iter()
            .all(|p| (p - p.round()).abs() > 1e-3)
        {
            return field;
        }
    }
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_offsets_reduce_to_regular_conv(c in case()) {
        let (x, w, b) = c.data();
        let g = c.geometry();
        let zeros = OffsetField::zeros(c.batch, c.time, &g, c.groups_d);
        let regular = conv1d_forward(&x, &w, &b, &g, c.conv_groups()).unwrap();
        let deformed = deformable_forward(&x, &w, &b, c.conv_groups(), &zeros, Boundary::Zero).unwrap();
        prop_assert!(deformed.bitwise_eq(&regular));

        let x32 = x.cast::<f32>();
        let regular = conv1d_forward(&x32, &w.cast(), &b.cast(), &g, c.conv_groups()).unwrap();
        let zeros32 = OffsetField::<f32>::zeros(c.batch, c.time, &g, c.groups_d);
        let deformed = deformable_forward(&x32, &w.cast(), &b.cast(), c.conv_groups(), &zeros32, Boundary::Zero).unwrap();
        prop_assert!(deformed.bitwise_eq(&regular));
    }

    #[test]
    fn zero_offset_gradients_match_regular_conv(c in case()) {
        let (x, w, _) = c.data();
        let g = c.geometry();
        let zeros = OffsetField::zeros(c.batch, c.time, &g, c.groups_d);
        let up = Tensor::from_fn(&[c.batch, g.output_len(c.time), c.channels], |i| ((i * 7) % 5) as f64 - 2.0);
        let reg = conv1d_backward(&x, &w, &g, c.conv_groups(), &up).unwrap();
        let def = deformable_backward(&x, &w, c.conv_groups(), &zeros, Boundary::Zero, &up).unwrap();
        prop_assert!(def.d_x.max_abs_diff(&reg.d_x).unwrap() < 1e-12);
        prop_assert!(def.d_weights.max_abs_diff(&reg.d_weights).unwrap() < 1e-12);
        prop_assert!(def.d_bias.max_abs_diff(&reg.d_bias).unwrap() < 1e-12);
    }

    #[test]
    fn integer_shift_equals_shifted_input(c in case(), shift in -3isize..=3) {
        let (x, w, b) = c.data();
        let g = c.geometry();
        let t_out = g.output_len(c.time);
        let delta = Tensor::full(&[c.batch, t_out, c.groups_d, c.k], shift as f64);
        let field = OffsetField::from_delta(delta, &g, c.time).unwrap();
        let deformed = deformable_forward(&x, &w, &b, c.conv_groups(), &field, Boundary::Zero).unwrap();
        // Explicitly padded and shifted input, convolved without implicit padding.
        let f = c.channels;
        let padded_len = c.time + 2 * c.padding;
        let shifted = Tensor::from_fn(&[c.batch, padded_len, f], |i| {
            let (bt, ch) = (i / f, i % f);
            let (bi, u) = (bt / padded_len, bt % padded_len);
            let t = u as isize - c.padding as isize + shift;
            if t < 0 || t >= c.time as isize { 0.0 } else { x.get(&[bi, t as usize, ch]) }
        });
        let unpadded = KernelGeometry::new(c.k, c.stride, c.dilation, 0).unwrap();
        let regular = conv1d_forward(&shifted, &w, &b, &unpadded, c.conv_groups()).unwrap();
        prop_assert!(deformed.max_abs_diff(&regular).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backward_matches_central_differences(c in case()) {
        let (x, w, b) = c.data();
        let field = random_offsets(&c, 2.0);
        let g = c.geometry();
        let groups = c.conv_groups();
        let up = Tensor::from_fn(&[c.batch, g.output_len(c.time), c.channels], |i| (i as f64 * 0.37).sin());
        let grads = deformable_backward(&x, &w, groups, &field, Boundary::Zero, &up).unwrap();
        let eps = 1e-6;
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, d: &Tensor<f64>| {
            let f = OffsetField::from_delta(d.clone(), &g, c.time).unwrap();
            dot(&deformable_forward(x, w, b, groups, &f, Boundary::Zero).unwrap(), &up)
        };
        let check = |analytic: &Tensor<f64>, which: usize| -> f64 {
            let mut worst = 0.0f64;
            for i in 0..analytic.len() {
                let mut args = [x.clone(), w.clone(), b.clone(), field.delta_p.clone()];
                args[which].data_mut()[i] += eps;
                let hi = loss(&args[0], &args[1], &args[2], &args[3]);
                args[which].data_mut()[i] -= 2.0 * eps;
                let lo = loss(&args[0], &args[1], &args[2], &args[3]);
                let n = (hi - lo) / (2.0 * eps);
                let a = analytic.data()[i];
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3));
            }
            worst
        };
        prop_assert!(check(&grads.d_x, 0) < 1e-6);
        prop_assert!(check(&grads.d_weights, 1) < 1e-6);
        prop_assert!(check(&grads.d_bias, 2) < 1e-6);
        prop_assert!(check(&grads.d_delta_p, 3) < 1e-6);
    }
}

#[test]
fn offset_groups_only_move_their_own_channels() {
    let c = Case {
        seed: 9,
        batch: 1,
        time: 12,
        channels: 4,
        depthwise: true,
        groups_d: 2,
        k: 3,
        stride: 1,
        dilation: 1,
        padding: 1,
    };
    let (x, w, b) = c.data();
    let g = c.geometry();
    let base = random_offsets(&c, 1.0);
    let mut moved = base.delta_p.clone();
    for (i, v) in moved.data_mut().iter_mut().enumerate() {
        if (i / c.k) % 2 == 1 {
            *v += 0.75;
        }
    }
    let moved = OffsetField::from_delta(moved, &g, c.time).unwrap();
    let y0 = deformable_forward(&x, &w, &b, 4, &base, Boundary::Zero).unwrap();
    let y1 = deformable_forward(&x, &w, &b, 4, &moved, Boundary::Zero).unwrap();
    for (i, (a, z)) in y0.data().iter().zip(y1.data()).enumerate() {
        if i % 4 < 2 {
            assert_eq!(a.to_bits(), z.to_bits(), "group 0 channel changed at {i}");
        }
    }
    assert!(y0.max_abs_diff(&y1).unwrap() > 1e-3);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = Case {
        seed: 3,
        batch: 7,
        time: 40,
        channels: 4,
        depthwise: false,
        groups_d: 2,
        k: 5,
        stride: 1,
        dilation: 2,
        padding: 4,
    };
    let (x, w, b) = c.data();
    let field = random_offsets(&c, 3.0);
    let up = Tensor::from_fn(&[c.batch, c.geometry().output_len(c.time), 4], |i| {
        (i as f64).cos()
    });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let y = deformable_forward(&x, &w, &b, 1, &field, Boundary::Zero).unwrap();
                let g = deformable_backward(&x, &w, 1, &field, Boundary::Zero, &up).unwrap();
                (y, g)
            })
    };
    let (y1, g1) = run(1);
    for threads in [2, 3, 8] {
        let (y, g) = run(threads);
        assert!(y.bitwise_eq(&y1));
        assert!(g.d_x.bitwise_eq(&g1.d_x));
        assert!(g.d_weights.bitwise_eq(&g1.d_weights));
        assert!(g.d_bias.bitwise_eq(&g1.d_bias));
        assert!(g.d_delta_p.bitwise_eq(&g1.d_delta_p));
    }
}

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::param::Parameter;
use crate::scalar::Scalar;

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    /// Glorot-uniform on every weight tensor, zero biases.
    Xavier,
    /// As [`InitScheme::Xavier`], except the offset convolution starts at zero.
    ZeroOffset,
}

impl std::str::FromStr for InitScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xavier" => Ok(Self::Xavier),
            "zero" | "zero_offset" | "zero-offset" => Ok(Self::ZeroOffset),
            other => Err(format!(
                "unknown init scheme {other:?} (expected xavier|zero)"
            )),
        }
    }
}

/// Glorot-uniform bound for a `[out, in, K]` kernel: `sqrt(6 / (in·K + out·K))`.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match *shape {
        [out, inp, k] => (inp * k, out * k),
        [out, inp] => (inp, out),
        [n] => (n, n),
        _ => panic!("glorot_bound expects a rank 1-3 weight shape, got {shape:?}"),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn glorot_fill<S: Scalar>(p: &mut Parameter<S>, rng: &mut ChaCha8Rng) {
    let bound = glorot_bound(p.shape());
    for v in p.value.data_mut() {
        *v = S::from_f64_lossy(rng.random_range(-bound..=bound));
    }
}

/// Weight and offset parameters draw from disjoint streams of the same seed, so
/// the two schemes produce identical non-offset parameters.
pub(crate) fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let main = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = ChaCha8Rng::seed_from_u64(seed);
    offset.set_stream(1);
    (main, offset)
}

use crate::scalar::Scalar;

#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `z · σ(z)`
#[inline]
pub fn swish<S: Scalar>(z: S) -> S {
    z * sigmoid(z)
}

/// `σ(z) · (1 + z · (1 − σ(z)))`
#[inline]
pub fn swish_grad<S: Scalar>(z: S) -> S {
    let s = sigmoid(z);
    s * (S::one() + z * (S::one() - s))
}

/// Gated linear unit over the last axis: `[.., 2F] → [.., F]`, `a · σ(b)`.
pub fn glu<S: Scalar>(h: &[S], half: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(h.len() / 2);
    for row in h.chunks_exact(2 * half) {
        let (a, b) = row.split_at(half);
        out.extend(a.iter().zip(b).map(|(&a, &b)| a * sigmoid(b)));
    }
    out
}

/// Backward of [`glu`]: returns `d_h` with the same layout as `h`.
pub fn glu_backward<S: Scalar>(h: &[S], half: usize, d_out: &[S]) -> Vec<S> {
    let mut d_h = vec![S::zero(); h.len()];
    for ((row, d_row), dh) in h
        .chunks_exact(2 * half)
        .zip(d_out.chunks_exact(half))
        .zip(d_h.chunks_exact_mut(2 * half))
    {
        for c in 0..half {
            let (a, b) = (row[c], row[half + c]);
            let s = sigmoid(b);
            dh[c] = d_row[c] * s;
            dh[half + c] = d_row[c] * a * s * (S::one() - s);
        }
    }
    d_h
}

use crate::scalar::Scalar;

/// How sampling positions outside the input are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Boundary {
    /// Samples outside `[0, T)` are zero.
    #[default]
    Zero,
    /// Positions are clamped into `[0, T − 1]` before interpolation.
    Clamp,
}

/// Linear-interpolation stencil for one fractional position.
///
/// `value = x[lo]·w_lo + x[lo+1]·w_hi` with `w_lo = ⌊p⌋ − p + 1` and
/// `w_hi = p − ⌊p⌋`. Out-of-range neighbours contribute zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil<S> {
    pub lo: isize,
    pub w_lo: S,
    pub w_hi: S,
    /// Derivative of the resolved position with respect to the raw one (0 when clamped).
    pub pass: S,
}

impl<S: Scalar> Stencil<S> {
    pub fn new(p: S, len: usize, boundary: Boundary) -> Self {
        let last = S::from_f64_lossy(len as f64 - 1.0);
        let (p, pass) = match boundary {
            Boundary::Zero => (p, S::one()),
            Boundary::Clamp => {
                if p < S::zero() {
                    (S::zero(), S::zero())
                } else if p > last {
                    (last, S::zero())
                } else {
                    (p, S::one())
                }
            }
        };
        // Both neighbours outside [0, len) (or NaN): the sample is identically zero.
        if !(p >= -S::one() && p < S::from_f64_lossy(len as f64)) {
            return Self {
                lo: -2,
                w_lo: S::zero(),
                w_hi: S::zero(),
                pass,
            };
        }
        let floor = p.floor();
        Self {
            lo: floor.to_isize().expect("bounded position"),
            w_lo: floor - p + S::one(),
            w_hi: p - floor,
            pass,
        }
    }

    #[inline]
    pub fn sample(&self, fetch: impl Fn(usize) -> S, len: usize) -> S {
        let (a, b) = self.neighbours(fetch, len);
        a * self.w_lo + b * self.w_hi
    }

    /// `(x[lo], x[lo+1])` with zero outside the input.
    #[inline]
    pub fn neighbours(&self, fetch: impl Fn(usize) -> S, len: usize) -> (S, S) {
        let get = |i: isize| {
            if i >= 0 && (i as usize) < len {
                fetch(i as usize)
            } else {
                S::zero()
            }
        };
        (get(self.lo), get(self.lo + 1))
    }
}

/// Linearly interpolates `x` at fractional position `p`, reading zero outside `[0, T)`.
pub fn interpolate<S: Scalar>(x: &[S], p: S) -> S {
    Stencil::new(p, x.len(), Boundary::Zero).sample(|i| x[i], x.len())
}

/// `d/dp` of [`interpolate`]: `x(⌊p⌋+1) − x(⌊p⌋)`, the right-limit at integers.
pub fn interpolate_slope<S: Scalar>(x: &[S], p: S) -> S {
    let (a, b) = Stencil::new(p, x.len(), Boundary::Zero).neighbours(|i| x[i], x.len());
    b - a
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 4] = [10.0, 20.0, 30.0, 40.0];

    #[test]
    fn interior_fraction() {
        assert_eq!(interpolate(&X, 1.25), 22.5);
    }

    #[test]
    fn integer_position_returns_sample() {
        assert_eq!(interpolate(&X, 2.0), 30.0);
        assert_eq!(interpolate(&X, 0.0), 10.0);
    }

    #[test]
    fn zero_outside_both_ends() {
        assert_eq!(interpolate(&X, -0.5), 5.0);
        assert_eq!(interpolate(&X, 3.5), 20.0);
        assert_eq!(interpolate(&X, -1.0), 0.0);
        assert_eq!(interpolate(&X, 4.0), 0.0);
        assert_eq!(interpolate(&X, 1e30), 0.0);
        assert_eq!(interpolate(&X, -1e30), 0.0);
    }

    #[test]
    fn slope_is_forward_difference() {
        assert_eq!(interpolate_slope(&[10.0, 20.0, 30.0], 1.25), 10.0);
        // right limit at an integer
        assert_eq!(interpolate_slope(&[10.0, 20.0, 35.0], 1.0), 15.0);
        assert_eq!(interpolate_slope(&X, 3.5), -40.0);
    }

    #[test]
    fn clamp_pins_to_edges_and_stops_gradient() {
        let s = Stencil::<f64>::new(-3.0, 4, Boundary::Clamp);
        assert_eq!(s.sample(|i| X[i], 4), 10.0);
        assert_eq!(s.pass, 0.0);
        let s = Stencil::<f64>::new(9.0, 4, Boundary::Clamp);
        assert_eq!(s.sample(|i| X[i], 4), 40.0);
        let s = Stencil::<f64>::new(1.5, 4, Boundary::Clamp);
        assert_eq!(s.pass, 1.0);
        assert_eq!(s.sample(|i| X[i], 4), 25.0);
    }
}

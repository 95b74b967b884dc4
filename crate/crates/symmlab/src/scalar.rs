//! Scalar abstraction for the numerical kernels.
//!
//! All core math is generic over [`Real`], a bundle of the `num-traits`
//! bounds the kernels need. `f64` is the working type everywhere in the
//! pipeline; `f32` is supported for experimentation at reduced accuracy.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every kernel in this crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    /// Two, the most common literal in the geometry kernels.
    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + LowerExp
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Send
        + Sync
        + 'static
{
}

/// Measure `|B_1|` of the unit ball in dimension `n`.
///
/// Uses the two-step recurrence `omega_n = omega_{n-2} * 2*pi / n` with
/// `omega_1 = 2`, `omega_2 = pi`, so no gamma function is needed.
pub fn unit_ball_volume<R: Real>(n: usize) -> R {
    assert!(n >= 1, "dimension must be at least 1");
    let two_pi = R::PI() * R::two();
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    let mut v = if n % 2 == 0 { R::PI() } else { R::two() };
    while k < n {
        k += 2;
        v = v * two_pi / R::of(k as f64);
    }
    v
}

/// Isoperimetric constant `kappa_n = n * omega_n^{1/n}`.
pub fn isoperimetric_constant<R: Real>(n: usize) -> R {
    R::of(n as f64) * unit_ball_volume::<R>(n).powf(R::one() / R::of(n as f64))
}

/// Deterministic pairwise-tree sum. The split points depend only on the
/// slice length, so the result is independent of thread count and identical
/// across runs.
pub fn pairwise_sum<R: Real>(xs: &[R]) -> R {
    if xs.len() <= 8 {
        let mut acc = R::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise-tree sum of `f(i)` over `0..n` without materializing a buffer
/// for small `n`; for large `n` the recursion keeps the fixed tree shape.
pub fn pairwise_sum_by<R: Real, F: Fn(usize) -> R>(n: usize, f: &F) -> R {
    fn go<R: Real, F: Fn(usize) -> R>(lo: usize, hi: usize, f: &F) -> R {
        if hi - lo <= 8 {
            let mut acc = R::zero();
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volumes_match_closed_forms() {
        let pi = std::f64::consts::PI;
        assert!((unit_ball_volume::<f64>(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(2) - pi).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(3) - 4.0 * pi / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume::<f64>(4) - pi * pi / 2.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_2_is_two_sqrt_pi() {
        let expected = 2.0 * std::f64::consts::PI.sqrt();
        assert!((isoperimetric_constant::<f64>(2) - expected).abs() < 1e-15);
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let seq: f64 = xs.iter().sum();
        let pw = pairwise_sum(&xs);
        assert!((seq - pw).abs() < 1e-10);
        let by = pairwise_sum_by(xs.len(), &|i| xs[i]);
        assert_eq!(pw, by);
    }
}

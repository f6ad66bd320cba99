//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used for probabilities, rewards and losses: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tolerance for "sums to one" and skew-symmetry checks.
    fn normalization_tol() -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold, which never
    /// happens for `f32`/`f64` (out of range values saturate to infinity).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f64 {
    #[inline]
    fn normalization_tol() -> Self {
        crate::NORMALIZATION_TOL
    }
}

impl Scalar for f32 {
    #[inline]
    fn normalization_tol() -> Self {
        1e-5
    }
}

/// `1 / (1 + e^{-x})`, evaluated without overflow for large `|x|`.
pub fn logistic<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `log σ(x)`, stable for large negative `x`.
pub fn log_logistic<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Max-shifted `log Σ exp(v)`. Entries equal to `-inf` are ignored; returns `-inf` when every
/// entry is `-inf` (or the slice is empty).
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = values
        .iter()
        .filter(|v| **v != S::neg_infinity())
        .map(|&v| (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Normalizes log-weights in place into probabilities; `-inf` entries become exactly zero.
/// Returns `None` if every entry is `-inf`.
pub(crate) fn softmax_in_place<S: Scalar>(logw: &mut [S]) -> Option<()> {
    let lse = log_sum_exp(logw);
    if lse == S::neg_infinity() || !lse.is_finite() {
        return None;
    }
    for v in logw.iter_mut() {
        *v = if *v == S::neg_infinity() {
            S::zero()
        } else {
            (*v - lse).exp()
        };
    }
    Some(())
}

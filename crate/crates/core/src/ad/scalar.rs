use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{note_floor, Var, DENOM_FLOOR};

/// Number type every model component is generic over.
///
/// Implemented for plain `f64` (fast evaluation), [`Var`] (reverse mode on
/// a tape) and [`super::Dual`] (forward-mode tangent over any other
/// scalar). Branching on [`Scalar::value`] is how piecewise functions are
/// expressed; each branch is itself differentiable.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(c: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn elu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            self.exp() - 1.0
        }
    }

    fn dot(ws: &[Self], xs: &[Self], bias: Self) -> Self {
        ws.iter().zip(xs).fold(bias, |acc, (&w, &x)| acc + w * x)
    }

    fn norm(xs: &[Self]) -> Self {
        let sq = Self::dot(xs, xs, Self::cst(0.0));
        if sq.value() < DENOM_FLOOR * DENOM_FLOOR {
            note_floor("norm", sq.value().sqrt());
        }
        sq.sqrt()
    }

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Known to be exactly zero with no derivative attached.
    fn is_const_zero(self) -> bool {
        false
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn elu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            self.exp_m1()
        }
    }
    #[inline]
    fn is_const_zero(self) -> bool {
        self == 0.0
    }
    #[inline]
    fn dot(ws: &[f64], xs: &[f64], bias: f64) -> f64 {
        ws.iter().zip(xs).fold(bias, |acc, (w, x)| acc + w * x)
    }
    #[inline]
    fn norm(xs: &[f64]) -> f64 {
        xs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl<'t> Scalar for Var<'t> {
    #[inline]
    fn cst(c: f64) -> Self {
        Var::Const(c)
    }
    #[inline]
    fn value(self) -> f64 {
        self.val()
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn elu(self) -> Self {
        Var::elu(self)
    }
    fn is_const_zero(self) -> bool {
        matches!(self, Var::Const(c) if c == 0.0)
    }
    fn dot(ws: &[Self], xs: &[Self], bias: Self) -> Self {
        Var::dot(ws, xs, bias)
    }
    fn norm(xs: &[Self]) -> Self {
        Var::norm(xs)
    }
}

/// `ln(1 + eˣ)`, evaluated without overflow.
pub fn softplus<S: Scalar>(x: S) -> S {
    if x.value() > 0.0 {
        x + ((-x).exp() + 1.0).ln()
    } else {
        (x.exp() + 1.0).ln()
    }
}

pub fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus_f64`] for `y > 0`.
pub fn inv_softplus(y: f64) -> f64 {
    assert!(y > 0.0, "inv_softplus needs a positive argument");
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::cst(1.0) / ((-x).exp() + 1.0)
}

/// Quadratically smoothed rectifier with half-width `width`:
/// `0` for `a ≤ 0`, `a²/(2w)` on `(0, w)`, `a − w/2` beyond.
pub fn smooth_relu<S: Scalar>(a: S, width: f64) -> S {
    let v = a.value();
    if v <= 0.0 {
        S::zero()
    } else if v < width {
        a * a / (2.0 * width)
    } else {
        a - width / 2.0
    }
}

/// Division whose denominator magnitude is floored at `DENOM_FLOOR`.
/// A triggered floor is counted (see [`super::floor_hits`]).
pub fn guarded_div<S: Scalar>(num: S, den: S) -> S {
    let d = den.value();
    if d.abs() < DENOM_FLOOR {
        note_floor("div", d);
        let floored = if d < 0.0 { -DENOM_FLOOR } else { DENOM_FLOOR };
        num / S::cst(floored)
    } else {
        num / den
    }
}

pub fn values<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.value()).collect()
}

pub fn consts<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::cst(x)).collect()
}

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{note_floor, Scalar, DENOM_FLOOR};

/// Forward-mode dual number `re + eps·ε` over any [`Scalar`].
///
/// `Dual<Var>` records the tangent on the tape, so a directional
/// derivative (e.g. one column of ∇V) stays differentiable with respect to
/// the model parameters.
#[derive(Debug, Clone, Copy)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Dual { re, eps }
    }

    /// Value with zero tangent.
    pub fn lift(re: S) -> Self {
        Dual { re, eps: S::zero() }
    }

    pub fn lift_all(xs: &[S]) -> Vec<Self> {
        xs.iter().map(|&x| Self::lift(x)).collect()
    }

    /// `xs` with unit tangent on coordinate `i`.
    pub fn seeded(xs: &[S], i: usize) -> Vec<Self> {
        xs.iter()
            .enumerate()
            .map(|(j, &x)| Dual {
                re: x,
                eps: S::cst(if i == j { 1.0 } else { 0.0 }),
            })
            .collect()
    }

    /// `xs` with tangent direction `dir`.
    pub fn with_tangent(xs: &[S], dir: &[S]) -> Vec<Self> {
        xs.iter().zip(dir).map(|(&re, &eps)| Dual { re, eps }).collect()
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, r: Self) -> Self {
        Dual { re: self.re + r.re, eps: self.eps + r.eps }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, r: Self) -> Self {
        Dual { re: self.re - r.re, eps: self.eps - r.eps }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, r: Self) -> Self {
        Dual {
            re: self.re * r.re,
            eps: self.eps * r.re + self.re * r.eps,
        }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, r: Self) -> Self {
        let q = self.re / r.re;
        Dual { re: q, eps: (self.eps - q * r.eps) / r.re }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<S: Scalar> Add<f64> for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, r: f64) -> Self {
        Dual { re: self.re + r, eps: self.eps }
    }
}

impl<S: Scalar> Sub<f64> for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, r: f64) -> Self {
        Dual { re: self.re - r, eps: self.eps }
    }
}

impl<S: Scalar> Mul<f64> for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, r: f64) -> Self {
        Dual { re: self.re * r, eps: self.eps * r }
    }
}

impl<S: Scalar> Div<f64> for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, r: f64) -> Self {
        Dual { re: self.re / r, eps: self.eps / r }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(c: f64) -> Self {
        Dual::lift(S::cst(c))
    }

    fn value(self) -> f64 {
        self.re.value()
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, eps: self.eps * e }
    }

    fn ln(self) -> Self {
        Dual { re: self.re.ln(), eps: self.eps / self.re }
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let den = if s.value() < DENOM_FLOOR {
            note_floor("sqrt", s.value());
            S::cst(2.0 * DENOM_FLOOR)
        } else {
            s * 2.0
        };
        Dual { re: s, eps: self.eps / den }
    }

    fn elu(self) -> Self {
        if self.re.value() > 0.0 {
            self
        } else {
            let e = self.re.exp();
            Dual { re: e - 1.0, eps: self.eps * e }
        }
    }

    fn dot(ws: &[Self], xs: &[Self], bias: Self) -> Self {
        let wr: Vec<S> = ws.iter().map(|w| w.re).collect();
        let xr: Vec<S> = xs.iter().map(|x| x.re).collect();
        let re = S::dot(&wr, &xr, bias.re);
        // Tangent: Σ wᵢ·ẋᵢ + Σ ẇᵢ·xᵢ; zero tangents are skipped.
        let mut a = Vec::with_capacity(2 * ws.len());
        let mut b = Vec::with_capacity(2 * ws.len());
        for (w, x) in ws.iter().zip(xs) {
            if !x.eps.is_const_zero() {
                a.push(w.re);
                b.push(x.eps);
            }
            if !w.eps.is_const_zero() {
                a.push(w.eps);
                b.push(x.re);
            }
        }
        let eps = S::dot(&a, &b, bias.eps);
        Dual { re, eps }
    }

    fn is_const_zero(self) -> bool {
        self.re.is_const_zero() && self.eps.is_const_zero()
    }

    fn norm(xs: &[Self]) -> Self {
        let re_parts: Vec<S> = xs.iter().map(|x| x.re).collect();
        let eps_parts: Vec<S> = xs.iter().map(|x| x.eps).collect();
        let n = S::norm(&re_parts);
        let num = S::dot(&re_parts, &eps_parts, S::zero());
        let den = if n.value() < DENOM_FLOOR {
            note_floor("norm", n.value());
            S::cst(DENOM_FLOOR)
        } else {
            n
        };
        Dual { re: n, eps: num / den }
    }
}

//! Truncated power series arithmetic.
//!
//! A series is a `Vec` of coefficients `a[0] + a[1] x + a[2] x^2 + ...`
//! truncated at a fixed length. All binary ops truncate to the shorter
//! operand unless an explicit length is given. Generic over f64 and
//! Complex64 through the [`Scalar`] trait.

use num_complex::Complex64;
use num_traits::{FromPrimitive, One, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Coefficient field for series arithmetic.
pub trait Scalar:
    Copy
    + PartialEq
    + Zero
    + One
    + FromPrimitive
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn s_exp(self) -> Self;
    fn s_powf(self, e: f64) -> Self;
    fn s_scale(self, c: f64) -> Self;
    fn s_abs(self) -> f64;
}

impl Scalar for f64 {
    fn s_exp(self) -> Self {
        self.exp()
    }
    fn s_powf(self, e: f64) -> Self {
        self.powf(e)
    }
    fn s_scale(self, c: f64) -> Self {
        self * c
    }
    fn s_abs(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn s_exp(self) -> Self {
        self.exp()
    }
    fn s_powf(self, e: f64) -> Self {
        self.powf(e)
    }
    fn s_scale(self, c: f64) -> Self {
        self * c
    }
    fn s_abs(self) -> f64 {
        self.norm()
    }
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len().max(b.len());
    let mut out = vec![T::zero(); n];
    for (i, o) in out.iter_mut().enumerate() {
        let x = if i < a.len() { a[i] } else { T::zero() };
        let y = if i < b.len() { b[i] } else { T::zero() };
        *o = x + y;
    }
    out
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len().max(b.len());
    let mut out = vec![T::zero(); n];
    for (i, o) in out.iter_mut().enumerate() {
        let x = if i < a.len() { a[i] } else { T::zero() };
        let y = if i < b.len() { b[i] } else { T::zero() };
        *o = x - y;
    }
    out
}

pub fn scale<T: Scalar>(a: &[T], c: T) -> Vec<T> {
    a.iter().map(|&x| x * c).collect()
}

/// Product truncated to `n` coefficients.
pub fn mul<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for i in 0..a.len().min(n) {
        if a[i] == T::zero() {
            continue;
        }
        for j in 0..b.len().min(n - i) {
            out[i + j] = out[i + j] + a[i] * b[j];
        }
    }
    out
}

/// Quotient a/b truncated to `n` coefficients; requires b[0] != 0.
pub fn div<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    assert!(!b.is_empty() && b[0] != T::zero(), "series division by zero constant term");
    let mut c = vec![T::zero(); n];
    for m in 0..n {
        let mut acc = if m < a.len() { a[m] } else { T::zero() };
        for j in 1..=m.min(b.len() - 1) {
            acc = acc - b[j] * c[m - j];
        }
        c[m] = acc / b[0];
    }
    c
}

/// exp of a series: e[0] = exp(a[0]), m e[m] = sum_{j=1..m} j a[j] e[m-j].
pub fn exp<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    let mut e = vec![T::zero(); n];
    e[0] = a[0].s_exp();
    for m in 1..n {
        let mut acc = T::zero();
        for j in 1..=m.min(a.len() - 1) {
            acc = acc + a[j].s_scale(j as f64) * e[m - j];
        }
        e[m] = acc.s_scale(1.0 / m as f64);
    }
    e
}

/// Real power of a series (J.C.P. Miller recurrence); requires a[0] != 0.
/// m a[0] b[m] = sum_{j=1..m} ((alpha+1) j - m) a[j] b[m-j].
pub fn powf<T: Scalar>(a: &[T], alpha: f64, n: usize) -> Vec<T> {
    assert!(!a.is_empty() && a[0] != T::zero(), "series power with zero constant term");
    let mut b = vec![T::zero(); n];
    b[0] = a[0].s_powf(alpha);
    for m in 1..n {
        let mut acc = T::zero();
        for j in 1..=m.min(a.len() - 1) {
            let w = (alpha + 1.0) * j as f64 - m as f64;
            acc = acc + (a[j] * b[m - j]).s_scale(w);
        }
        b[m] = acc / a[0].s_scale(m as f64);
    }
    b
}

pub fn derivative<T: Scalar>(a: &[T]) -> Vec<T> {
    if a.len() <= 1 {
        return vec![T::zero()];
    }
    (1..a.len()).map(|j| a[j].s_scale(j as f64)).collect()
}

/// Antiderivative with constant term `c0`.
pub fn integral<T: Scalar>(a: &[T], c0: T) -> Vec<T> {
    let mut out = vec![T::zero(); a.len() + 1];
    out[0] = c0;
    for j in 0..a.len() {
        out[j + 1] = a[j].s_scale(1.0 / (j + 1) as f64);
    }
    out
}

/// Horner evaluation.
pub fn eval<T: Scalar>(a: &[T], x: T) -> T {
    let mut acc = T::zero();
    for &c in a.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Value and first derivative at x.
pub fn eval_d<T: Scalar>(a: &[T], x: T) -> (T, T) {
    let mut p = T::zero();
    let mut dp = T::zero();
    for &c in a.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Value and first `nd` derivatives at x (d[0] is the value).
pub fn eval_jet<T: Scalar>(a: &[T], x: T, nd: usize) -> Vec<T> {
    let mut d = vec![T::zero(); nd + 1];
    for &c in a.iter().rev() {
        for k in (1..=nd).rev() {
            d[k] = d[k] * x + d[k - 1];
        }
        d[0] = d[0] * x + c;
    }
    let mut fact = 1.0;
    for (k, dk) in d.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *dk = dk.s_scale(fact);
    }
    d
}

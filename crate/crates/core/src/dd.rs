//! Double-double arithmetic and banded operators built on it.
//!
//! Used where an exact algebraic identity is checked between matrices whose
//! entries are ~10⁶: plain `f64` assembly leaves residuals of many ulps, while
//! the ~32-digit arithmetic here leaves only the rounding of the inputs.

use std::ops::{Add, Mul, Neg, Sub};

use crate::operators::OperatorMatrix;
use crate::spectral::C64;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn recip(self) -> Self {
        Dd::ONE / self
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::from_f64(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }
}

impl std::ops::Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

/// Complex number over [`Dd`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CDd {
    pub re: Dd,
    pub im: Dd,
}

impl CDd {
    pub const ZERO: CDd = CDd { re: Dd::ZERO, im: Dd::ZERO };

    pub fn real(x: Dd) -> Self {
        CDd { re: x, im: Dd::ZERO }
    }

    pub fn new(re: f64, im: f64) -> Self {
        CDd { re: re.into(), im: im.into() }
    }

    pub fn to_c64(self) -> C64 {
        C64::new(self.re.to_f64(), self.im.to_f64())
    }

    fn is_zero(&self) -> bool {
        self.re.hi == 0.0 && self.im.hi == 0.0
    }
}

impl Add for CDd {
    type Output = CDd;
    fn add(self, o: CDd) -> CDd {
        CDd { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for CDd {
    type Output = CDd;
    fn sub(self, o: CDd) -> CDd {
        CDd { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for CDd {
    type Output = CDd;
    fn mul(self, o: CDd) -> CDd {
        CDd { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// Square operator on `n ∈ [-N, N]` with a known band half-width.
#[derive(Debug, Clone)]
pub struct DdBand {
    n_max: usize,
    bw: usize,
    m: Vec<CDd>,
}

impl DdBand {
    fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    fn at(&self, i: usize, j: usize) -> CDd {
        self.m[i * self.dim() + j]
    }

    pub fn diagonal(n_max: usize, symbol: impl Fn(i64) -> CDd) -> Self {
        let d = 2 * n_max + 1;
        let mut m = vec![CDd::ZERO; d * d];
        for i in 0..d {
            m[i * d + i] = symbol(i as i64 - n_max as i64);
        }
        Self { n_max, bw: 0, m }
    }

    pub fn real_diagonal(n_max: usize, symbol: impl Fn(i64) -> Dd) -> Self {
        Self::diagonal(n_max, |n| CDd::real(symbol(n)))
    }

    pub fn identity(n_max: usize) -> Self {
        Self::diagonal(n_max, |_| CDd::real(Dd::ONE))
    }

    /// Multiplication by `e^{isy}`.
    pub fn shift(n_max: usize, s: i64) -> Self {
        let d = 2 * n_max + 1;
        let mut m = vec![CDd::ZERO; d * d];
        for j in 0..d {
            let i = j as i64 + s;
            if (0..d as i64).contains(&i) {
                m[i as usize * d + j] = CDd::real(Dd::ONE);
            }
        }
        Self { n_max, bw: s.unsigned_abs() as usize, m }
    }

    fn zip(&self, o: &Self, f: impl Fn(CDd, CDd) -> CDd) -> Self {
        assert_eq!(self.n_max, o.n_max);
        let m = self.m.iter().zip(&o.m).map(|(a, b)| f(*a, *b)).collect();
        Self { n_max: self.n_max, bw: self.bw.max(o.bw), m }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, s: CDd) -> Self {
        Self { n_max: self.n_max, bw: self.bw, m: self.m.iter().map(|a| *a * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(CDd::new(s, 0.0))
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.n_max, o.n_max);
        let d = self.dim();
        let mut m = vec![CDd::ZERO; d * d];
        for i in 0..d {
            for l in i.saturating_sub(self.bw)..=(i + self.bw).min(d - 1) {
                let a = self.at(i, l);
                if a.is_zero() {
                    continue;
                }
                for j in l.saturating_sub(o.bw)..=(l + o.bw).min(d - 1) {
                    m[i * d + j] = m[i * d + j] + a * o.at(l, j);
                }
            }
        }
        Self { n_max: self.n_max, bw: self.bw + o.bw, m }
    }

    pub fn commutator(&self, o: &Self) -> Self {
        self.mul(o).sub(&o.mul(self))
    }

    /// Round to an `f64` operator.
    pub fn to_operator(&self, k: f64) -> OperatorMatrix {
        let d = self.dim();
        let entries = nalgebra::DMatrix::from_fn(d, d, |i, j| self.at(i, j).to_c64());
        OperatorMatrix::from_dense(k, self.n_max, entries).expect("square by construction")
    }

    /// Largest `|T_{nm} - S_{nm}|` over `|n|, |m| ≤ inner`.
    pub fn interior_max_abs_diff(&self, o: &Self, inner: usize) -> f64 {
        let d = self.dim();
        let off = self.n_max - inner;
        let mut worst = 0.0f64;
        for i in off..d - off {
            for j in off..d - off {
                let z = (self.at(i, j) - o.at(i, j)).to_c64();
                worst = worst.max(z.norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.to_c64().norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_bits_lost_in_f64() {
        let big = Dd::from_f64(1e16);
        let sum = big + Dd::ONE - big;
        assert_eq!(sum.to_f64(), 1.0);
        assert_eq!(1e16 + 1.0 - 1e16, 0.0);
    }

    #[test]
    fn product_and_division_are_accurate() {
        let third = Dd::ONE / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        let x = Dd::from_f64(1.0 + 2f64.powi(-30));
        let sq = x * x;
        // (1+u)² = 1 + 2u + u² with u² below f64 resolution near 1.
        assert_eq!(sq.hi, 1.0 + 2f64.powi(-29));
        assert_eq!(sq.lo, 2f64.powi(-60));
    }

    #[test]
    fn band_product_matches_f64_on_small_integers() {
        let a = DdBand::shift(4, 1).add(&DdBand::real_diagonal(4, |n| Dd::from_f64(n as f64)));
        let b = DdBand::shift(4, -1).scale_re(2.0);
        let p = a.mul(&b).to_operator(2.0);
        let q = a.to_operator(2.0).mul(&b.to_operator(2.0));
        assert_eq!(p.entries(), q.entries());
    }
}

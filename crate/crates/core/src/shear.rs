//! Background shear profiles `V(y)` given by finite real Fourier series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{C64, ZERO};

/// Half-width of the windows around `0` and `π` where the critical points must lie.
pub const CRITICAL_WINDOW: f64 = 0.1;
const SCAN_POINTS: usize = 4096;

/// A real shear `V(y) = Σ_{|n|≤p} v̂(n) e^{iny}` with its two critical points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearProfile {
    coeffs: Vec<C64>,
    y1: f64,
    y2: f64,
    max: f64,
    min: f64,
}

fn wrap(y: f64) -> f64 {
    (y + PI).rem_euclid(2.0 * PI) - PI
}

impl ShearProfile {
    /// `V = cos y`.
    pub fn cosine() -> Self {
        Self::from_cosine_series(&[0.0, 1.0]).expect("cos y is admissible")
    }

    /// `V = a cos y + d`.
    pub fn affine(a: f64, d: f64) -> Result<Self> {
        Self::from_cosine_series(&[d, a])
    }

    /// `V = Σ_j a_j cos(jy)`.
    pub fn from_cosine_series(a: &[f64]) -> Result<Self> {
        let p = a.len().saturating_sub(1);
        let mut c = vec![ZERO; 2 * p + 1];
        for (j, &aj) in a.iter().enumerate() {
            if j == 0 {
                c[p] = C64::new(aj, 0.0);
            } else {
                c[p + j] = C64::new(0.5 * aj, 0.0);
                c[p - j] = C64::new(0.5 * aj, 0.0);
            }
        }
        Self::from_coeffs(c)
    }

    /// From conjugate-symmetric coefficients indexed by `n + p`.
    pub fn from_coeffs(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::InvalidProfile("coefficient vector must have odd length".into()));
        }
        let p = coeffs.len() / 2;
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        for j in 0..=p {
            let d = (coeffs[p + j] - coeffs[p - j].conj()).norm();
            if d > 1e-14 * scale || !coeffs[p + j].re.is_finite() || !coeffs[p + j].im.is_finite() {
                return Err(Error::InvalidProfile(format!("coefficients are not those of a real function (n = {j})")));
            }
        }
        let mut v = Self { coeffs, y1: 0.0, y2: PI, max: 0.0, min: 0.0 };
        v.locate_extrema()?;
        Ok(v)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Highest harmonic present.
    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn get(&self, n: i64) -> C64 {
        let p = self.degree() as i64;
        if n.abs() > p {
            ZERO
        } else {
            self.coeffs[(n + p) as usize]
        }
    }

    /// `V^{(order)}(y)`.
    pub fn derivative(&self, y: f64, order: u32) -> f64 {
        let p = self.degree() as i64;
        let i_pow = |n: i64| C64::new(0.0, n as f64).powu(order);
        (-p..=p)
            .map(|n| (self.coeffs[(n + p) as usize] * i_pow(n) * C64::from_polar(1.0, n as f64 * y)).re)
            .sum()
    }

    pub fn value(&self, y: f64) -> f64 {
        self.derivative(y, 0)
    }

    /// Critical points `(y₁, y₂)` with `|y₁| ≤ 1/10` and `|y₂ - π| ≤ 1/10`.
    pub fn critical_points(&self) -> (f64, f64) {
        (self.y1, self.y2)
    }

    /// `M = V(y₁)`.
    pub fn max(&self) -> f64 {
        self.max
    }

    /// `m = V(y₂)`.
    pub fn min(&self) -> f64 {
        self.min
    }

    /// `‖V - cos y‖_{H⁴}` with weights `(1+n²)²`.
    pub fn distance_to_cosine(&self) -> f64 {
        let p = self.degree().max(1) as i64;
        (-p..=p)
            .map(|n| {
                let b = if n.abs() == 1 { C64::new(0.5, 0.0) } else { ZERO };
                (1.0 + (n * n) as f64).powi(4) * (self.get(n) - b).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Samples of `V` on the uniform `m`-point grid.
    pub fn on_grid(&self, m: usize) -> Vec<f64> {
        fft::synthesize(&self.coeffs, m).into_iter().map(|z| z.re).collect()
    }

    /// Samples of `|V'|` on the uniform `m`-point grid.
    pub fn abs_derivative_on_grid(&self, m: usize) -> Vec<f64> {
        let p = self.degree() as i64;
        let d: Vec<C64> = (-p..=p).map(|n| self.get(n) * C64::new(0.0, n as f64)).collect();
        fft::synthesize(&d, m).into_iter().map(|z| z.re.abs()).collect()
    }

    fn locate_extrema(&mut self) -> Result<()> {
        let h = 2.0 * PI / SCAN_POINTS as f64;
        let dv = |y: f64| self.derivative(y, 1);
        if self.coeffs.iter().enumerate().all(|(i, c)| i == self.degree() || *c == ZERO) {
            return Err(Error::InvalidProfile("constant profile has no isolated critical points".into()));
        }
        // Sign changes of V' on a grid shifted off 0 and π.
        let start = -PI + 0.5 * h;
        let mut roots = Vec::new();
        let mut prev = dv(start);
        for j in 1..=SCAN_POINTS {
            let y = start + h * j as f64;
            let cur = dv(y);
            if prev == 0.0 || prev.signum() != cur.signum() {
                roots.push(refine_root(&dv, y - h, y));
            }
            prev = cur;
        }
        if roots.len() != 2 {
            return Err(Error::InvalidProfile(format!("expected two critical points, found {}", roots.len())));
        }
        let near0 = roots.iter().cloned().find(|y| wrap(*y).abs() <= CRITICAL_WINDOW);
        let near_pi = roots.iter().cloned().find(|y| wrap(*y - PI).abs() <= CRITICAL_WINDOW);
        match (near0, near_pi) {
            (Some(a), Some(b)) => {
                self.y1 = wrap(a);
                self.y2 = wrap(b - PI) + PI;
            }
            _ => {
                return Err(Error::InvalidProfile(format!(
                    "critical points {roots:?} are outside the windows around 0 and π"
                )))
            }
        }
        self.max = self.value(self.y1);
        self.min = self.value(self.y2);
        if !(self.max > self.min) {
            return Err(Error::InvalidProfile("maximum must sit near 0 and minimum near π".into()));
        }
        Ok(())
    }
}

/// Bracketed Newton–bisection on `[a, b]` for a continuous `f` with a sign change.
fn refine_root(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `θ(k, λ) = 1 + |k| λ₀^{1/2} + |λ|` with `λ₀` the distance from `λ` to `{m, M}`.
pub fn theta(k: f64, lambda: f64, v: &ShearProfile) -> f64 {
    let l0 = (lambda - v.min()).abs().min((lambda - v.max()).abs());
    1.0 + k.abs() * l0.sqrt() + lambda.abs()
}

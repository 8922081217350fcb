//! Least-squares rate fits on log–log and semilog axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `v ≈ prefactor · t^exponent`.
    PowerLaw,
    /// `v ≈ prefactor · e^{-exponent·t}`; `exponent` is the decay rate.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kind: FitKind,
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl RateFit {
    /// Whether `|exponent - target| ≤ tol`.
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.exponent - target).abs() <= tol
    }
}

struct Ols {
    slope: f64,
    intercept: f64,
    stderr: f64,
    r_squared: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Ols {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ols { slope, intercept, stderr, r_squared }
}

fn select(series: &[(f64, f64)], window: (f64, f64), log_t: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidWindow(format!("[{lo}, {hi}] is empty")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveSample { t, value: v });
        }
        if log_t && t <= 0.0 {
            return Err(Error::InvalidWindow(format!("log axis needs t > 0, got {t}")));
        }
        xs.push(if log_t { t.ln() } else { t });
        ys.push(v.ln());
    }
    if xs.len() < MIN_POINTS {
        return Err(Error::InvalidWindow(format!(
            "{} points in [{lo}, {hi}], need at least {MIN_POINTS}",
            xs.len()
        )));
    }
    Ok((xs, ys))
}

/// Slope of `ln v` against `ln t` over `window`.
pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (x, y) = select(series, window, true)?;
    let o = ols(&x, &y);
    Ok(RateFit {
        kind: FitKind::PowerLaw,
        exponent: o.slope,
        prefactor: o.intercept.exp(),
        window,
        stderr: o.stderr,
        r_squared: o.r_squared,
        points: x.len(),
    })
}

/// Decay rate `r` in `v ≈ C e^{-rt}` over `window`.
pub fn fit_exponential(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (x, y) = select(series, window, false)?;
    let o = ols(&x, &y);
    Ok(RateFit {
        kind: FitKind::Exponential,
        exponent: -o.slope,
        prefactor: o.intercept.exp(),
        window,
        stderr: o.stderr,
        r_squared: o.r_squared,
        points: x.len(),
    })
}

/// `count` points spaced geometrically on `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

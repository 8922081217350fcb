//! Thin helpers over `rustfft` for periodic functions on the 2π circle.
//!
//! Grid points are `y_j = 2πj/M`. A truncated series `g(y) = Σ_{|n|≤N} ĝ(n) e^{iny}`
//! is stored as a symmetric coefficient vector of length `2N+1` with index `n + N`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Smallest power of two that is `>= n`.
pub fn pow2_at_least(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Synthesis `g(y_j) = Σ_n ĝ(n) e^{i n y_j}` on an `m`-point grid.
///
/// Requires `m >= coeffs.len()` so that no two retained modes alias.
pub fn synthesize(coeffs: &[Complex64], m: usize) -> Vec<Complex64> {
    let n_max = (coeffs.len() / 2) as i64;
    assert!(m >= coeffs.len(), "grid of {m} points cannot hold {} modes", coeffs.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (idx, c) in coeffs.iter().enumerate() {
        let n = idx as i64 - n_max;
        buf[n.rem_euclid(m as i64) as usize] += *c;
    }
    inverse_plan(m).process(&mut buf);
    buf
}

/// Analysis: coefficients `|n| <= n_max` of the trigonometric interpolant of `values`.
pub fn analyze(values: &[Complex64], n_max: usize) -> Vec<Complex64> {
    let m = values.len();
    assert!(m > 2 * n_max, "grid of {m} points cannot resolve |n| <= {n_max}");
    let mut buf = values.to_vec();
    forward_plan(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    (-(n_max as i64)..=n_max as i64)
        .map(|n| buf[n.rem_euclid(m as i64) as usize] * scale)
        .collect()
}

/// Adjoint of [`synthesize`]: `c(n) = Σ_j g_j e^{-i n y_j}` for `|n| <= n_max`.
pub fn synthesize_adjoint(values: &[Complex64], n_max: usize) -> Vec<Complex64> {
    let m = values.len();
    let mut buf = values.to_vec();
    forward_plan(m).process(&mut buf);
    (-(n_max as i64)..=n_max as i64)
        .map(|n| buf[n.rem_euclid(m as i64) as usize])
        .collect()
}

/// Uniform grid `y_j = 2πj/m`.
pub fn grid_points(m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / m as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesis_and_analysis_invert() {
        let coeffs: Vec<Complex64> = (0..9)
            .map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i * i) as f64 * 0.01))
            .collect();
        let vals = synthesize(&coeffs, 32);
        let back = analyze(&vals, 4);
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn adjoint_pairing() {
        let c: Vec<Complex64> = (0..7).map(|i| Complex64::new(1.0 + i as f64, -0.5 * i as f64)).collect();
        let g: Vec<Complex64> = (0..16).map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.7).cos())).collect();
        let sc = synthesize(&c, 16);
        let lhs: Complex64 = sc.iter().zip(&g).map(|(a, b)| a * b.conj()).sum();
        let adj = synthesize_adjoint(&g, 3);
        let rhs: Complex64 = c.iter().zip(&adj).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-11);
    }
}

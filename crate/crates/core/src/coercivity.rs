//! Coercive estimate for the almost-conserved quantity, at symbol and matrix level.
//!
//! With `a_n = n² + k²` the diagonal symbols
//!
//! ```text
//! b_n = (a_{n-1}^{1+s} + a_{n+1}^{1+s})/2 + (1/4 - n²) a_n^s
//! c_n = -(n-½)²(1-1/a_{n-1}) a_{n-1}^s (1-1/a_n) - (n+½)²(1-1/a_{n+1}) a_{n+1}^s (1-1/a_n)
//!       + (4 - (2 - 1/a_{n-1} - 1/a_{n+1})(1-1/a_n)) a_n^{1+s}
//!       - (1-1/a_{n-1}) b_{n-1} (1-1/a_n) - (1-1/a_{n+1}) b_{n+1} (1-1/a_n)
//! ```
//!
//! are those of `H₀` and `H_*` in the decomposition
//! `Λ₁D^sΛ₁ + 2(1-B²)D^{1+s} + 2D^{1+s}(1-B²) = 4AH₀A + H_*`, `D = -Δ_k`.
//! The claimed bounds are `b_n ≥ k² a_n^s` and `c_n ≥ δ(s) a_n^s`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::dd::{CDd, Dd, DdBand};
use crate::operators::{
    build_a, build_b, build_lambda, build_neg_laplacian_power, build_star_weight, OperatorMatrix, DEFAULT_MARGIN,
};
use crate::par;
use crate::spectral::{neg_laplacian_symbol, C64};

/// Extra modes assembled beyond `N` so that the compressed operator is exact.
const ASSEMBLY_PAD: usize = 4;

/// `δ(s) = 4 - max((8s²+7s+2)s/2, 8s²+8s-1)` for `s ∈ [0, 0.4]`.
pub fn delta_s(s: f64) -> Result<f64> {
    if !(0.0..=0.4).contains(&s) {
        return Err(Error::OutOfRange { name: "s", value: s, range: "[0, 0.4]" });
    }
    let p = (8.0 * s * s + 7.0 * s + 2.0) * s / 2.0;
    let q = 8.0 * s * s + 8.0 * s - 1.0;
    Ok(4.0 - p.max(q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceTriple {
    pub n: i64,
    pub k: f64,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SequenceTriple {
    /// `b_n - k² a_n^s`.
    pub fn slack_b(&self) -> f64 {
        self.b - self.k * self.k * self.a.powf(self.s)
    }

    /// `c_n - δ(s) a_n^s`.
    pub fn slack_c(&self) -> f64 {
        self.c - delta_s(self.s).expect("s validated at construction") * self.a.powf(self.s)
    }
}

fn b_symbol(n: i64, k: f64, s: f64) -> f64 {
    let a = |m: i64| neg_laplacian_symbol(m, k);
    (a(n - 1).powf(1.0 + s) + a(n + 1).powf(1.0 + s)) / 2.0 + (0.25 - (n * n) as f64) * a(n).powf(s)
}

fn c_symbol(n: i64, k: f64, s: f64) -> f64 {
    let (am, a0, ap) = (neg_laplacian_symbol(n - 1, k), neg_laplacian_symbol(n, k), neg_laplacian_symbol(n + 1, k));
    let (wm, w0, wp) = (1.0 - 1.0 / am, 1.0 - 1.0 / a0, 1.0 - 1.0 / ap);
    let nf = n as f64;
    -(nf - 0.5).powi(2) * wm * am.powf(s) * w0 - (nf + 0.5).powi(2) * wp * ap.powf(s) * w0
        + (4.0 - (2.0 - 1.0 / am - 1.0 / ap) * w0) * a0.powf(1.0 + s)
        - wm * b_symbol(n - 1, k, s) * w0
        - wp * b_symbol(n + 1, k, s) * w0
}

/// Evaluate `a_n`, `b_n`, `c_n` exactly as written.
pub fn sequence_abc(n: i64, k: f64, s: f64) -> Result<SequenceTriple> {
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    delta_s(s)?;
    Ok(SequenceTriple { n, k, s, a: neg_laplacian_symbol(n, k), b: b_symbol(n, k, s), c: c_symbol(n, k, s) })
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceReport {
    pub min_slack_b: f64,
    pub min_slack_c: f64,
    pub argmin_b: SequenceTriple,
    pub argmin_c: SequenceTriple,
    pub points: usize,
}

impl SequenceReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_slack_b >= -tol && self.min_slack_c >= -tol
    }
}

/// All triples of the sweep, ordered by `(k, s, n)`.
pub fn sequence_rows(k_set: &[f64], n_max: i64, s_grid: &[f64]) -> Result<Vec<SequenceTriple>> {
    let pairs: Vec<(f64, f64)> = k_set.iter().flat_map(|&k| s_grid.iter().map(move |&s| (k, s))).collect();
    let blocks = par::map(&pairs, |&(k, s)| {
        (-n_max..=n_max).map(|n| sequence_abc(n, k, s)).collect::<Result<Vec<_>>>()
    });
    let mut rows = Vec::with_capacity(pairs.len() * (2 * n_max as usize + 1));
    for b in blocks {
        rows.extend(b?);
    }
    Ok(rows)
}

/// Minima of both slacks over `n ∈ [-n_max, n_max]`, `k ∈ k_set`, `s ∈ s_grid`.
///
/// A violated inequality shows up as a negative minimum; it is not an error.
pub fn check_sequence_inequalities(k_set: &[f64], n_max: i64, s_grid: &[f64]) -> Result<SequenceReport> {
    let rows = sequence_rows(k_set, n_max, s_grid)?;
    let first = *rows
        .first()
        .ok_or_else(|| Error::InvalidWindow("empty sequence sweep".into()))?;
    let mut report = SequenceReport {
        min_slack_b: first.slack_b(),
        min_slack_c: first.slack_c(),
        argmin_b: first,
        argmin_c: first,
        points: rows.len(),
    };
    for r in &rows[1..] {
        let (sb, sc) = (r.slack_b(), r.slack_c());
        if sb < report.min_slack_b {
            report.min_slack_b = sb;
            report.argmin_b = *r;
        }
        if sc < report.min_slack_c {
            report.min_slack_c = sc;
            report.argmin_c = *r;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoerciveCheck {
    pub k: f64,
    pub s: f64,
    pub n_max: usize,
    /// Smallest eigenvalue of the Hermitian part of `W M`.
    pub min_eig: f64,
    /// Interior-block residual of the decomposition identity.
    pub decomposition_residual: f64,
    /// Largest entry of the decomposition's two sides, for scale.
    pub decomposition_scale: f64,
    /// `‖WM - (WM)^*‖_max / ‖WM‖_max` before symmetrization.
    pub hermitian_defect: f64,
}

/// Symbols of the decomposition in double-double, with `a^{1+s} := a · a^s`.
struct DdSymbols {
    k: f64,
    s: f64,
}

impl DdSymbols {
    fn a(&self, n: i64) -> Dd {
        Dd::from_f64(neg_laplacian_symbol(n, self.k))
    }

    fn pow_s(&self, n: i64) -> Dd {
        Dd::from_f64(neg_laplacian_symbol(n, self.k).powf(self.s))
    }

    fn pow_1s(&self, n: i64) -> Dd {
        self.a(n) * self.pow_s(n)
    }

    fn w(&self, n: i64) -> Dd {
        Dd::ONE - self.a(n).recip()
    }

    fn b(&self, n: i64) -> Dd {
        let nn = Dd::from_f64((n * n) as f64);
        (self.pow_1s(n - 1) + self.pow_1s(n + 1)) * Dd::from_f64(0.5) + (Dd::from_f64(0.25) - nn) * self.pow_s(n)
    }

    fn c(&self, n: i64) -> Dd {
        let (wm, w0, wp) = (self.w(n - 1), self.w(n), self.w(n + 1));
        let hm = Dd::from_f64(n as f64 - 0.5);
        let hp = Dd::from_f64(n as f64 + 0.5);
        let mid = Dd::from_f64(4.0) - (Dd::from_f64(2.0) - self.a(n - 1).recip() - self.a(n + 1).recip()) * w0;
        -(hm * hm * wm * self.pow_s(n - 1) * w0) - hp * hp * wp * self.pow_s(n + 1) * w0 + mid * self.pow_1s(n)
            - wm * self.b(n - 1) * w0
            - wp * self.b(n + 1) * w0
    }
}

struct DdAssembly {
    lhs: DdBand,
    rhs: DdBand,
    m: DdBand,
}

/// Assemble both sides of the decomposition and `M = LHS - 4k²AD^sA - δ(s)D^s`.
fn assemble(k: f64, s: f64, delta: f64, n: usize) -> DdAssembly {
    let sym = DdSymbols { k, s };
    let w = DdBand::real_diagonal(n, |m| sym.w(m));
    let up = DdBand::shift(n, 1);
    let down = DdBand::shift(n, -1);
    let cos = up.add(&down).scale_re(0.5);
    let sin = up.sub(&down).scale(CDd::new(0.0, -0.5));
    let a = sin.mul(&w);
    let b = cos.mul(&w);
    let lap = DdBand::real_diagonal(n, |m| -sym.a(m));
    let l1 = lap.commutator(&b);
    let ds = DdBand::real_diagonal(n, |m| sym.pow_s(m));
    let ds1 = DdBand::real_diagonal(n, |m| sym.pow_1s(m));
    let q = DdBand::identity(n).sub(&b.mul(&b));
    let lhs = l1.mul(&ds).mul(&l1).add(&q.mul(&ds1).scale_re(2.0)).add(&ds1.mul(&q).scale_re(2.0));
    let h0 = DdBand::real_diagonal(n, |m| sym.b(m));
    let hstar = DdBand::real_diagonal(n, |m| sym.c(m));
    let rhs = a.mul(&h0).mul(&a).scale_re(4.0).add(&hstar);
    let m = lhs.sub(&a.mul(&ds).mul(&a).scale_re(4.0 * k * k)).sub(&ds.scale_re(delta));
    DdAssembly { lhs, rhs, m }
}

/// Assemble `M = LHS - 4k²AD^sA - δ(s)D^s` and check it two ways:
/// the decomposition identity against the diagonal `H₀`, `H_*`, and positivity of
/// the star-weighted form.
///
/// Assembly runs in double-double at `N + 4` and is compressed to `|n| ≤ N`,
/// which makes the compressed matrix the exact restriction of the operator to
/// that subspace.
pub fn coercive_matrix_check(k: f64, s: f64, n_max: usize) -> Result<CoerciveCheck> {
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    let delta = delta_s(s)?;
    let big = n_max + ASSEMBLY_PAD;
    let asm = assemble(k, s, delta, big);
    let inner = n_max.saturating_sub(DEFAULT_MARGIN);
    let decomposition_residual = asm.lhs.interior_max_abs_diff(&asm.rhs, inner);
    let decomposition_scale = asm.lhs.max_abs().max(asm.rhs.max_abs());

    let m = asm.m.to_operator(k).compress(n_max);
    let w = build_star_weight(k, n_max);
    let wm = w.mul(&m).into_entries();
    let wm_adj = wm.adjoint();
    let scale = wm.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let hermitian_defect = (&wm - &wm_adj).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale.max(f64::MIN_POSITIVE);
    if hermitian_defect > 1e-9 {
        return Err(Error::NotHermitian { defect: hermitian_defect });
    }
    let herm: DMatrix<C64> = (&wm + &wm_adj) * C64::new(0.5, 0.0);
    let min_eig = herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CoerciveCheck { k, s, n_max, min_eig, decomposition_residual, decomposition_scale, hermitian_defect })
}

/// The same decomposition assembled in plain `f64` operator algebra, as a cross-check
/// of the double-double path.
pub fn decomposition_residual_f64(k: f64, s: f64, n_max: usize) -> Result<f64> {
    let big = n_max + ASSEMBLY_PAD;
    let l1 = build_lambda(1, k, big)?;
    let b = build_b(k, big)?;
    let a = build_a(k, big)?;
    let ds = build_neg_laplacian_power(k, s, big);
    let ds1 = build_neg_laplacian_power(k, 1.0 + s, big);
    let q = OperatorMatrix::identity(k, big).sub(&b.mul(&b));
    let lhs = l1.mul(&ds).mul(&l1).add(&q.mul(&ds1).scale_re(2.0)).add(&ds1.mul(&q).scale_re(2.0));
    let h0 = diag_symbols(k, big, |m| b_symbol(m, k, s));
    let hstar = diag_symbols(k, big, |m| c_symbol(m, k, s));
    let rhs = a.mul(&h0).mul(&a).scale_re(4.0).add(&hstar);
    Ok(lhs.with_margin(ASSEMBLY_PAD + DEFAULT_MARGIN).interior_max_abs_diff(&rhs))
}

fn diag_symbols(k: f64, n: usize, f: impl Fn(i64) -> f64) -> OperatorMatrix {
    OperatorMatrix::diagonal(k, n, |m| C64::new(f(m), 0.0))
}

/// Matrix checks over a `(k, s)` grid, in parallel.
pub fn coercive_matrix_sweep(k_set: &[f64], s_grid: &[f64], n_max: usize) -> Result<Vec<CoerciveCheck>> {
    let pairs: Vec<(f64, f64)> = k_set.iter().flat_map(|&k| s_grid.iter().map(move |&s| (k, s))).collect();
    par::map(&pairs, |&(k, s)| coercive_matrix_check(k, s, n_max)).into_iter().collect()
}

/// The default grid `{0, 0.05, …, 0.4}`.
pub fn default_s_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.05).collect()
}

/// The default grid `{2, 4, …, 80}`.
pub fn default_k_set() -> Vec<f64> {
    (1..=40).map(|i| 2.0 * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(delta_s(0.0).unwrap(), 4.0);
        assert!((delta_s(0.4).unwrap() - 0.52).abs() < 1e-14);
        // Branches at s = 0.2: (0.32+1.4+2)·0.1 = 0.372 and 0.32+1.6-1 = 0.92.
        assert!((delta_s(0.2).unwrap() - 3.08).abs() < 1e-14);
        assert!(delta_s(0.41).is_err());
        assert!(delta_s(-0.01).is_err());
    }

    #[test]
    fn delta_monotone_on_range() {
        let mut prev = delta_s(0.0).unwrap();
        for i in 1..=400 {
            let d = delta_s(i as f64 * 1e-3).unwrap();
            assert!(d <= prev + 1e-15);
            prev = d;
        }
    }

    #[test]
    fn b_at_s0_telescopes() {
        for n in [-40, -3, 0, 1, 17, 500] {
            for k in [2.0, 4.0, 6.0] {
                let t = sequence_abc(n, k, 0.0).unwrap();
                assert_eq!(t.b, k * k + 1.25);
                assert_eq!(t.slack_b(), 1.25);
            }
        }
    }

    #[test]
    fn c0_at_k2_s0() {
        // a_{±1} = 5, a_0 = 4, b_{±1} = 5.25:
        // -2·(1/4)(4/5)(3/4) = -0.3, (4 - (8/5)(3/4))·4 = 11.2, -2·(4/5)(21/4)(3/4) = -6.3.
        let t = sequence_abc(0, 2.0, 0.0).unwrap();
        assert!((t.c - 4.6).abs() < 1e-13);
        assert!((t.slack_c() - 0.6).abs() < 1e-13);
    }

    #[test]
    fn symbols_are_even_in_n() {
        for n in 1..60 {
            for s in [0.0, 0.13, 0.4] {
                let p = sequence_abc(n, 3.0, s).unwrap();
                let q = sequence_abc(-n, 3.0, s).unwrap();
                assert!((p.b - q.b).abs() <= 1e-12 * p.b.abs());
                assert!((p.c - q.c).abs() <= 1e-12 * p.c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sequence_rejects_small_k_and_bad_s() {
        assert!(sequence_abc(0, 1.0, 0.0).is_err());
        assert!(sequence_abc(0, 2.0, 0.5).is_err());
    }

    #[test]
    fn small_sweep_holds() {
        let r = check_sequence_inequalities(&[2.0, 4.0], 50, &[0.0, 0.2, 0.4]).unwrap();
        assert!(r.holds(1e-9), "{r:?}");
        assert_eq!(r.points, 2 * 3 * 101);
    }

    #[test]
    fn decomposition_and_positivity_small() {
        let c = coercive_matrix_check(2.0, 0.2, 32).unwrap();
        assert!(c.decomposition_residual < 1e-9, "{c:?}");
        assert!(c.min_eig >= -1e-8, "{c:?}");
    }

    #[test]
    fn double_double_and_f64_assemblies_agree() {
        let (k, s, n) = (2.0, 0.3, 24usize);
        let f = decomposition_residual_f64(k, s, n).unwrap();
        let c = coercive_matrix_check(k, s, n).unwrap();
        assert!(f < 1e-9 && c.decomposition_residual <= f + 1e-12);
        let sym = DdSymbols { k, s };
        for m in -10..=10 {
            let t = sequence_abc(m, k, s).unwrap();
            assert!((sym.b(m).to_f64() - t.b).abs() < 1e-12 * t.b.abs());
            assert!((sym.c(m).to_f64() - t.c).abs() < 1e-11 * t.c.abs());
        }
    }

    #[test]
    fn h0_h_star_diagonal_matches_assembled_transport() {
        // H_0 assembled from shifted Laplacian powers and ∂_y² equals diag(b_n).
        use crate::operators::{build_delta_shift, build_dy};
        let (k, s, n) = (2.0, 0.3, 24usize);
        let pow = |sh: f64| {
            let d = build_delta_shift(k, sh, n);
            OperatorMatrix::diagonal(k, n, |m| {
                let nn = (m + n as i64) as usize;
                C64::new((-d.entries()[(nn, nn)].re).powf(1.0 + s), 0.0)
            })
        };
        let dy = build_dy(k, n);
        let lap_part = dy.mul(&dy).add(&OperatorMatrix::identity(k, n).scale_re(0.25));
        let h0 = pow(-1.0).add(&pow(1.0)).scale_re(0.5).add(&lap_part.mul(&build_neg_laplacian_power(k, s, n)));
        let diag = diag_symbols(k, n, |m| b_symbol(m, k, s));
        assert!(h0.sub(&diag).max_abs() <= 1e-10 * diag.max_abs());
    }
}

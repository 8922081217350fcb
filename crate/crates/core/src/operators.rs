//! Truncated matrix realizations of the operator algebra at fixed `k`.
//!
//! Rows and columns are indexed by `n ∈ [-N, N]` (storage index `n + N`).
//! Multiplication by `e^{±iy}` moves content one index up or down, so any
//! product of shift-type operators is wrong within a few rows of the edge.
//! Identity checks therefore compare only the interior block `|n| ≤ N - margin`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{neg_laplacian_symbol, star_weight, ModeFunction, C64, ZERO};

pub const DEFAULT_MARGIN: usize = 8;

/// Dense `(2N+1)²` complex matrix with its band half-width, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    k: f64,
    n_max: usize,
    entries: DMatrix<C64>,
    margin: usize,
    bandwidth: Option<usize>,
}

impl OperatorMatrix {
    fn from_entries(k: f64, n_max: usize, entries: DMatrix<C64>, bandwidth: Option<usize>) -> Self {
        Self { k, n_max, entries, margin: DEFAULT_MARGIN, bandwidth }
    }

    pub fn zeros(k: f64, n_max: usize) -> Self {
        let d = 2 * n_max + 1;
        Self::from_entries(k, n_max, DMatrix::zeros(d, d), Some(0))
    }

    pub fn identity(k: f64, n_max: usize) -> Self {
        Self::diagonal(k, n_max, |_| C64::new(1.0, 0.0))
    }

    /// Fourier multiplier with the given symbol.
    pub fn diagonal(k: f64, n_max: usize, symbol: impl Fn(i64) -> C64) -> Self {
        let d = 2 * n_max + 1;
        let n0 = n_max as i64;
        let entries = DMatrix::from_fn(d, d, |i, j| if i == j { symbol(i as i64 - n0) } else { ZERO });
        Self::from_entries(k, n_max, entries, Some(0))
    }

    /// Multiplication by `e^{isy}`: `(e^{isy}g)^(n) = ĝ(n - s)`, truncated.
    pub fn shift(k: f64, n_max: usize, s: i64) -> Self {
        let d = 2 * n_max + 1;
        let entries = DMatrix::from_fn(d, d, |i, j| {
            if i as i64 - j as i64 == s {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        Self::from_entries(k, n_max, entries, Some(s.unsigned_abs() as usize))
    }

    /// Dense matrix with no band assumption.
    pub fn from_dense(k: f64, n_max: usize, entries: DMatrix<C64>) -> Result<Self> {
        let d = 2 * n_max + 1;
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::ModeMismatch(format!(
                "{}x{} matrix for N = {n_max}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self::from_entries(k, n_max, entries, None))
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn with_margin(mut self, margin: usize) -> Self {
        self.margin = margin;
        self
    }

    pub fn bandwidth(&self) -> Option<usize> {
        self.bandwidth
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    /// Entry `⟨T e^{imy}, e^{iny}⟩`, i.e. row `n`, column `m`.
    pub fn get(&self, n: i64, m: i64) -> C64 {
        let n0 = self.n_max as i64;
        self.entries[((n + n0) as usize, (m + n0) as usize)]
    }

    fn check(&self, other: &Self) {
        assert!(
            self.n_max == other.n_max && self.k == other.k,
            "operator mismatch: (k={}, N={}) vs (k={}, N={})",
            self.k,
            self.n_max,
            other.k,
            other.n_max
        );
    }

    fn combine_band(a: Option<usize>, b: Option<usize>) -> Option<usize> {
        Some(a?.max(b?))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check(other);
        let bw = Self::combine_band(self.bandwidth, other.bandwidth);
        Self::from_entries(self.k, self.n_max, &self.entries + &other.entries, bw)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check(other);
        let bw = Self::combine_band(self.bandwidth, other.bandwidth);
        Self::from_entries(self.k, self.n_max, &self.entries - &other.entries, bw)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_entries(self.k, self.n_max, &self.entries * s, self.bandwidth)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Matrix product, exploiting bands when both factors carry one.
    pub fn mul(&self, other: &Self) -> Self {
        self.check(other);
        match (self.bandwidth, other.bandwidth) {
            (Some(p), Some(q)) => {
                let d = self.dim();
                let mut out = DMatrix::<C64>::zeros(d, d);
                for i in 0..d {
                    let lo = i.saturating_sub(p);
                    let hi = (i + p).min(d - 1);
                    for l in lo..=hi {
                        let a = self.entries[(i, l)];
                        if a == ZERO {
                            continue;
                        }
                        let lo2 = l.saturating_sub(q);
                        let hi2 = (l + q).min(d - 1);
                        for j in lo2..=hi2 {
                            out[(i, j)] += a * other.entries[(l, j)];
                        }
                    }
                }
                Self::from_entries(self.k, self.n_max, out, Some(p + q))
            }
            _ => Self::from_entries(self.k, self.n_max, &self.entries * &other.entries, None),
        }
    }

    /// `[self, other] = self·other - other·self`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_entries(self.k, self.n_max, self.entries.adjoint(), self.bandwidth)
    }

    pub fn apply(&self, f: &ModeFunction) -> ModeFunction {
        assert_eq!(f.n_max(), self.n_max, "truncation mismatch");
        let v = nalgebra::DVector::from_column_slice(f.coeffs());
        let out = &self.entries * v;
        ModeFunction::from_coeffs(self.k, out.as_slice().to_vec()).expect("finite product")
    }

    /// Restriction to `|n|, |m| ≤ n_new`: the Galerkin compression `P T P`.
    pub fn compress(&self, n_new: usize) -> Self {
        assert!(n_new <= self.n_max);
        let off = self.n_max - n_new;
        let d = 2 * n_new + 1;
        let entries = self.entries.view((off, off), (d, d)).into_owned();
        Self { k: self.k, n_max: n_new, entries, margin: self.margin, bandwidth: self.bandwidth }
    }

    /// Largest entry difference over the interior block `|n|, |m| ≤ N - margin`.
    pub fn interior_max_abs_diff(&self, other: &Self) -> f64 {
        self.check(other);
        let inner = self.n_max.saturating_sub(self.margin);
        let a = self.compress(inner);
        let b = other.compress(inner);
        (a.entries - b.entries).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|T_{nm}|` with `|n - m| > w`.
    pub fn off_band_max(&self, w: usize) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                if i.abs_diff(j) > w {
                    worst = worst.max(self.entries[(i, j)].norm());
                }
            }
        }
        worst
    }
}

fn require_k(k: f64) -> Result<()> {
    if k.abs() <= 1.0 {
        Err(Error::WavenumberTooSmall { k })
    } else {
        Ok(())
    }
}

/// `Δ_{k,s} = e^{-isy} Δ_k e^{isy}`, symbol `-((n+s)² + k²)`.
pub fn build_delta_shift(k: f64, s: f64, n_max: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(k, n_max, |n| {
        let ns = n as f64 + s;
        C64::new(-(ns * ns + k * k), 0.0)
    })
}

pub fn build_delta_shift_inverse(k: f64, s: f64, n_max: usize) -> Result<OperatorMatrix> {
    let n0 = n_max as i64;
    for n in -n0..=n0 {
        let ns = n as f64 + s;
        if ns * ns + k * k == 0.0 {
            return Err(Error::SingularSymbol { n, k, s });
        }
    }
    Ok(OperatorMatrix::diagonal(k, n_max, |n| {
        let ns = n as f64 + s;
        C64::new(-1.0 / (ns * ns + k * k), 0.0)
    }))
}

pub fn build_laplacian(k: f64, n_max: usize) -> OperatorMatrix {
    build_delta_shift(k, 0.0, n_max)
}

/// `(-Δ_k)^p` as the diagonal symbol power `(n²+k²)^p`.
pub fn build_neg_laplacian_power(k: f64, p: f64, n_max: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(k, n_max, |n| C64::new(neg_laplacian_symbol(n, k).powf(p), 0.0))
}

/// `1 + Δ_k^{-1}`, the star-product weight.
pub fn build_star_weight(k: f64, n_max: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(k, n_max, |n| C64::new(star_weight(n, k), 0.0))
}

pub fn build_dy(k: f64, n_max: usize) -> OperatorMatrix {
    OperatorMatrix::diagonal(k, n_max, |n| C64::new(0.0, n as f64))
}

/// Multiplication by `sin y`.
pub fn build_sin(k: f64, n_max: usize) -> OperatorMatrix {
    let up = OperatorMatrix::shift(k, n_max, 1);
    let down = OperatorMatrix::shift(k, n_max, -1);
    up.sub(&down).scale(C64::new(0.0, -0.5))
}

/// Multiplication by `cos y`.
pub fn build_cos(k: f64, n_max: usize) -> OperatorMatrix {
    let up = OperatorMatrix::shift(k, n_max, 1);
    let down = OperatorMatrix::shift(k, n_max, -1);
    up.add(&down).scale_re(0.5)
}

/// `A = sin y (1 + Δ_k^{-1})`.
pub fn build_a(k: f64, n_max: usize) -> Result<OperatorMatrix> {
    require_k(k)?;
    Ok(build_sin(k, n_max).mul(&build_star_weight(k, n_max)))
}

/// `B = cos y (1 + Δ_k^{-1})`.
pub fn build_b(k: f64, n_max: usize) -> Result<OperatorMatrix> {
    require_k(k)?;
    Ok(build_cos(k, n_max).mul(&build_star_weight(k, n_max)))
}

/// Diagonal symbol of `Λ₃ = (1 - Δ_k^{-1}) Δ_{k,-1}^{-1} Δ_{k,1}^{-1}`.
pub fn lambda3_symbol(n: i64, k: f64) -> f64 {
    let a = neg_laplacian_symbol(n, k);
    let am = neg_laplacian_symbol(n - 1, k);
    let ap = neg_laplacian_symbol(n + 1, k);
    (1.0 + 1.0 / a) / (am * ap)
}

/// `Λ₁ = [Δ_k, B]`, `Λ₂ = [Λ₁, B]`, `Λ₃ = (1 - Δ_k^{-1}) Δ_{k,-1}^{-1} Δ_{k,1}^{-1}`.
pub fn build_lambda(j: u8, k: f64, n_max: usize) -> Result<OperatorMatrix> {
    require_k(k)?;
    match j {
        1 => {
            let b = build_b(k, n_max)?;
            Ok(build_laplacian(k, n_max).commutator(&b))
        }
        2 => {
            let b = build_b(k, n_max)?;
            let l1 = build_laplacian(k, n_max).commutator(&b);
            Ok(l1.commutator(&b))
        }
        3 => Ok(OperatorMatrix::diagonal(k, n_max, |n| C64::new(lambda3_symbol(n, k), 0.0))),
        _ => Err(Error::OutOfRange { name: "lambda index", value: j as f64, range: "{1,2,3}" }),
    }
}

/// `Δ_k + ikt Λ₁ - k²t² (1 - B²)`, the operator producing `ω₁` from `ω`.
pub fn build_omega1_operator(k: f64, t: f64, n_max: usize) -> Result<OperatorMatrix> {
    if !(t >= 0.0) {
        return Err(Error::OutOfRange { name: "t", value: t, range: "[0, inf)" });
    }
    let b = build_b(k, n_max)?;
    let lap = build_laplacian(k, n_max);
    let l1 = lap.commutator(&b);
    let one_minus_b2 = OperatorMatrix::identity(k, n_max).sub(&b.mul(&b));
    Ok(lap
        .add(&l1.scale(C64::new(0.0, k * t)))
        .sub(&one_minus_b2.scale_re(k * k * t * t)))
}

/// `B f` on the truncation, without forming a matrix.
pub fn apply_b(f: &ModeFunction) -> ModeFunction {
    let k = f.k();
    let w = |n: i64| f.get(n) * star_weight(n, k);
    ModeFunction::from_fn(k, f.n_max(), |n| (w(n - 1) + w(n + 1)) * 0.5)
}

/// `A f` on the truncation, without forming a matrix.
pub fn apply_a(f: &ModeFunction) -> ModeFunction {
    let k = f.k();
    let w = |n: i64| f.get(n) * star_weight(n, k);
    ModeFunction::from_fn(k, f.n_max(), |n| (w(n - 1) - w(n + 1)) * C64::new(0.0, -0.5))
}

pub fn apply_lambda3(f: &ModeFunction) -> ModeFunction {
    let k = f.k();
    f.map_symbol(|n| C64::new(lambda3_symbol(n, k), 0.0))
}

/// `Λ₁ f = -2A∂_y f - B f`.
pub fn apply_lambda1(f: &ModeFunction) -> ModeFunction {
    let a = apply_a(&f.dy()).scale(C64::new(-2.0, 0.0));
    a.sub(&apply_b(f)).expect("same shape")
}

/// `(1 - B²) f`.
pub fn apply_one_minus_b2(f: &ModeFunction) -> ModeFunction {
    f.sub(&apply_b(&apply_b(f))).expect("same shape")
}

/// `ω₁ = Δ_k ω + ikt Λ₁ ω - k²t² (1 - B²) ω`, assembled term by term.
pub fn apply_omega1(f: &ModeFunction, t: f64) -> ModeFunction {
    let k = f.k();
    let lap = crate::spectral::laplacian_k(f);
    let l1 = apply_lambda1(f).scale(C64::new(0.0, k * t));
    let q = apply_one_minus_b2(f).scale(C64::new(k * k * t * t, 0.0));
    lap.add(&l1).and_then(|x| x.sub(&q)).expect("same shape")
}

/// Interior residuals of the four structural identities at `(k, N)` with the given margin:
/// `Λ₁ = -2A∂_y - B`, `Λ₂ = 2(1 - B²) - 4k²Λ₃`, `[A, B] = 2∂_y Δ_{k,1}^{-1}Δ_{k,-1}^{-1}(1 + Δ_k^{-1})`
/// and `A² + B² = ½(2 + Δ_{k,-1}^{-1} + Δ_{k,1}^{-1})(1 + Δ_k^{-1})`.
pub fn identity_residuals(k: f64, n_max: usize, margin: usize) -> Result<Vec<(&'static str, f64)>> {
    let a = build_a(k, n_max)?;
    let b = build_b(k, n_max)?;
    let id = OperatorMatrix::identity(k, n_max);
    let dm = build_delta_shift_inverse(k, -1.0, n_max)?;
    let dp = build_delta_shift_inverse(k, 1.0, n_max)?;
    let star = build_star_weight(k, n_max);
    let b2 = b.mul(&b);

    let l1 = build_lambda(1, k, n_max)?;
    let l1_rhs = a.mul(&build_dy(k, n_max)).scale_re(-2.0).sub(&b);
    let l2 = build_lambda(2, k, n_max)?;
    let l2_rhs = id.sub(&b2).scale_re(2.0).sub(&build_lambda(3, k, n_max)?.scale_re(4.0 * k * k));
    let comm = a.commutator(&b);
    let comm_rhs = build_dy(k, n_max).mul(&dp).mul(&dm).mul(&star).scale_re(2.0);
    let squares = b2.add(&a.mul(&a));
    let squares_rhs = id.scale_re(2.0).add(&dm).add(&dp).mul(&star).scale_re(0.5);

    Ok(vec![
        ("lambda1", l1.with_margin(margin).interior_max_abs_diff(&l1_rhs)),
        ("lambda2", l2.with_margin(margin).interior_max_abs_diff(&l2_rhs)),
        ("commutator_ab", comm.with_margin(margin).interior_max_abs_diff(&comm_rhs)),
        ("sum_of_squares", squares.with_margin(margin).interior_max_abs_diff(&squares_rhs)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::star_inner;
    use crate::testing::random_mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 48;

    #[test]
    fn delta_shift_examples() {
        let d0 = build_delta_shift(2.0, 0.0, N);
        assert_eq!(d0, build_laplacian(2.0, N));
        let d1 = build_delta_shift(2.0, 1.0, N);
        assert_eq!(d1.get(-1, -1), C64::new(-4.0, 0.0));
    }

    #[test]
    fn delta_shift_inverse_rejects_singular_symbol() {
        match build_delta_shift_inverse(0.0, 1.0, 4) {
            Err(Error::SingularSymbol { n, .. }) => assert_eq!(n, -1),
            other => panic!("unexpected {other:?}"),
        }
        let inv = build_delta_shift_inverse(2.0, 1.0, 8).unwrap();
        let prod = inv.mul(&build_delta_shift(2.0, 1.0, 8));
        assert!(prod.sub(&OperatorMatrix::identity(2.0, 8)).max_abs() < 1e-15);
    }

    #[test]
    fn delta_shift_is_conjugated_laplacian() {
        for s in [-2i64, -1, 1, 3] {
            let lhs = OperatorMatrix::shift(2.0, N, -s)
                .mul(&build_laplacian(2.0, N))
                .mul(&OperatorMatrix::shift(2.0, N, s));
            let rhs = build_delta_shift(2.0, s as f64, N);
            assert!(lhs.interior_max_abs_diff(&rhs) < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn a_b_reject_small_k() {
        assert!(matches!(build_a(1.0, 8), Err(Error::WavenumberTooSmall { .. })));
        assert!(matches!(build_b(0.5, 8), Err(Error::WavenumberTooSmall { .. })));
    }

    #[test]
    fn a_on_constant_mode_touches_only_neighbours() {
        let a = build_a(2.0, 8).unwrap();
        let out = a.apply(&ModeFunction::unit(2.0, 8, 0));
        for n in out.indices() {
            if n.abs() == 1 {
                assert!(out.get(n).norm() > 0.1);
            } else {
                assert_eq!(out.get(n), ZERO);
            }
        }
    }

    #[test]
    fn a_b_entries_match_quadrature() {
        // ⟨T e^{imy}, e^{iny}⟩ = (1 - 1/a_m) (2π)^{-1} ∫ trig(y) e^{i(m-n)y} dy, by midpoint rule.
        let k = 2.0;
        let nn = 6usize;
        let a = build_a(k, nn).unwrap();
        let b = build_b(k, nn).unwrap();
        let q = 4000;
        for n in -(nn as i64)..=nn as i64 {
            for m in -(nn as i64)..=nn as i64 {
                let (mut sa, mut sb) = (ZERO, ZERO);
                for j in 0..q {
                    let y = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / q as f64;
                    let e = C64::from_polar(1.0, (m - n) as f64 * y);
                    sa += e * y.sin();
                    sb += e * y.cos();
                }
                let w = star_weight(m, k);
                assert!((a.get(n, m) - sa * w / q as f64).norm() < 1e-12);
                assert!((b.get(n, m) - sb * w / q as f64).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn b_is_star_symmetric_and_lambda1_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = 2.0;
        let b = build_b(k, N).unwrap();
        let l1 = build_lambda(1, k, N).unwrap();
        for _ in 0..10 {
            let f = random_mode(&mut rng, k, N);
            let g = random_mode(&mut rng, k, N);
            let lhs = star_inner(&b.apply(&f), &g).unwrap();
            let rhs = star_inner(&f, &b.apply(&g)).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
            let lhs = star_inner(&l1.apply(&f), &g).unwrap();
            let rhs = star_inner(&f, &l1.apply(&g)).unwrap();
            assert!((lhs + rhs).norm() < 1e-11 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn lambda1_identity() {
        for k in [2.0, 4.0, 6.5] {
            let l1 = build_lambda(1, k, N).unwrap();
            let rhs = build_a(k, N)
                .unwrap()
                .mul(&build_dy(k, N))
                .scale_re(-2.0)
                .sub(&build_b(k, N).unwrap());
            assert!(l1.interior_max_abs_diff(&rhs) < 1e-11);
        }
    }

    #[test]
    fn lambda2_identity() {
        for k in [2.0, 4.0, 6.5] {
            let l2 = build_lambda(2, k, N).unwrap();
            let b = build_b(k, N).unwrap();
            let rhs = OperatorMatrix::identity(k, N)
                .sub(&b.mul(&b))
                .scale_re(2.0)
                .sub(&build_lambda(3, k, N).unwrap().scale_re(4.0 * k * k));
            assert!(l2.interior_max_abs_diff(&rhs) < 1e-11, "k = {k}");
        }
    }

    #[test]
    fn lambda3_symbol_matches_matrix() {
        let k = 2.0;
        let l3 = build_lambda(3, k, N).unwrap();
        let dm = build_delta_shift_inverse(k, -1.0, N).unwrap();
        let dp = build_delta_shift_inverse(k, 1.0, N).unwrap();
        let one_minus_inv = OperatorMatrix::diagonal(k, N, |n| C64::new(1.0 + 1.0 / neg_laplacian_symbol(n, k), 0.0));
        let assembled = one_minus_inv.mul(&dm).mul(&dp);
        assert!(l3.sub(&assembled).max_abs() < 1e-16);
        let expect = (1.0 + 1.0 / 5.0) / (4.0 * 8.0);
        assert!((l3.get(1, 1).re - expect).abs() < 1e-16);
    }

    #[test]
    fn commutator_ab_identity() {
        let k = 2.0;
        let a = build_a(k, N).unwrap();
        let b = build_b(k, N).unwrap();
        let lhs = a.commutator(&b);
        let rhs = build_dy(k, N)
            .mul(&build_delta_shift_inverse(k, 1.0, N).unwrap())
            .mul(&build_delta_shift_inverse(k, -1.0, N).unwrap())
            .mul(&build_star_weight(k, N))
            .scale_re(2.0);
        assert!(lhs.interior_max_abs_diff(&rhs) < 1e-11);
    }

    #[test]
    fn sum_of_squares_identity() {
        let k = 3.0;
        let a = build_a(k, N).unwrap();
        let b = build_b(k, N).unwrap();
        let lhs = b.mul(&b).add(&a.mul(&a));
        let two = OperatorMatrix::identity(k, N).scale_re(2.0);
        let rhs = two
            .add(&build_delta_shift_inverse(k, -1.0, N).unwrap())
            .add(&build_delta_shift_inverse(k, 1.0, N).unwrap())
            .mul(&build_star_weight(k, N))
            .scale_re(0.5);
        assert!(lhs.interior_max_abs_diff(&rhs) < 1e-11);
    }

    #[test]
    fn margin_doubling_does_not_change_identity_residuals() {
        let k = 2.0;
        let l2 = build_lambda(2, k, N).unwrap();
        let b = build_b(k, N).unwrap();
        let rhs = OperatorMatrix::identity(k, N)
            .sub(&b.mul(&b))
            .scale_re(2.0)
            .sub(&build_lambda(3, k, N).unwrap().scale_re(4.0 * k * k));
        let r8 = l2.clone().with_margin(8).interior_max_abs_diff(&rhs);
        let r16 = l2.with_margin(16).interior_max_abs_diff(&rhs);
        assert!(r8 < 1e-11 && r16 < 1e-11);
    }

    #[test]
    fn bandwidth_metadata_is_consistent() {
        let k = 2.0;
        let b = build_b(k, N).unwrap();
        assert_eq!(b.bandwidth(), Some(1));
        assert_eq!(b.off_band_max(1), 0.0);
        let l2 = build_lambda(2, k, N).unwrap();
        let w = l2.bandwidth().unwrap();
        assert_eq!(l2.off_band_max(w), 0.0);
        let dense = OperatorMatrix::from_dense(k, N, b.entries().clone()).unwrap();
        assert!(dense.mul(&dense).sub(&b.mul(&b)).max_abs() < 1e-15);
    }

    #[test]
    fn omega1_operator_definition() {
        let k = 2.0;
        assert_eq!(build_omega1_operator(k, 0.0, N).unwrap().entries(), build_laplacian(k, N).entries());
        let t = 5.0;
        let op = build_omega1_operator(k, t, N).unwrap();
        let b = build_b(k, N).unwrap();
        let manual = build_laplacian(k, N)
            .add(&build_lambda(1, k, N).unwrap().scale(C64::new(0.0, k * t)))
            .sub(&OperatorMatrix::identity(k, N).sub(&b.mul(&b)).scale_re(k * k * t * t));
        assert_eq!(op, manual);
        assert!(build_omega1_operator(k, -1.0, N).is_err());
    }

    #[test]
    fn omega1_operator_matches_componentwise_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 2.0;
        let t = 5.0;
        // Content well inside the truncation so that edge effects cannot enter.
        let w = random_mode(&mut rng, k, 20).resized(N);
        let via_matrix = build_omega1_operator(k, t, N).unwrap().apply(&w);
        let via_terms = apply_omega1(&w, t);
        let scale = via_terms.l2_norm();
        let diff = via_matrix.sub(&via_terms).unwrap().l2_norm();
        assert!(diff < 1e-12 * scale);
    }

    #[test]
    fn matrix_free_kernels_agree_with_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 4.0;
        let f = random_mode(&mut rng, k, N);
        let pairs = [
            (apply_a(&f), build_a(k, N).unwrap().apply(&f)),
            (apply_b(&f), build_b(k, N).unwrap().apply(&f)),
            (apply_lambda3(&f), build_lambda(3, k, N).unwrap().apply(&f)),
        ];
        for (x, y) in pairs {
            assert!(x.sub(&y).unwrap().l2_norm() < 1e-13);
        }
    }

    #[test]
    fn identity_residuals_small_and_margin_insensitive() {
        let r8 = identity_residuals(2.0, N, 8).unwrap();
        let r16 = identity_residuals(2.0, N, 16).unwrap();
        for ((name, a), (_, b)) in r8.iter().zip(&r16) {
            assert!(*a < 1e-11 && *b < 1e-11, "{name}: {a} {b}");
        }
    }
}

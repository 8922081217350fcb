//! Torus geometry and Fourier representation.
//!
//! Fields live on `T_p × T_2π` with `p = 2πκ`, `κ ∈ (0,1)`. The base
//! x-wavenumber is `α = 2π/p = 1/κ > 1`, so every nonzero x-mode has `|k| > 1`.
//!
//! Norms use the normalized measure: `‖g‖² = Σ_n |ĝ(n)|²` for a single
//! x-mode, which is also the grid mean of `|g(y_j)|²`. Sobolev norms follow
//! the half-power convention `‖g‖_{H^s_k} = ‖(-Δ_k)^{s/2} g‖`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Periodic box `T_{2πκ} × T_{2π}` with its mode counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    kappa: f64,
    nx: usize,
    ny: usize,
    dealias_fraction: f64,
}

impl TorusGrid {
    pub fn new(kappa: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::with_dealias(kappa, nx, ny, 2.0 / 3.0)
    }

    pub fn with_dealias(kappa: f64, nx: usize, ny: usize, dealias_fraction: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidGrid(format!("kappa = {kappa} must lie in (0,1)")));
        }
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even and >= 8")));
            }
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction {dealias_fraction} must lie in (0,1]"
            )));
        }
        Ok(Self { kappa, nx, ny, dealias_fraction })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// x-period `p = 2πκ`.
    pub fn period_x(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.kappa
    }

    /// Base x-wavenumber `α = 1/κ`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.kappa
    }

    /// Largest retained x-index `j` (wavenumber `jα`) after dealiasing.
    pub fn max_x_index(&self) -> usize {
        ((self.nx / 2) as f64 * self.dealias_fraction).floor() as usize
    }

    /// Largest retained y-mode `|n|` after dealiasing.
    pub fn max_y_index(&self) -> usize {
        ((self.ny / 2) as f64 * self.dealias_fraction).floor() as usize
    }
}

/// One x-wavenumber slice: `g(y) = Σ_{|n|≤N} ĝ(n) e^{iny}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    k: f64,
    coeffs: Vec<C64>,
}

impl ModeFunction {
    pub fn zeros(k: f64, n_max: usize) -> Self {
        Self { k, coeffs: vec![ZERO; 2 * n_max + 1] }
    }

    /// Coefficient vector indexed by `n + N`; its length must be odd.
    pub fn from_coeffs(k: f64, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::ModeMismatch(format!(
                "coefficient vector of even length {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::ModeMismatch("non-finite coefficient".into()));
        }
        Ok(Self { k, coeffs })
    }

    pub fn from_fn(k: f64, n_max: usize, f: impl FnMut(i64) -> C64) -> Self {
        let n = n_max as i64;
        Self { k, coeffs: (-n..=n).map(f).collect() }
    }

    /// Single Fourier mode `e^{i n y}`.
    pub fn unit(k: f64, n_max: usize, n: i64) -> Self {
        Self::from_fn(k, n_max, |m| if m == n { C64::new(1.0, 0.0) } else { ZERO })
    }

    /// Trigonometric interpolant of grid samples `values[j] = g(2πj/M)`.
    pub fn from_grid(k: f64, values: &[C64], n_max: usize) -> Self {
        Self { k, coeffs: fft::analyze(values, n_max) }
    }

    pub fn from_real_fn(k: f64, n_max: usize, f: impl Fn(f64) -> f64) -> Self {
        let m = fft::pow2_at_least(4 * (2 * n_max + 1));
        let vals: Vec<C64> = fft::grid_points(m).into_iter().map(|y| C64::new(f(y), 0.0)).collect();
        Self::from_grid(k, &vals, n_max)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// `ĝ(n)`, zero outside the truncation.
    pub fn get(&self, n: i64) -> C64 {
        let idx = n + self.n_max() as i64;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            ZERO
        } else {
            self.coeffs[idx as usize]
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let n = self.n_max() as i64;
        -n..=n
    }

    pub fn to_grid(&self, m: usize) -> Vec<C64> {
        fft::synthesize(&self.coeffs, m)
    }

    pub fn eval(&self, y: f64) -> C64 {
        self.indices()
            .zip(&self.coeffs)
            .map(|(n, c)| c * C64::from_polar(1.0, n as f64 * y))
            .sum()
    }

    /// `∂_y g`.
    pub fn dy(&self) -> Self {
        self.map_symbol(|n| C64::new(0.0, n as f64))
    }

    /// Multiply each coefficient by a Fourier symbol.
    pub fn map_symbol(&self, symbol: impl Fn(i64) -> C64) -> Self {
        let coeffs = self.indices().zip(&self.coeffs).map(|(n, c)| c * symbol(n)).collect();
        Self { k: self.k, coeffs }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { k: self.k, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sup_on_grid(&self, m: usize) -> f64 {
        self.to_grid(m).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Truncate or zero-pad to a new `N`.
    pub fn resized(&self, n_max: usize) -> Self {
        Self::from_fn(self.k, n_max, |n| self.get(n))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.k != other.k || self.coeffs.len() != other.coeffs.len() {
            return Err(Error::ModeMismatch(format!(
                "(k={}, N={}) vs (k={}, N={})",
                self.k,
                self.n_max(),
                other.k,
                other.n_max()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { k: self.k, coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { k: self.k, coeffs })
    }
}

/// `n² + k²`, the symbol of `-Δ_k`.
#[inline]
pub fn neg_laplacian_symbol(n: i64, k: f64) -> f64 {
    (n * n) as f64 + k * k
}

/// `Δ_k g` with `Δ_k = ∂_y² - k²`.
pub fn laplacian_k(g: &ModeFunction) -> ModeFunction {
    let k = g.k;
    g.map_symbol(|n| C64::new(-neg_laplacian_symbol(n, k), 0.0))
}

/// `ψ = Δ_k^{-1} g`, i.e. `ψ̂(n) = -ĝ(n)/(n²+k²)`.
///
/// At `k = 0` the `n = 0` direction is excluded and must carry zero data.
pub fn laplacian_inverse_k(g: &ModeFunction) -> Result<ModeFunction> {
    let k = g.k;
    if k == 0.0 && g.get(0).norm() > 0.0 {
        return Err(Error::NonInvertible { k });
    }
    Ok(g.map_symbol(|n| {
        let a = neg_laplacian_symbol(n, k);
        if a == 0.0 {
            ZERO
        } else {
            C64::new(-1.0 / a, 0.0)
        }
    }))
}

/// `(Σ_n (n²+k²)^s |ĝ(n)|²)^{1/2}`.
pub fn sobolev_norm(g: &ModeFunction, s: f64) -> f64 {
    let k = g.k;
    g.indices()
        .zip(g.coeffs())
        .map(|(n, c)| {
            let a = neg_laplacian_symbol(n, k);
            if a == 0.0 {
                0.0
            } else {
                a.powf(s) * c.norm_sqr()
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Weight `1 - 1/(n²+k²)` of the star inner product.
#[inline]
pub fn star_weight(n: i64, k: f64) -> f64 {
    1.0 - 1.0 / neg_laplacian_symbol(n, k)
}

/// `⟨f, g⟩_* = ⟨f, (1 + Δ_k^{-1}) g⟩`.
pub fn star_inner(f: &ModeFunction, g: &ModeFunction) -> Result<C64> {
    f.check_compatible(g)?;
    let k = f.k;
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    Ok(f.indices()
        .zip(f.coeffs().iter().zip(g.coeffs()))
        .map(|(n, (a, b))| a * b.conj() * star_weight(n, k))
        .sum())
}

pub fn star_norm(f: &ModeFunction) -> Result<f64> {
    Ok(star_inner(f, f)?.re.max(0.0).sqrt())
}

/// Real scalar field on the torus stored as its x-Fourier slices `k = jα`, `|j| ≤ J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: TorusGrid,
    modes: Vec<ModeFunction>,
    mean_free: bool,
}

impl Field2D {
    pub fn zeros(grid: TorusGrid, j_max: usize, n_max: usize) -> Self {
        let alpha = grid.alpha();
        let modes = (-(j_max as i64)..=j_max as i64)
            .map(|j| ModeFunction::zeros(j as f64 * alpha, n_max))
            .collect();
        Self { grid, modes, mean_free: false }
    }

    /// Default truncation: the dealiased mode ranges of the grid.
    pub fn zeros_dealiased(grid: TorusGrid) -> Self {
        Self::zeros(grid, grid.max_x_index(), grid.max_y_index())
    }

    /// Sample a real function on the `nx × ny` grid and keep the dealiased modes.
    ///
    /// When `mean_free` is set the torus mean is removed.
    pub fn from_physical(grid: TorusGrid, mean_free: bool, f: impl Fn(f64, f64) -> f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (j_max, n_max) = (grid.max_x_index(), grid.max_y_index());
        let p = grid.period_x();
        // x-transform each row, then y-transform each retained column.
        let fx = fft::forward_plan(nx);
        let mut cols = vec![vec![ZERO; ny]; 2 * j_max + 1];
        for iy in 0..ny {
            let y = 2.0 * std::f64::consts::PI * iy as f64 / ny as f64;
            let mut row: Vec<C64> =
                (0..nx).map(|ix| C64::new(f(p * ix as f64 / nx as f64, y), 0.0)).collect();
            fx.process(&mut row);
            for (c, j) in (-(j_max as i64)..=j_max as i64).enumerate() {
                cols[c][iy] = row[j.rem_euclid(nx as i64) as usize] / nx as f64;
            }
        }
        let alpha = grid.alpha();
        let modes = (-(j_max as i64)..=j_max as i64)
            .zip(cols)
            .map(|(j, col)| ModeFunction::from_grid(j as f64 * alpha, &col, n_max))
            .collect();
        let mut field = Self { grid, modes, mean_free: false };
        if mean_free {
            field.remove_mean();
        }
        field.enforce_reality();
        field
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn j_max(&self) -> usize {
        self.modes.len() / 2
    }

    pub fn n_max(&self) -> usize {
        self.modes[0].n_max()
    }

    pub fn is_mean_free(&self) -> bool {
        self.mean_free
    }

    pub fn mode(&self, j: i64) -> &ModeFunction {
        &self.modes[(j + self.j_max() as i64) as usize]
    }

    pub fn mode_mut(&mut self, j: i64) -> &mut ModeFunction {
        let jm = self.j_max() as i64;
        &mut self.modes[(j + jm) as usize]
    }

    pub fn modes(&self) -> &[ModeFunction] {
        &self.modes
    }

    /// Set slice `j` and its mirror `-j` (conjugated) together.
    pub fn set_mode_pair(&mut self, j: i64, mode: &ModeFunction) {
        let mirror = ModeFunction::from_fn(-mode.k(), mode.n_max(), |n| mode.get(-n).conj());
        *self.mode_mut(j) = mode.clone();
        if j != 0 {
            *self.mode_mut(-j) = mirror;
        }
    }

    pub fn mean(&self) -> C64 {
        self.mode(0).get(0)
    }

    pub fn remove_mean(&mut self) {
        let n0 = self.n_max();
        self.mode_mut(0).coeffs_mut()[n0] = ZERO;
        self.mean_free = true;
    }

    /// Largest violation of `ĝ_{-k}(-n) = conj(ĝ_k(n))`.
    pub fn reality_defect(&self) -> f64 {
        let jm = self.j_max() as i64;
        let mut worst = 0.0f64;
        for j in -jm..=jm {
            let a = self.mode(j);
            let b = self.mode(-j);
            for n in a.indices() {
                worst = worst.max((a.get(n) - b.get(-n).conj()).norm());
            }
        }
        worst
    }

    /// Project onto conjugate-symmetric data by averaging mirror pairs.
    pub fn enforce_reality(&mut self) {
        let jm = self.j_max() as i64;
        for j in 0..=jm {
            let a = self.mode(j).clone();
            let b = self.mode(-j).clone();
            let sym = ModeFunction::from_fn(a.k(), a.n_max(), |n| (a.get(n) + b.get(-n).conj()) * 0.5);
            self.set_mode_pair(j, &sym);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.modes.iter().map(|m| m.l2_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Full torus `H^s` norm `(Σ (k²+n²)^s |f̂|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.modes.iter().map(|m| sobolev_norm(m, s).powi(2)).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| (m.eval(y) * C64::from_polar(1.0, m.k() * x)).re)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let modes = self.modes.iter().map(|m| m.scale(C64::new(s, 0.0))).collect();
        Self { grid: self.grid, modes, mean_free: self.mean_free }
    }
}

/// `P₀ f`: the x-average, i.e. the `k = 0` slice.
pub fn project_zero(f: &Field2D) -> ModeFunction {
    f.mode(0).clone()
}

/// `P_≠ f = f - P₀ f`.
pub fn project_nonzero(f: &Field2D) -> Field2D {
    let mut out = f.clone();
    let n = out.n_max();
    *out.mode_mut(0) = ModeFunction::zeros(0.0, n);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_mode;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(0.5, 64, 64).is_ok());
        assert!(TorusGrid::new(1.0, 64, 64).is_err());
        assert!(TorusGrid::new(0.5, 6, 64).is_err());
        assert!(TorusGrid::new(0.5, 64, 33).is_err());
        assert!(TorusGrid::with_dealias(0.5, 64, 64, 0.0).is_err());
        let g = TorusGrid::new(0.5, 64, 64).unwrap();
        assert_eq!(g.alpha(), 2.0);
        assert!((g.period_x() - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(g.max_x_index(), 21);
    }

    #[test]
    fn inverse_laplacian_of_constant_mode() {
        let g = ModeFunction::unit(2.0, 4, 0);
        let psi = laplacian_inverse_k(&g).unwrap();
        assert_eq!(psi.get(0), C64::new(-0.25, 0.0));
        for n in psi.indices().filter(|&n| n != 0) {
            assert_eq!(psi.get(n), ZERO);
        }
    }

    #[test]
    fn inverse_laplacian_rejects_mean_at_k0() {
        let g = ModeFunction::unit(0.0, 4, 0);
        assert!(matches!(laplacian_inverse_k(&g), Err(Error::NonInvertible { .. })));
        let h = ModeFunction::unit(0.0, 4, 2);
        let psi = laplacian_inverse_k(&h).unwrap();
        assert!((psi.get(2) + C64::new(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inverse_laplacian_roundtrip_and_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_mode(&mut rng, 3.0, 32);
        let psi = laplacian_inverse_k(&g).unwrap();
        let back = laplacian_k(&psi);
        for (a, b) in back.coeffs().iter().zip(g.coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
        // Dense oracle: assemble Δ_k as (D_y)² - k² I and solve.
        let dim = 65;
        let dy = DMatrix::<C64>::from_fn(dim, dim, |i, j| {
            if i == j {
                C64::new(0.0, i as f64 - 32.0)
            } else {
                ZERO
            }
        });
        let lap = &dy * &dy - DMatrix::<C64>::identity(dim, dim) * C64::new(9.0, 0.0);
        let rhs = nalgebra::DVector::from_vec(g.coeffs().to_vec());
        let sol = lap.lu().solve(&rhs).unwrap();
        for (a, b) in sol.iter().zip(psi.coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn sobolev_examples() {
        let g = ModeFunction::unit(2.0, 4, 1);
        assert!((sobolev_norm(&g, 0.0) - 1.0).abs() < 1e-15);
        assert!((sobolev_norm(&g, 1.0) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sobolev_three_matches_repeated_differentiation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_mode(&mut rng, 2.0, 24);
        // ‖(∂_y,k)³g‖² = Σ_{j=0..3} C(3,j) k^{2(3-j)} ‖∂_y^j g‖².
        let mut d = g.clone();
        let mut parts = vec![d.l2_norm().powi(2)];
        for _ in 0..3 {
            d = d.dy();
            parts.push(d.l2_norm().powi(2));
        }
        let k2: f64 = 4.0;
        let binom = [1.0, 3.0, 3.0, 1.0];
        let total: f64 = (0..4).map(|j| binom[j] * k2.powi(3 - j as i32) * parts[j]).sum();
        let s3 = sobolev_norm(&g, 3.0);
        assert!((s3 - total.sqrt()).abs() / s3 < 1e-12);
    }

    #[test]
    fn h1_norm_from_differentiation_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_mode(&mut rng, 2.5, 40);
        let lhs = sobolev_norm(&g, 1.0).powi(2);
        let rhs = g.dy().l2_norm().powi(2) + 6.25 * g.l2_norm().powi(2);
        assert!((lhs - rhs).abs() / lhs < 1e-12);
    }

    #[test]
    fn parseval_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n_max in [8usize, 100, 511] {
            let g = random_mode(&mut rng, 2.0, n_max);
            let m = fft::pow2_at_least(2 * n_max + 2);
            let vals = g.to_grid(m);
            let grid_norm = (vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / m as f64).sqrt();
            assert!((grid_norm - g.l2_norm()).abs() / g.l2_norm() < 1e-12);
        }
    }

    #[test]
    fn star_inner_examples() {
        let f = ModeFunction::unit(2.0, 3, 0);
        let v = star_inner(&f, &f).unwrap();
        assert!((v.re - 0.75).abs() < 1e-15 && v.im == 0.0);
        let low = ModeFunction::unit(1.0, 3, 0);
        assert!(matches!(star_inner(&low, &low), Err(Error::WavenumberTooSmall { .. })));
    }

    #[test]
    fn star_norm_equivalence_and_hermitian_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kappa: f64 = 0.5;
        for _ in 0..20 {
            let f = random_mode(&mut rng, 2.0, 16);
            let g = random_mode(&mut rng, 2.0, 16);
            let lower = (1.0 - kappa * kappa) * f.l2_norm().powi(2);
            assert!(star_norm(&f).unwrap().powi(2) >= lower - 1e-14);
            let a = star_inner(&f, &g).unwrap();
            let b = star_inner(&g, &f).unwrap();
            assert!((a - b.conj()).norm() < 1e-13);
        }
    }

    #[test]
    fn projections() {
        let grid = TorusGrid::new(0.5, 32, 32).unwrap();
        let alpha = grid.alpha();
        let shear = Field2D::from_physical(grid, false, |_, y| y.sin());
        assert!(project_nonzero(&shear).l2_norm() < 1e-14);
        let wave = Field2D::from_physical(grid, false, |x, y| (alpha * x).cos() * y.sin());
        assert!(project_zero(&wave).l2_norm() < 1e-14);
        let f = Field2D::from_physical(grid, true, |x, y| {
            (alpha * x).cos() * (2.0 * y).sin() + y.cos() + 0.3 * (2.0 * alpha * x + y).sin()
        });
        let total = f.l2_norm().powi(2);
        let split = project_zero(&f).l2_norm().powi(2) + project_nonzero(&f).l2_norm().powi(2);
        assert!((total - split).abs() < 1e-13);
        assert!(f.reality_defect() < 1e-15);
        assert_eq!(f.mean(), ZERO);
    }

    #[test]
    fn field_eval_reconstructs_function() {
        let grid = TorusGrid::new(0.5, 32, 32).unwrap();
        let f = Field2D::from_physical(grid, false, |x, y| (2.0 * x).cos() * y.cos() + 0.5 * (3.0 * y).sin());
        let v = f.eval(0.3, 1.1);
        let exact = (0.6f64).cos() * 1.1f64.cos() + 0.5 * 3.3f64.sin();
        assert!((v - exact).abs() < 1e-13);
    }
}

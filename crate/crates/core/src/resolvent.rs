//! Rayleigh and linearized Navier–Stokes resolvents at one x-mode, and their
//! best constants as largest singular values of weighted solution maps.
//!
//! Weights use `D = n² + k²`, so `‖(∂_y,k)g‖ = ‖D^{1/2}g‖` and
//! `‖(∂_y,k)Δ_k^{-1}g‖ = ‖D^{-1/2}g‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, BandLu, BandMatrix};
use crate::par;
use crate::shear::{theta, ShearProfile};
use crate::spectral::{neg_laplacian_symbol, ModeFunction, C64, ZERO};

/// Systems whose condition estimate exceeds this are refused.
pub const CONDITION_LIMIT: f64 = 1e14;
const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventKind {
    /// `V(f + Δ_k^{-1}f) - (λ + iε)f = F`.
    Rayleigh,
    /// `-νΔ_k f + ikV(1 + Δ_k^{-1})f - ikλf = F`.
    NavierStokes,
}

/// Best constants at one parameter point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolventProbe {
    pub kind: ResolventKind,
    pub k: f64,
    pub lambda: f64,
    /// `ε` for Rayleigh, `ν` for Navier–Stokes.
    pub eps_or_nu: f64,
    pub theta: f64,
    /// Rayleigh: `sup θ‖(∂,k)Δ^{-1}f‖ / ‖(∂,k)F‖`.
    /// Navier–Stokes: the same for `(|k|θ‖(∂,k)Δ^{-1}f‖, |k|^{3/2}‖|V'|^{1/2}(∂,k)Δ^{-1}f‖)`
    /// combined in ℓ².
    pub ratio1: f64,
    /// Rayleigh: `sup |ε|k²‖(∂,k)Δ^{-1}f‖ / ‖(∂,k)F‖`.
    /// Navier–Stokes: `((ν|k|θ)^{1/2}‖(∂,k)Δ^{-1}f‖, ν^{1/2}|k|‖|V'|^{1/2}(∂,k)Δ^{-1}f‖)`
    /// in ℓ² against `‖(∂,k)Δ^{-1}F‖`.
    pub ratio2: f64,
    pub condition: f64,
    pub lanczos_iterations: usize,
    pub converged: bool,
}

fn check_k(k: f64) -> Result<()> {
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    Ok(())
}

fn symbols(k: f64, n_max: usize) -> Vec<f64> {
    let n = n_max as i64;
    (-n..=n).map(|m| neg_laplacian_symbol(m, k)).collect()
}

/// `V(1 + Δ_k^{-1})` plus `diag` on `|n| ≤ N`, times `scale`.
fn shear_band(v: &ShearProfile, k: f64, n_max: usize, scale: C64, diag: impl Fn(usize) -> C64) -> BandMatrix {
    let p = v.degree();
    let dim = 2 * n_max + 1;
    let d = symbols(k, n_max);
    let mut a = BandMatrix::zeros(dim, p, p);
    for i in 0..dim {
        for j in i.saturating_sub(p)..=(i + p).min(dim - 1) {
            let c = v.get(i as i64 - j as i64) * (1.0 - 1.0 / d[j]);
            a.set(i, j, c * scale);
        }
        a.set(i, i, a.get(i, i) + diag(i));
    }
    a
}

/// Matrix of `V(1 + Δ_k^{-1}) - (λ + iε)`.
pub fn rayleigh_matrix(v: &ShearProfile, k: f64, lambda: f64, eps: f64, n_max: usize) -> BandMatrix {
    shear_band(v, k, n_max, C64::new(1.0, 0.0), |_| -C64::new(lambda, eps))
}

/// Matrix of `-νΔ_k + ik(V(1 + Δ_k^{-1}) - λ)`.
pub fn ns_matrix(v: &ShearProfile, k: f64, lambda: f64, nu: f64, n_max: usize) -> BandMatrix {
    let d = symbols(k, n_max);
    shear_band(v, k, n_max, C64::new(0.0, k), |i| C64::new(nu * d[i], -k * lambda))
}

/// A factorized resolvent with its condition estimate.
#[derive(Debug, Clone)]
pub struct Factorized {
    pub matrix: BandMatrix,
    pub lu: BandLu,
    pub condition: f64,
}

impl Factorized {
    pub fn new(matrix: BandMatrix) -> Result<Self> {
        let norm = matrix.norm_one();
        let lu = matrix.clone().lu().ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        let condition = norm * lu.inverse_norm_one_estimate();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(Self { matrix, lu, condition })
    }

    fn residual(&self, f: &[C64], rhs: &[C64]) -> f64 {
        let r = self.matrix.matvec(f);
        linalg::norm(&r.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>())
    }
}

/// One Rayleigh solve with its consistency checks.
#[derive(Debug, Clone)]
pub struct RayleighSolve {
    pub f: ModeFunction,
    /// `‖Rf - F‖ / ‖F‖`.
    pub residual: f64,
    /// Relative defect of `Im⟨F,w⟩ = -ε(‖w‖² + ‖(∂,k̃)Δ_{k̃}^{-1}w‖²)`, `w = f + Δ_k^{-1}f`.
    pub energy_defect: f64,
    pub condition: f64,
}

/// `Im⟨F,w⟩ + ε(‖w‖² + ‖(∂,k̃)φ‖²)` relative to its terms, with `φ = Δ_k^{-1}f`,
/// `k̃² = k² - 1`.
pub fn rayleigh_energy_defect(eps: f64, rhs: &ModeFunction, f: &ModeFunction) -> f64 {
    let k = f.k();
    let mut w2 = 0.0;
    let mut grad = 0.0;
    let mut fw = ZERO;
    for (n, (fc, rc)) in f.indices().zip(f.coeffs().iter().zip(rhs.coeffs())) {
        let d = neg_laplacian_symbol(n, k);
        let phi = -fc / d;
        let w = fc + phi;
        w2 += w.norm_sqr();
        grad += (d - 1.0) * phi.norm_sqr();
        fw += rc * w.conj();
    }
    let lhs = fw.im;
    let rhs_val = -eps * (w2 + grad);
    (lhs - rhs_val).abs() / rhs_val.abs().max(f64::MIN_POSITIVE)
}

/// Solves `V(f + Δ_k^{-1}f) - (λ + iε)f = F` on the truncation of `F`.
pub fn solve_rayleigh(v: &ShearProfile, lambda: f64, eps: f64, rhs: &ModeFunction) -> Result<RayleighSolve> {
    let k = rhs.k();
    check_k(k)?;
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::OutOfRange { name: "eps", value: eps, range: "R \\ {0}" });
    }
    let fac = Factorized::new(rayleigh_matrix(v, k, lambda, eps, rhs.n_max()))?;
    let sol = fac.lu.solve(rhs.coeffs());
    let residual = fac.residual(&sol, rhs.coeffs()) / rhs.l2_norm().max(f64::MIN_POSITIVE);
    let f = ModeFunction::from_coeffs(k, sol)?;
    let energy_defect = if rhs.l2_norm() == 0.0 { 0.0 } else { rayleigh_energy_defect(eps, rhs, &f) };
    Ok(RayleighSolve { f, residual, energy_defect, condition: fac.condition })
}

/// Solves `-νΔ_k f + ikV(1 + Δ_k^{-1})f - ikλf = F`.
///
/// Accepts any `ν > 0`; the sweeps use `ν ∈ (0, 1]`.
pub fn solve_ns_resolvent(v: &ShearProfile, nu: f64, lambda: f64, rhs: &ModeFunction) -> Result<ModeFunction> {
    let k = rhs.k();
    check_k(k)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::OutOfRange { name: "nu", value: nu, range: "(0, inf)" });
    }
    let fac = Factorized::new(ns_matrix(v, k, lambda, nu, rhs.n_max()))?;
    ModeFunction::from_coeffs(k, fac.lu.solve(rhs.coeffs()))
}

/// Largest singular value of `D^{-1/2} R^{-1} D^{-1/2}` for the Rayleigh matrix.
fn rayleigh_gain(fac: &Factorized, d: &[f64]) -> (f64, usize, bool) {
    let dim = d.len();
    let top = linalg::lanczos_top(dim, LANCZOS_MAX_ITER, LANCZOS_TOL, |g| {
        let rhs: Vec<C64> = g.iter().zip(d).map(|(x, di)| x / di.sqrt()).collect();
        let f = fac.lu.solve(&rhs);
        let back: Vec<C64> = f.iter().zip(d).map(|(x, di)| x / *di).collect();
        let h = fac.lu.solve_adjoint(&back);
        h.iter().zip(d).map(|(x, di)| x / di.sqrt()).collect()
    });
    (top.value.max(0.0).sqrt(), top.iterations, top.converged)
}

pub fn rayleigh_probe(v: &ShearProfile, k: f64, lambda: f64, eps: f64, n_max: usize) -> Result<ResolventProbe> {
    check_k(k)?;
    let fac = Factorized::new(rayleigh_matrix(v, k, lambda, eps, n_max))?;
    let d = symbols(k, n_max);
    let (sigma, iterations, converged) = rayleigh_gain(&fac, &d);
    let th = theta(k, lambda, v);
    Ok(ResolventProbe {
        kind: ResolventKind::Rayleigh,
        k,
        lambda,
        eps_or_nu: eps,
        theta: th,
        ratio1: th * sigma,
        ratio2: eps.abs() * k * k * sigma,
        condition: fac.condition,
        lanczos_iterations: iterations,
        converged,
    })
}

/// Gram operator of the stacked NS map `g ↦ (c₁D^{-1/2}f, c₂|V'|^{1/2}(∂,k)Δ^{-1}f)`,
/// `f = L^{-1}D^{p}g`.
struct NsGram<'a> {
    fac: &'a Factorized,
    d: Vec<f64>,
    k: f64,
    weight: Vec<f64>,
    m: usize,
    p: f64,
    c1: f64,
    c2: f64,
}

impl NsGram<'_> {
    fn apply(&self, g: &[C64]) -> Vec<C64> {
        let n_max = (self.d.len() / 2) as i64;
        let rhs: Vec<C64> = g.iter().zip(&self.d).map(|(x, di)| x * di.powf(self.p)).collect();
        let f = self.fac.lu.solve(&rhs);
        let phi: Vec<C64> = f.iter().zip(&self.d).map(|(x, di)| x / *di).collect();
        let dphi: Vec<C64> = phi.iter().zip(-n_max..=n_max).map(|(x, n)| x * C64::new(0.0, n as f64)).collect();
        let kphi: Vec<C64> = phi.iter().map(|x| x * self.k).collect();
        let weigh = |c: &[C64]| -> Vec<C64> {
            let mut u = fft::synthesize(c, self.m);
            u.iter_mut().zip(&self.weight).for_each(|(z, w)| *z *= *w);
            fft::synthesize_adjoint(&u, n_max as usize)
        };
        let b1 = weigh(&dphi);
        let b2 = weigh(&kphi);
        let tt: Vec<C64> = (0..self.d.len())
            .map(|i| {
                let n = i as f64 - n_max as f64;
                let b = b1[i] * C64::new(0.0, -n) + b2[i] * self.k;
                (f[i] * self.c1 * self.c1 + b * self.c2 * self.c2) / self.d[i]
            })
            .collect();
        let h = self.fac.lu.solve_adjoint(&tt);
        h.iter().zip(&self.d).map(|(x, di)| x * di.powf(self.p)).collect()
    }
}

pub fn ns_probe(v: &ShearProfile, k: f64, lambda: f64, nu: f64, n_max: usize) -> Result<ResolventProbe> {
    check_k(k)?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::OutOfRange { name: "nu", value: nu, range: "(0, 1]" });
    }
    let fac = Factorized::new(ns_matrix(v, k, lambda, nu, n_max))?;
    let d = symbols(k, n_max);
    let m = fft::pow2_at_least(4 * (2 * n_max + 1));
    let weight: Vec<f64> = v.abs_derivative_on_grid(m).into_iter().map(|w| w / m as f64).collect();
    let th = theta(k, lambda, v);
    let ka = k.abs();
    let gain = |p: f64, c1: f64, c2: f64| {
        let gram = NsGram { fac: &fac, d: d.clone(), k, weight: weight.clone(), m, p, c1, c2 };
        linalg::lanczos_top(d.len(), LANCZOS_MAX_ITER, LANCZOS_TOL, |g| gram.apply(g))
    };
    let t1 = gain(-0.5, ka * th, ka.powf(1.5));
    let t2 = gain(0.5, (nu * ka * th).sqrt(), nu.sqrt() * ka);
    Ok(ResolventProbe {
        kind: ResolventKind::NavierStokes,
        k,
        lambda,
        eps_or_nu: nu,
        theta: th,
        ratio1: t1.value.max(0.0).sqrt(),
        ratio2: t2.value.max(0.0).sqrt(),
        condition: fac.condition,
        lanczos_iterations: t1.iterations.max(t2.iterations),
        converged: t1.converged && t2.converged,
    })
}

/// Wavenumbers of `αℤ` in `(1, k_max]`.
pub fn default_k_set(alpha: f64, k_max: f64) -> Vec<f64> {
    (1..).map(|j| j as f64 * alpha).take_while(|k| *k <= k_max + 1e-12).filter(|k| *k > 1.0).collect()
}

/// `count` equally spaced values on `[lo, hi]`.
pub fn lambda_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

fn check_sweep(v: &ShearProfile, lambdas: &[f64], params: &[f64]) -> Result<()> {
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo > v.min() - 0.5 + 1e-12 || hi < v.max() + 0.5 - 1e-12 {
        return Err(Error::InvalidWindow(format!(
            "λ grid [{lo}, {hi}] must cover [m - 1/2, M + 1/2] = [{}, {}]",
            v.min() - 0.5,
            v.max() + 0.5
        )));
    }
    if params.windows(2).any(|w| !(w[1].abs() < w[0].abs())) {
        return Err(Error::InvalidWindow("parameter ladder must decrease in magnitude".into()));
    }
    Ok(())
}

fn sweep(
    k_set: &[f64],
    lambdas: &[f64],
    params: &[f64],
    probe: impl Fn(f64, f64, f64) -> Result<ResolventProbe> + Sync,
) -> Result<Vec<ResolventProbe>> {
    let points: Vec<(f64, f64, f64)> = params
        .iter()
        .flat_map(|&p| k_set.iter().flat_map(move |&k| lambdas.iter().map(move |&l| (k, l, p))))
        .collect();
    par::map(&points, |&(k, l, p)| probe(k, l, p)).into_iter().collect()
}

/// Best Rayleigh constants over `k_set × λ_grid × ε_list`.
pub fn rayleigh_constant_sweep(
    v: &ShearProfile,
    k_set: &[f64],
    lambdas: &[f64],
    eps_list: &[f64],
    n_max: usize,
) -> Result<Vec<ResolventProbe>> {
    check_sweep(v, lambdas, eps_list)?;
    sweep(k_set, lambdas, eps_list, |k, l, e| rayleigh_probe(v, k, l, e, n_max))
}

/// Best Navier–Stokes constants over `k_set × λ_grid × ν_list`.
pub fn ns_constant_sweep(
    v: &ShearProfile,
    k_set: &[f64],
    lambdas: &[f64],
    nu_list: &[f64],
    n_max: usize,
) -> Result<Vec<ResolventProbe>> {
    check_sweep(v, lambdas, nu_list)?;
    sweep(k_set, lambdas, nu_list, |k, l, nu| ns_probe(v, k, l, nu, n_max))
}

/// Suprema over one `ε` or `ν` slice.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceSummary {
    pub eps_or_nu: f64,
    pub sup_ratio1: f64,
    pub sup_ratio2: f64,
    /// `(k, λ)` attaining `sup_ratio1`.
    pub argsup: (f64, f64),
    pub max_condition: f64,
    pub all_converged: bool,
}

pub fn summarize(probes: &[ResolventProbe]) -> Vec<SliceSummary> {
    let mut params: Vec<f64> = Vec::new();
    for p in probes {
        if !params.contains(&p.eps_or_nu) {
            params.push(p.eps_or_nu);
        }
    }
    params
        .into_iter()
        .map(|e| {
            let slice: Vec<&ResolventProbe> = probes.iter().filter(|p| p.eps_or_nu == e).collect();
            let best = slice.iter().max_by(|a, b| a.ratio1.total_cmp(&b.ratio1)).expect("non-empty slice");
            SliceSummary {
                eps_or_nu: e,
                sup_ratio1: best.ratio1,
                sup_ratio2: slice.iter().map(|p| p.ratio2).fold(0.0, f64::max),
                argsup: (best.k, best.lambda),
                max_condition: slice.iter().map(|p| p.condition).fold(0.0, f64::max),
                all_converged: slice.iter().all(|p| p.converged),
            }
        })
        .collect()
}

/// `max/min` of the slice suprema of `ratio1`.
pub fn ladder_spread(summary: &[SliceSummary]) -> f64 {
    let hi = summary.iter().map(|s| s.sup_ratio1).fold(0.0, f64::max);
    let lo = summary.iter().map(|s| s.sup_ratio1).fold(f64::INFINITY, f64::min);
    hi / lo
}

//! Quasilinear approximation around a slowly decaying shear `e^{-νt}V(y)`.
//!
//! The shear is first brought to exact cosine form, `V = a cos θ(y) + d`.
//! Each x-mode of the perturbation is then transported through `θ`, evolved by
//! the linearized Euler flow around `cos y` in the rescaled time `a t_*`, and
//! pulled back with a phase and the viscous damping factor
//! `e^{-νk²γ₁(t)|V'|²}`. The result is the approximate solution `ω_L`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::fit::{fit_power_law, RateFit};
use crate::linear_euler::evolve_linearized_euler;
use crate::par;
use crate::shear::ShearProfile;
use crate::spectral::{laplacian_inverse_k, neg_laplacian_symbol, Field2D, ModeFunction, TorusGrid, C64, ZERO};

/// Default number of samples representing `θ`.
pub const MORSE_SAMPLES: usize = 256;
/// Residual bound accepted by [`build_approx_solution`].
pub const MORSE_TOLERANCE: f64 = 1e-8;

/// Japanese bracket `(1 + a²)^{1/2}`.
pub fn bracket(a: f64) -> f64 {
    a.hypot(1.0)
}

/// `(T₀, T₁, T₂) = (ν^{-1/6}, ν^{-4/9}, ν^{-1})`.
pub fn timescales(nu: f64) -> (f64, f64, f64) {
    (nu.powf(-1.0 / 6.0), nu.powf(-4.0 / 9.0), 1.0 / nu)
}

/// `t_* = (1 - e^{-νt})/ν`.
pub fn t_star(t: f64, nu: f64) -> f64 {
    -(-nu * t).exp_m1() / nu
}

/// Below this `νt` the closed form of `γ₁` is replaced by its power series.
const GAMMA1_SERIES_SWITCH: f64 = 0.5;

/// `γ₁(t) = ∫₀ᵗ t_*² = ν^{-2}[t + (1-e^{-2νt})/(2ν) - 2(1-e^{-νt})/ν]`.
pub fn gamma1(t: f64, nu: f64) -> f64 {
    let x = nu * t;
    if x < GAMMA1_SERIES_SWITCH {
        // γ₁ = t³ Σ_{m≥3} (-1)^{m-1}(2^{m-1}-2) x^{m-3}/m!
        let mut sum = 0.0f64;
        let mut xp = 1.0;
        let mut fact = 6.0;
        let mut pow2 = 4.0;
        for m in 3..40 {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            let term = sign * (pow2 - 2.0) * xp / fact;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            xp *= x;
            fact *= (m + 1) as f64;
            pow2 *= 2.0;
        }
        t * t * t * sum
    } else {
        (t - 0.5 * (-2.0 * x).exp_m1() / nu + 2.0 * (-x).exp_m1() / nu) / (nu * nu)
    }
}

/// Smooth step: `0` for `x ≤ 0`, `1` for `x ≥ 1`, from the `e^{-1/x}` mollifier.
fn smooth_step(x: f64) -> f64 {
    let g = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (g(x), g(1.0 - x));
    a / (a + b)
}

/// Cutoff `η(s) = σ(2 - |s|)` with `σ(x) = g(x)/(g(x)+g(1-x))`, `g(x) = e^{-1/x}` for `x > 0`.
///
/// `η ≡ 1` on `|s| ≤ 1`, `η ≡ 0` on `|s| ≥ 2`, and `η` is `C^∞`.
pub fn eta(s: f64) -> f64 {
    smooth_step(2.0 - s.abs())
}

/// Indices `j ≠ 0` with `|jα| ≤ ν^{-1/3}`, i.e. the wavenumbers of `Λ_*`.
pub fn lambda_star(nu: f64, alpha: f64) -> Vec<i64> {
    let kmax = nu.powf(-1.0 / 3.0) * (1.0 + 1e-12);
    let jmax = (kmax / alpha).floor() as i64;
    (-jmax..=jmax).filter(|&j| j != 0).collect()
}

/// `sup_y (sin y)² e^{-νk²(sin y)² t³/3} · ⟨k²νt³⟩`, sampled on `m` points.
pub fn damping_mechanism_ratio(nu: f64, k: f64, t: f64, m: usize) -> f64 {
    let beta = nu * k * k * t.powi(3);
    let sup = fft::grid_points(m)
        .into_iter()
        .map(|y| {
            let s2 = y.sin().powi(2);
            s2 * (-beta * s2 / 3.0).exp()
        })
        .fold(0.0, f64::max);
    sup * bracket(beta)
}

/// Evaluate `Σ_n c_n e^{inθ}` at arbitrary points by Horner's rule in `e^{iθ}`.
fn eval_at(coeffs: &[C64], points: &[f64]) -> Vec<C64> {
    let n_max = (coeffs.len() / 2) as f64;
    points
        .iter()
        .map(|&th| {
            let z = C64::from_polar(1.0, th);
            let mut acc = ZERO;
            for c in coeffs.iter().rev() {
                acc = acc * z + c;
            }
            // Horner ran over z^{n+N}; undo the shift.
            acc * C64::from_polar(1.0, -n_max * th)
        })
        .collect()
}

/// Real trigonometric series evaluated at `y`.
fn eval_real(coeffs: &[C64], y: f64) -> f64 {
    eval_at(coeffs, &[y])[0].re
}

/// Change of variables `V(y) = a cos θ(y) + d`.
///
/// `θ(y) = y + τ(y)` with `τ` periodic, stored by its trigonometric
/// interpolant; the inverse map is stored the same way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorseData {
    pub a: f64,
    pub d: f64,
    pub y1: f64,
    pub y2: f64,
    tau: Vec<C64>,
    tau_inv: Vec<C64>,
    /// `sup |V - a cos θ - d|` on a grid interleaved with the samples.
    pub residual: f64,
    /// `min θ'` on the same grid.
    pub min_slope: f64,
}

impl MorseData {
    pub fn theta(&self, y: f64) -> f64 {
        y + eval_real(&self.tau, y)
    }

    pub fn theta_inverse(&self, z: f64) -> f64 {
        z + eval_real(&self.tau_inv, z)
    }

    pub fn theta_derivative(&self, y: f64) -> f64 {
        let p = (self.tau.len() / 2) as i64;
        let d: Vec<C64> = (-p..=p).zip(&self.tau).map(|(n, c)| c * C64::new(0.0, n as f64)).collect();
        1.0 + eval_real(&d, y)
    }

    /// `sup |θ(y) - y|` on `m` points.
    pub fn deviation_from_identity(&self, m: usize) -> f64 {
        fft::synthesize(&self.tau, m.max(self.tau.len())).iter().map(|z| z.re.abs()).fold(0.0, f64::max)
    }

    /// `f∘θ` resampled on `m` points and truncated to `|n| ≤ n_out`.
    pub fn compose(&self, f: &ModeFunction, m: usize, n_out: usize) -> ModeFunction {
        let pts: Vec<f64> = fft::grid_points(m).into_iter().map(|y| self.theta(y)).collect();
        ModeFunction::from_grid(f.k(), &eval_at(f.coeffs(), &pts), n_out)
    }

    /// `f∘θ^{-1}` resampled on `m` points and truncated to `|n| ≤ n_out`.
    pub fn compose_inverse(&self, f: &ModeFunction, m: usize, n_out: usize) -> ModeFunction {
        let pts: Vec<f64> = fft::grid_points(m).into_iter().map(|z| self.theta_inverse(z)).collect();
        ModeFunction::from_grid(f.k(), &eval_at(f.coeffs(), &pts), n_out)
    }

    /// `sup |(f∘θ^{-1})∘θ - f|` with both compositions resampled on `m` points.
    pub fn roundtrip_defect(&self, f: &ModeFunction, m: usize) -> f64 {
        let n = (m - 1) / 2;
        let back = self.compose(&self.compose_inverse(f, m, n), m, n);
        back.resized(f.n_max().max(n)).sub(&f.resized(f.n_max().max(n))).expect("same shape").sup_on_grid(2 * m)
    }
}

/// `V(p) - V(q)` summed as `Σ v̂_n 2i sin(n(p-q)/2) e^{in(p+q)/2}`, accurate
/// relative to `|p - q|` near a critical point.
fn stable_difference(v: &ShearProfile, p: f64, q: f64) -> f64 {
    let deg = v.degree() as i64;
    (-deg..=deg)
        .map(|n| {
            let nf = n as f64;
            (v.get(n) * C64::new(0.0, 2.0 * (0.5 * nf * (p - q)).sin()) * C64::from_polar(1.0, 0.5 * nf * (p + q))).re
        })
        .sum()
}

/// The lifted angle at `y`, glued from the two `arccos` branches.
///
/// Near `y₁` the branch is written as `θ = 2 arcsin(V₁)` with
/// `V₁ = sin(θ/2) = sgn(y-y₁) √((M - V)/(2a))`; near `y₂` as
/// `θ = π + 2 arcsin(sgn(y-y₂) √((V - m)/(2a)))`. Both square roots are taken
/// of differences computed without cancellation, so `θ` is accurate up to the
/// critical points.
fn theta_point(v: &ShearProfile, a: f64, d: f64, y: f64) -> f64 {
    let (y1, y2) = v.critical_points();
    let lo = y2 - 2.0 * PI;
    let shift = ((y - lo) / (2.0 * PI)).floor();
    let r = y - 2.0 * PI * shift;
    let th = if v.value(r) >= d {
        let s = (stable_difference(v, y1, r) / (2.0 * a)).clamp(0.0, 1.0).sqrt();
        2.0 * (s * (r - y1).signum()).asin()
    } else {
        let (c, base) = if r > y1 { (y2, PI) } else { (lo, -PI) };
        let s = (stable_difference(v, r, c) / (2.0 * a)).clamp(0.0, 1.0).sqrt();
        base + 2.0 * (s * (r - c).signum()).asin()
    };
    th + 2.0 * PI * shift
}

/// [`morse_transform_with`] at the default sample count.
pub fn morse_transform(v: &ShearProfile) -> Result<MorseData> {
    morse_transform_with(v, MORSE_SAMPLES)
}

/// Constants `a, d` and the circle map `θ` with `V = a cos θ + d`.
pub fn morse_transform_with(v: &ShearProfile, samples: usize) -> Result<MorseData> {
    if samples < 16 || samples % 2 != 0 {
        return Err(Error::Morse(format!("sample count {samples} must be even and >= 16")));
    }
    let (y1, y2) = v.critical_points();
    let a = 0.5 * stable_difference(v, y1, y2);
    let d = 0.5 * (v.max() + v.min());
    if !(a > 0.0) {
        return Err(Error::Morse("profile has no amplitude".into()));
    }
    let ys = fft::grid_points(samples);
    let l = samples / 2 - 1;
    let tau_samples: Vec<C64> = ys.iter().map(|&y| C64::new(theta_point(v, a, d, y) - y, 0.0)).collect();
    let tau = fft::analyze(&tau_samples, l);

    // Invert by Newton on the interpolant; θ' ≥ 1/2 in practice, so this converges fast.
    let dtau: Vec<C64> = (-(l as i64)..=l as i64).zip(&tau).map(|(n, c)| c * C64::new(0.0, n as f64)).collect();
    let mut inv_samples = Vec::with_capacity(samples);
    for &z in &ys {
        let mut y = z - eval_real(&tau, z);
        for _ in 0..50 {
            let f = y + eval_real(&tau, y) - z;
            let step = f / (1.0 + eval_real(&dtau, y));
            y -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        inv_samples.push(C64::new(y - z, 0.0));
    }
    let tau_inv = fft::analyze(&inv_samples, l);

    let mut data = MorseData { a, d, y1, y2, tau, tau_inv, residual: 0.0, min_slope: 0.0 };
    // Check on points interleaved with the samples.
    let check = 4 * samples;
    let h = 2.0 * PI / check as f64;
    let mut residual = 0.0f64;
    let mut min_slope = f64::INFINITY;
    for j in 0..check {
        let y = (j as f64 + 0.5) * h;
        residual = residual.max((v.value(y) - a * data.theta(y).cos() - d).abs());
        min_slope = min_slope.min(data.theta_derivative(y));
    }
    data.residual = residual;
    data.min_slope = min_slope;
    if !(min_slope > 0.0) {
        return Err(Error::Morse(format!("θ is not increasing (min slope {min_slope:e})")));
    }
    Ok(data)
}

/// Shear `V = P₀U₀ˣ` from the x-average of a vorticity field, normalized to zero mean.
///
/// `P₀Ω = -V'`, so `V̂(n) = iΩ̂₀(n)/n`.
pub fn shear_from_vorticity(omega: &Field2D) -> Result<ShearProfile> {
    let m0 = omega.mode(0);
    let big = m0.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let deg = m0
        .indices()
        .filter(|&n| m0.get(n).norm() > 1e-14 * big)
        .map(|n| n.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    let d = deg as i64;
    let coeffs = (-d..=d)
        .map(|n| if n == 0 { ZERO } else { m0.get(n) * C64::new(0.0, 1.0 / n as f64) })
        .collect();
    ShearProfile::from_coeffs(coeffs)
}

/// `ω_L(t)` restricted to the positive half of `Λ_*`; the slice at `-k` is the
/// conjugate mirror, so norms count every stored slice twice.
#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub nu: f64,
    pub t: f64,
    /// `(j, w_{k,2})` with `k = jα`, `j > 0`.
    pub modes: Vec<(i64, ModeFunction)>,
}

impl ApproxSolution {
    pub fn l2_norm(&self) -> f64 {
        (2.0 * self.modes.iter().map(|(_, w)| w.l2_norm().powi(2)).sum::<f64>()).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ApproxOptions {
    /// Physical y-points; the slices keep `|n| ≤ ny/3`.
    pub ny: usize,
    /// Tolerance of the linearized Euler integration.
    pub ode_tol: f64,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self { ny: 256, ode_tol: 1e-11 }
    }
}

/// `ω_L` on a time grid together with the data it was built from.
#[derive(Debug, Clone)]
pub struct ApproxTrajectory {
    pub nu: f64,
    pub alpha: f64,
    pub morse: MorseData,
    pub profile: ShearProfile,
    pub snapshots: Vec<ApproxSolution>,
    /// `‖ω₀‖_{H³}` of the restricted data.
    pub h3_norm: f64,
    /// Largest roundtrip defect `sup|(w₀∘θ^{-1})∘θ - w₀|` over the slices.
    pub transport_defect: f64,
    pub ny: usize,
    pub ode_tol: f64,
}

impl ApproxTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

fn n_out(ny: usize) -> usize {
    ny / 3
}

/// Build `ω_L` for the mean-free perturbation `omega0` around the shear `v`.
pub fn build_approx_solution(
    omega0: &Field2D,
    v: &ShearProfile,
    nu: f64,
    t_grid: &[f64],
    opts: ApproxOptions,
) -> Result<ApproxTrajectory> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::OutOfRange { name: "nu", value: nu, range: "(0, 1)" });
    }
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidWindow("time grid must start at t >= 0 and increase strictly".into()));
    }
    if opts.ny < 16 || opts.ny % 2 != 0 {
        return Err(Error::InvalidGrid(format!("ny = {} must be even and >= 16", opts.ny)));
    }
    if omega0.mode(0).l2_norm() > 1e-12 * omega0.l2_norm().max(1e-300) {
        return Err(Error::ModeMismatch("initial perturbation must have zero x-average".into()));
    }
    let morse = morse_transform(v)?;
    if morse.residual > MORSE_TOLERANCE {
        return Err(Error::Morse(format!("residual {:e} exceeds {MORSE_TOLERANCE:e}", morse.residual)));
    }
    let alpha = omega0.grid().alpha();
    let m = opts.ny;
    let n = n_out(m);
    let js: Vec<i64> = lambda_star(nu, alpha)
        .into_iter()
        .filter(|&j| j > 0 && j <= omega0.j_max() as i64)
        .collect();

    let ys = fft::grid_points(m);
    let theta_pts: Vec<f64> = ys.iter().map(|&y| morse.theta(y)).collect();
    let dv2: Vec<f64> = ys.iter().map(|&y| v.derivative(y, 1).powi(2)).collect();
    let stars: Vec<f64> = t_grid.iter().map(|&t| t_star(t, nu)).collect();
    let taus: Vec<f64> = stars.iter().map(|s| morse.a * s).collect();
    let gammas: Vec<f64> = t_grid.iter().map(|&t| gamma1(t, nu)).collect();

    let per_mode = par::map(&js, |&j| -> Result<(Vec<ModeFunction>, f64, f64)> {
        let w0 = omega0.mode(j).resized(n);
        let k = w0.k();
        let tilde0 = morse.compose_inverse(&w0, m, n);
        let defect = morse.roundtrip_defect(&w0, m);
        let h3 = crate::spectral::sobolev_norm(&w0, 3.0);
        // The Euler integrator needs strictly increasing times; a·t_* is.
        let traj = evolve_linearized_euler(&tilde0, &taus, opts.ode_tol)?;
        let states = traj
            .states
            .iter()
            .enumerate()
            .map(|(i, wt)| {
                let vals = eval_at(wt.coeffs(), &theta_pts);
                let phase = C64::from_polar(1.0, -k * morse.d * stars[i]);
                let damped: Vec<C64> = vals
                    .iter()
                    .zip(&dv2)
                    .map(|(w, d2)| w * phase * (-nu * k * k * gammas[i] * d2).exp())
                    .collect();
                ModeFunction::from_grid(k, &damped, n)
            })
            .collect();
        Ok((states, defect, h3))
    });

    let mut columns = Vec::with_capacity(js.len());
    let mut transport_defect = 0.0f64;
    let mut h3_sq = 0.0;
    for r in per_mode {
        let (states, defect, h3) = r?;
        transport_defect = transport_defect.max(defect);
        h3_sq += 2.0 * h3 * h3;
        columns.push(states);
    }
    let snapshots = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| ApproxSolution {
            nu,
            t,
            modes: js.iter().zip(&columns).map(|(&j, col)| (j, col[i].clone())).collect(),
        })
        .collect();
    Ok(ApproxTrajectory {
        nu,
        alpha,
        morse,
        profile: v.clone(),
        snapshots,
        h3_norm: h3_sq.sqrt(),
        transport_defect,
        ny: m,
        ode_tol: opts.ode_tol,
    })
}

/// Grid samples of `w_{k,3} = η(√t V') w_{k,2}` and `w_{k*} = (1-η(√t V')) w_{k,2}`.
#[derive(Debug, Clone)]
pub struct SplitMode {
    pub j: i64,
    pub whole: Vec<C64>,
    pub near_critical: Vec<C64>,
    pub away: Vec<C64>,
}

impl SplitMode {
    /// `sup_j |w_{k,3} + w_{k*} - w_{k,2}|`.
    pub fn partition_defect(&self) -> f64 {
        self.whole
            .iter()
            .zip(self.near_critical.iter().zip(&self.away))
            .map(|(w, (a, b))| (a + b - w).norm())
            .fold(0.0, f64::max)
    }
}

/// Split each slice into its part near the critical points and the rest.
pub fn split_approx(sol: &ApproxSolution, v: &ShearProfile, m: usize) -> Vec<SplitMode> {
    let st = sol.t.max(0.0).sqrt();
    let cut: Vec<f64> = fft::grid_points(m).into_iter().map(|y| eta(st * v.derivative(y, 1))).collect();
    sol.modes
        .iter()
        .map(|(j, w)| {
            let whole = w.to_grid(m);
            let near_critical: Vec<C64> = whole.iter().zip(&cut).map(|(w, e)| w * e).collect();
            let away = whole.iter().zip(&cut).map(|(w, e)| w * (1.0 - e)).collect();
            SplitMode { j: *j, whole, near_critical, away }
        })
        .collect()
}

/// Width of the component of `{y : η(√t V'(y)) > 0}` containing `y₁`, on `m` points.
pub fn cutoff_support_width(v: &ShearProfile, t: f64, m: usize) -> f64 {
    let (y1, _) = v.critical_points();
    let h = 2.0 * PI / m as f64;
    let inside = |y: f64| eta(t.sqrt() * v.derivative(y, 1)) > 0.0;
    let mut count = 0usize;
    for dir in [-1.0, 1.0] {
        let mut i = 1;
        while i < m / 2 && inside(y1 + dir * i as f64 * h) {
            i += 1;
        }
        count += i - 1;
    }
    (count + 1) as f64 * h
}

/// `sup_{x,y} |Σ_k f_k(y) e^{ikx} + c.c.|` for slices with positive `k = jα`.
fn sup_real_field(slices: &[(i64, Vec<C64>)]) -> f64 {
    if slices.is_empty() {
        return 0.0;
    }
    let jmax = slices.iter().map(|(j, _)| *j).max().unwrap_or(0) as usize;
    let nx = fft::pow2_at_least(8 * jmax + 8);
    let m = slices[0].1.len();
    let plan = fft::inverse_plan(nx);
    let mut sup = 0.0f64;
    let mut buf = vec![ZERO; nx];
    for iy in 0..m {
        buf.iter_mut().for_each(|b| *b = ZERO);
        for (j, vals) in slices {
            let j = *j as usize;
            buf[j] += vals[iy];
            buf[nx - j] += vals[iy].conj();
        }
        plan.process(&mut buf);
        sup = buf.iter().fold(sup, |s, z| s.max(z.re.abs()));
    }
    sup
}

/// Pointwise diagnostics of one snapshot.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ApproxDiagnostics {
    pub t: f64,
    pub sup_dx_omega_l: f64,
    pub sup_u_l_y: f64,
    pub l2_norm: f64,
}

pub fn diagnostics(sol: &ApproxSolution, alpha: f64, m: usize) -> Result<ApproxDiagnostics> {
    let mut dx = Vec::new();
    let mut uy = Vec::new();
    for (j, w) in &sol.modes {
        let k = *j as f64 * alpha;
        let ik = C64::new(0.0, k);
        dx.push((*j, w.scale(ik).to_grid(m)));
        uy.push((*j, laplacian_inverse_k(w)?.scale(ik).to_grid(m)));
    }
    Ok(ApproxDiagnostics { t: sol.t, sup_dx_omega_l: sup_real_field(&dx), sup_u_l_y: sup_real_field(&uy), l2_norm: sol.l2_norm() })
}

/// Reference shape `ν⟨t⟩⟨νt³⟩^{-1} + ν^{1/3}⟨t⟩^{-2} + ⟨t⟩^{-2}|νt³|^{1/2}`.
pub fn error_shape(t: f64, nu: f64) -> f64 {
    let nt3 = nu * t.powi(3);
    let bt = bracket(t);
    nu * bt / bracket(nt3) + nu.cbrt() / (bt * bt) + nt3.abs().sqrt() / (bt * bt)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorSample {
    pub t: f64,
    /// `‖Er_L(t)‖_{L²}`.
    pub er_l2: f64,
    pub shape: f64,
    /// `‖Er_L‖ / (shape · ‖ω₀‖_{H³})`.
    pub ratio: f64,
    /// Estimated roundoff and integration noise in the time difference.
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorLedger {
    pub nu: f64,
    pub dt: f64,
    pub ny: usize,
    pub samples: Vec<ErrorSample>,
    /// Smallest `c` with `‖Er_L‖ ≤ c · shape · ‖ω₀‖_{H³}` on the samples.
    pub envelope_c: f64,
    pub argmax_t: f64,
    /// Whether any sample has `‖Er_L‖` below ten times its noise estimate.
    pub noise_dominated: bool,
    /// Suggested step when `noise_dominated` is set.
    pub recommended_dt: Option<f64>,
}

impl ErrorLedger {
    /// The differencing-noise flag as an error.
    pub fn check(&self) -> Result<()> {
        match self.recommended_dt {
            Some(dt) if self.noise_dominated => Err(Error::DifferencingNoise { recommended_dt: dt }),
            _ => Ok(()),
        }
    }
}

/// Multiply the coefficients of `V` and `g` (full linear convolution).
fn multiply_by_shear(v: &ShearProfile, g: &ModeFunction) -> Vec<C64> {
    let p = v.degree() as i64;
    let n = g.n_max() as i64;
    let mut out = vec![ZERO; (2 * (n + p) + 1) as usize];
    for a in -p..=p {
        let va = v.get(a);
        if va == ZERO {
            continue;
        }
        for b in -n..=n {
            out[(a + b + n + p) as usize] += va * g.get(b);
        }
    }
    out
}

/// `Er_L = ∂_tω_L - νΔω_L + e^{-νt}V∂_x(ω_L + φ_L)` in `L²`, with spectral space
/// derivatives and fourth-order central differences in time.
///
/// The time grid must be uniform; the first and last two samples are used
/// only as stencil points.
pub fn error_ledger(traj: &ApproxTrajectory) -> Result<ErrorLedger> {
    let times = traj.times();
    if times.len() < 5 {
        return Err(Error::InvalidWindow("need at least five uniformly spaced times".into()));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::InvalidWindow("error ledger needs a uniform time grid".into()));
    }
    let nu = traj.nu;
    let v = &traj.profile;
    let h3 = traj.h3_norm;
    let snaps = &traj.snapshots;
    let idx: Vec<usize> = (2..times.len() - 2).collect();
    let rows = par::map(&idx, |&i| -> Result<(f64, f64)> {
        let t = times[i];
        let decay = (-nu * t).exp();
        let mut sq = 0.0;
        let mut scale = 0.0f64;
        for (slot, (j, w)) in snaps[i].modes.iter().enumerate() {
            let k = *j as f64 * traj.alpha;
            let at = |o: usize| &snaps[o].modes[slot].1;
            let (wm2, wm1, wp1, wp2) = (at(i - 2), at(i - 1), at(i + 1), at(i + 2));
            let psi = laplacian_inverse_k(w)?;
            let transport = multiply_by_shear(v, &w.add(&psi)?);
            let nn = w.n_max() as i64;
            let p = v.degree() as i64;
            let mut er: Vec<C64> = transport.iter().map(|c| c * C64::new(0.0, k * decay)).collect();
            for n in -nn..=nn {
                let dtw = (wm2.get(n) - wm1.get(n) * 8.0 + wp1.get(n) * 8.0 - wp2.get(n)) / (12.0 * dt);
                er[(n + nn + p) as usize] += dtw + w.get(n) * (nu * neg_laplacian_symbol(n, k));
            }
            sq += 2.0 * er.iter().map(|c| c.norm_sqr()).sum::<f64>();
            scale = scale.max(w.l2_norm());
        }
        Ok((sq.sqrt(), scale))
    });
    let mut samples = Vec::with_capacity(idx.len());
    let mut noise_dominated = false;
    let mut worst_noise_ratio = 0.0f64;
    for (&i, r) in idx.iter().zip(rows) {
        let (er, scale) = r?;
        let t = times[i];
        let shape = error_shape(t, nu);
        // Stencil weights sum to 18/12 in absolute value.
        let noise = 1.5 * (f64::EPSILON + traj.ode_tol) * scale * 2f64.sqrt() / dt;
        if h3 > 0.0 && er < 10.0 * noise {
            noise_dominated = true;
            worst_noise_ratio = worst_noise_ratio.max(10.0 * noise / er.max(f64::MIN_POSITIVE));
        }
        let ratio = if h3 > 0.0 { er / (shape * h3) } else { 0.0 };
        samples.push(ErrorSample { t, er_l2: er, shape, ratio, noise });
    }
    let (argmax_t, envelope_c) = samples.iter().fold((times[0], 0.0), |acc, s| if s.ratio > acc.1 { (s.t, s.ratio) } else { acc });
    Ok(ErrorLedger {
        nu,
        dt,
        ny: traj.ny,
        samples,
        envelope_c,
        argmax_t,
        noise_dominated,
        recommended_dt: noise_dominated.then(|| dt * worst_noise_ratio),
    })
}

/// Measured envelopes of the approximate solution over `[t_lo, t_hi]`.
#[derive(Debug, Clone, Serialize)]
pub struct ApproxEnvelopes {
    pub diagnostics: Vec<ApproxDiagnostics>,
    /// `max_t ⟨νt³⟩ sup|∂_xω_L| / ‖ω₀‖_{H³}`.
    pub dx_bound: f64,
    /// Power-law fit of `sup|u_L^y| / ⟨νt³⟩^{1/2}`; the reference exponent is `-2`.
    pub u_y_fit: Option<RateFit>,
}

pub fn measure_envelopes(traj: &ApproxTrajectory, window: (f64, f64)) -> Result<ApproxEnvelopes> {
    let nu = traj.nu;
    let m = traj.ny;
    let diags: Vec<ApproxDiagnostics> =
        par::map(&traj.snapshots, |s| diagnostics(s, traj.alpha, m)).into_iter().collect::<Result<_>>()?;
    let h3 = traj.h3_norm.max(f64::MIN_POSITIVE);
    let dx_bound = diags
        .iter()
        .map(|d| bracket(nu * d.t.powi(3)) * d.sup_dx_omega_l / h3)
        .fold(0.0, f64::max);
    let series: Vec<(f64, f64)> = diags
        .iter()
        .filter(|d| d.t > 0.0)
        .map(|d| (d.t, d.sup_u_l_y / bracket(nu * d.t.powi(3)).sqrt()))
        .collect();
    let u_y_fit = fit_power_law(&series, window).ok();
    Ok(ApproxEnvelopes { diagnostics: diags, dx_bound, u_y_fit })
}

/// The named single-mode perturbation `cos(αx) cos y`, normalized to unit `H³`.
pub fn unit_mode21(grid: TorusGrid) -> Field2D {
    let alpha = grid.alpha();
    let f = Field2D::from_physical(grid, true, |x, y| (alpha * x).cos() * y.cos());
    let h3 = f.sobolev_norm(3.0);
    f.scaled(1.0 / h3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma1_basics() {
        assert_eq!(gamma1(0.0, 0.1), 0.0);
        assert_eq!(t_star(0.0, 0.1), 0.0);
        let nu = 1e-3;
        let (_, t1, _) = timescales(nu);
        for i in 1..=200 {
            let t = t1 * i as f64 / 200.0;
            let g = gamma1(t, nu);
            assert!(g >= t.powi(3) / 4.0 && g <= t.powi(3) / 3.0, "t = {t}");
        }
    }

    #[test]
    fn gamma1_taylor_oracle() {
        // Integrate the Cauchy square of t_* = Σ_{m≥1} (-ν)^{m-1} t^m / m! term by term.
        let (t, nu) = (1.0f64, 0.01f64);
        let c: Vec<f64> = (0..14)
            .map(|m| if m == 0 { 0.0 } else { (-nu).powi(m as i32 - 1) / (1..=m).map(|i| i as f64).product::<f64>() })
            .collect();
        let mut taylor = 0.0;
        for p in 2..14 {
            let sq: f64 = (1..p).map(|i| c[i] * c[p - i]).sum();
            taylor += sq * t.powi(p as i32 + 1) / (p + 1) as f64;
        }
        assert!((gamma1(t, nu) - taylor).abs() < 1e-12);
    }

    #[test]
    fn gamma1_closed_form_against_quadrature() {
        let nu = 0.02;
        for &t in &[30.0, 100.0, 400.0] {
            let q = crate::quadrature::integrate(
                |s| C64::new(t_star(s, nu).powi(2), 0.0),
                0.0,
                t,
                8,
                Default::default(),
            );
            assert_relative_eq!(gamma1(t, nu), q.value.re, max_relative = 1e-12);
        }
        // Continuity across the switch between series and closed form.
        let t = GAMMA1_SERIES_SWITCH / nu;
        assert_relative_eq!(gamma1(t * (1.0 - 1e-12), nu), gamma1(t, nu), max_relative = 1e-10);
    }

    #[test]
    fn eta_shape() {
        assert_eq!(eta(0.0), 1.0);
        assert_eq!(eta(1.0), 1.0);
        assert_eq!(eta(-0.7), 1.0);
        assert_eq!(eta(2.0), 0.0);
        assert_eq!(eta(-3.5), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let e = eta(1.0 + i as f64 / 100.0);
            assert!(e <= prev && (0.0..=1.0).contains(&e));
            prev = e;
        }
    }

    #[test]
    fn lambda_star_set() {
        assert_eq!(lambda_star(1e-3, 2.0), vec![-5, -4, -3, -2, -1, 1, 2, 3, 4, 5]);
        assert!(lambda_star(0.5, 2.0).is_empty());
    }

    #[test]
    fn damping_mechanism_is_bounded() {
        let mut worst = 0.0f64;
        for &nu in &[1e-2, 1e-3, 1e-4] {
            for &k in &[2.0, 4.0, 8.0] {
                for t in crate::fit::log_space(0.1, 1e3, 60) {
                    worst = worst.max(damping_mechanism_ratio(nu, k, t, 4096));
                }
            }
        }
        // sup_s s e^{-βs/3} = 3/(eβ) for β ≥ 3, so the product stays below 3/e + 1.
        assert!(worst < 3.0 / std::f64::consts::E + 1.0, "{worst}");
    }

    #[test]
    fn morse_cosine_is_identity() {
        let m = morse_transform(&ShearProfile::cosine()).unwrap();
        assert!((m.a - 1.0).abs() < 1e-15 && m.d.abs() < 1e-15);
        assert!(m.residual < 1e-14);
        assert!(m.deviation_from_identity(512) < 1e-14);
    }

    #[test]
    fn morse_affine_exact() {
        let v = ShearProfile::affine(1.05, 0.02).unwrap();
        let m = morse_transform(&v).unwrap();
        assert!((m.a - 1.05).abs() < 1e-14, "{}", m.a);
        assert!((m.d - 0.02).abs() < 1e-15, "{}", m.d);
        assert!(m.residual < 1e-14, "{}", m.residual);
        assert!(m.deviation_from_identity(512) < 1e-14);
    }

    #[test]
    fn morse_perturbed_profile() {
        let v = ShearProfile::from_cosine_series(&[0.0, 1.0, 0.01]).unwrap();
        let m = morse_transform(&v).unwrap();
        assert!(m.residual <= 1e-8, "{}", m.residual);
        assert!(m.deviation_from_identity(512) <= 0.05);
        assert!(m.min_slope > 0.5);
        // Off-grid inverse check.
        for i in 0..37 {
            let y = -3.0 + 0.17 * i as f64;
            assert!((m.theta(m.theta_inverse(y)) - y).abs() < 1e-12);
        }
        // Degree-one lift.
        assert!((m.theta(1.3 + 2.0 * PI) - m.theta(1.3) - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn morse_asymmetric_profile() {
        // cos y + 0.04 sin 2y moves both critical points off 0 and π.
        let c = vec![C64::new(0.0, 0.02), C64::new(0.5, 0.0), ZERO, C64::new(0.5, 0.0), C64::new(0.0, -0.02)];
        let v = ShearProfile::from_coeffs(c).unwrap();
        let m = morse_transform(&v).unwrap();
        assert!(m.residual <= 1e-8, "{}", m.residual);
        assert!(m.theta(m.y1).abs() < 1e-12);
        assert!((m.theta(m.y2) - PI).abs() < 1e-12);
    }

    #[test]
    fn theta_roundtrip() {
        let v = ShearProfile::from_cosine_series(&[0.0, 1.0, 0.01]).unwrap();
        let m = morse_transform(&v).unwrap();
        let mut rng = crate::testing::rng(5);
        let f = crate::testing::random_mode(&mut rng, 2.0, 16);
        assert!(m.roundtrip_defect(&f, 256) < 1e-8);
    }

    #[test]
    fn shear_recovered_from_vorticity() {
        let grid = TorusGrid::new(0.5, 16, 32).unwrap();
        let f = Field2D::from_physical(grid, true, |_, y| y.sin() + 0.02 * (2.0 * y).sin());
        let v = shear_from_vorticity(&f).unwrap();
        assert!((v.value(0.3) - (0.3f64.cos() + 0.01 * 0.6f64.cos())).abs() < 1e-14);
    }

    fn single_mode(nu: f64, ny: usize) -> (Field2D, Vec<f64>) {
        let grid = TorusGrid::new(0.5, 16, ny).unwrap();
        let w = unit_mode21(grid).scaled(nu.cbrt() / 10.0);
        let ts: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
        (w, ts)
    }

    #[test]
    fn identity_map_gives_raw_euler() {
        let nu = 1e-2;
        let (w, ts) = single_mode(nu, 64);
        // With ν → 0 in the damping only a·t_* remains; compare the undamped factor directly.
        let v = ShearProfile::cosine();
        let traj = build_approx_solution(&w, &v, nu, &ts, ApproxOptions { ny: 64, ode_tol: 1e-12 }).unwrap();
        let i = 20;
        let t = ts[i];
        let w0 = w.mode(1).resized(21);
        let raw = evolve_linearized_euler(&w0, &[0.0, t_star(t, nu)], 1e-12).unwrap();
        let grid = fft::grid_points(64);
        let damped: Vec<C64> = raw.states[1]
            .to_grid(64)
            .iter()
            .zip(&grid)
            .map(|(z, y)| z * (-nu * 4.0 * gamma1(t, nu) * y.sin().powi(2)).exp())
            .collect();
        let expect = ModeFunction::from_grid(2.0, &damped, 21).to_grid(64);
        let got = traj.snapshots[i].modes[0].1.to_grid(64);
        let err = expect.iter().zip(&got).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn envelopes_within_bounds() {
        let nu = 1e-3;
        let (t0, t1, _) = timescales(nu);
        let grid = TorusGrid::new(0.5, 16, 256).unwrap();
        let w = unit_mode21(grid).scaled(nu.cbrt() / 10.0);
        let ts: Vec<f64> = (0..=((t1 / 0.1).ceil() as usize)).map(|i| 0.1 * i as f64).collect();
        let traj = build_approx_solution(&w, &ShearProfile::cosine(), nu, &ts, ApproxOptions { ny: 256, ode_tol: 1e-10 }).unwrap();
        let env = measure_envelopes(&traj, (t0, t1)).unwrap();
        assert!(env.dx_bound.is_finite() && env.dx_bound < 10.0, "{}", env.dx_bound);
        // The estimate is an upper envelope: the decay must be at least as fast.
        let e = env.u_y_fit.unwrap().exponent;
        assert!(e <= -2.0 + 0.3, "{e}");
    }

    #[test]
    fn damping_is_one_at_critical_points() {
        let v = ShearProfile::cosine();
        let nu = 1e-2;
        for &t in &[1.0, 10.0, 50.0] {
            for &y in &[0.0, PI] {
                let f = (-nu * 4.0 * gamma1(t, nu) * v.derivative(y, 1).powi(2)).exp();
                assert!((f - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_data_zero_error() {
        let grid = TorusGrid::new(0.5, 16, 64).unwrap();
        let w = Field2D::zeros_dealiased(grid);
        let ts: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
        let traj = build_approx_solution(&w, &ShearProfile::cosine(), 1e-2, &ts, ApproxOptions { ny: 64, ode_tol: 1e-10 }).unwrap();
        let led = error_ledger(&traj).unwrap();
        assert!(led.samples.iter().all(|s| s.er_l2 == 0.0));
        assert!(!led.noise_dominated);
    }

    #[test]
    fn split_partition() {
        let nu = 1e-2;
        let (w, ts) = single_mode(nu, 64);
        let v = ShearProfile::cosine();
        let traj = build_approx_solution(&w, &v, nu, &ts, ApproxOptions { ny: 64, ode_tol: 1e-10 }).unwrap();
        // t = 0: everything sits in the near-critical part.
        for s in split_approx(&traj.snapshots[0], &v, 64) {
            assert!(s.away.iter().all(|z| *z == ZERO));
        }
        for snap in &traj.snapshots {
            for s in split_approx(snap, &v, 64) {
                assert!(s.partition_defect() <= 1e-14 * 4.0);
            }
        }
    }

    #[test]
    fn cutoff_support_shrinks() {
        let v = ShearProfile::cosine();
        for &t in &[100.0, 400.0, 1600.0] {
            let w = cutoff_support_width(&v, t, 1 << 16);
            // |sin y| < 2/√t around y = 0.
            let exact = 2.0 * (2.0 / t.sqrt()).asin();
            assert!((w - exact).abs() < 2e-3 * exact + 2.0 * PI / 65536.0, "t={t}: {w} vs {exact}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let (w, ts) = single_mode(1e-2, 64);
        let v = ShearProfile::cosine();
        let opts = ApproxOptions { ny: 64, ode_tol: 1e-10 };
        assert!(build_approx_solution(&w, &v, 0.0, &ts, opts).is_err());
        assert!(build_approx_solution(&w, &v, 1e-2, &[1.0, 0.5], opts).is_err());
        let grid = TorusGrid::new(0.5, 16, 64).unwrap();
        let shear = Field2D::from_physical(grid, false, |x, y| y.sin() + (2.0 * x).cos());
        assert!(build_approx_solution(&shear, &v, 1e-2, &ts, opts).is_err());
    }
}

//! Linearized Euler flow around the cosine shear, one x-mode at a time.
//!
//! For `b(y) = cos y` the mode equation `∂_t ω + ikb(ω + ψ) = 0`, `Δ_k ψ = ω`,
//! reads `ω' = -ikBω` with `B = cos y (1 + Δ_k^{-1})`. `B` is symmetric for the
//! star product, so the flow is a star isometry; its Galerkin truncation
//! `P B P` keeps that property exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::fit::{fit_power_law, RateFit};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::operators::{apply_b, apply_lambda3, apply_omega1};
use crate::par;
use crate::quadrature::{self, QuadOptions};
use crate::spectral::{laplacian_inverse_k, sobolev_norm, star_norm, star_weight, ModeFunction, C64, ZERO};

/// Named initial profiles for a single x-mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialProfile {
    /// `Σ_{|n|≤10} e^{-|n|/2} e^{iφ_n} e^{iny}` with fixed phases `φ_n = 0.7n + 0.3n²`.
    Smooth,
    /// `e^{iny}`.
    SingleMode { n: i64 },
}

impl InitialProfile {
    pub fn build(&self, k: f64, n_max: usize) -> ModeFunction {
        match *self {
            InitialProfile::Smooth => ModeFunction::from_fn(k, n_max, |n| {
                if n.abs() > 10 {
                    return ZERO;
                }
                let nf = n as f64;
                C64::from_polar((-nf.abs() / 2.0).exp(), 0.7 * nf + 0.3 * nf * nf)
            }),
            InitialProfile::SingleMode { n } => ModeFunction::unit(k, n_max, n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearTrajectory {
    pub k: f64,
    pub times: Vec<f64>,
    pub states: Vec<ModeFunction>,
    /// `‖ω(t)‖_*` at every time.
    pub conserved_log: Vec<f64>,
    pub stats: OdeStats,
}

impl LinearTrajectory {
    /// Largest `|‖ω(t)‖_* / ‖ω₀‖_* - 1|`.
    pub fn star_norm_drift(&self) -> f64 {
        let s0 = self.conserved_log[0];
        if s0 == 0.0 {
            return 0.0;
        }
        self.conserved_log.iter().map(|s| (s / s0 - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `-ikB ω` on the truncation, written into `out`.
pub fn euler_rhs(k: f64, weights: &[f64], w: &[C64], out: &mut [C64]) {
    let len = w.len();
    let f = C64::new(0.0, -0.5 * k);
    for i in 0..len {
        let mut acc = ZERO;
        if i > 0 {
            acc += w[i - 1] * weights[i - 1];
        }
        if i + 1 < len {
            acc += w[i + 1] * weights[i + 1];
        }
        out[i] = acc * f;
    }
}

/// Integrate `ω' = -ikBω` and record `ω` at each time of `t_grid`.
pub fn evolve_linearized_euler(omega0: &ModeFunction, t_grid: &[f64], tol: f64) -> Result<LinearTrajectory> {
    let k = omega0.k();
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    if !(tol > 0.0) {
        return Err(Error::OutOfRange { name: "tol", value: tol, range: "(0, inf)" });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidWindow("time grid must be non-empty and strictly increasing".into()));
    }
    let weights: Vec<f64> = omega0.indices().map(|n| star_weight(n, k)).collect();
    let scale = 1.0 / k.abs();
    let opts = OdeOptions { rtol: tol, atol: tol * omega0.l2_norm().max(f64::MIN_POSITIVE), h_init: 0.1 * scale, h_max: Some(scale) };
    let (raw, stats) = ode::integrate(|_, w, dw| euler_rhs(k, &weights, w, dw), omega0.coeffs(), t_grid, opts)?;
    let states: Vec<ModeFunction> = raw
        .into_iter()
        .map(|c| ModeFunction::from_coeffs(k, c))
        .collect::<Result<_>>()?;
    let conserved_log = states.iter().map(star_norm).collect::<Result<_>>()?;
    Ok(LinearTrajectory { k, times: t_grid.to_vec(), states, conserved_log, stats })
}

/// Pointwise diagnostics of one state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileSample {
    pub t: f64,
    pub sup_psi: f64,
    /// `sup_y |∂_y(e^{iktb}ψ)| = sup_y |ψ' - ikt sin y ψ|`.
    pub sup_dy_profile_psi: f64,
    pub omega_0: f64,
    pub omega_pi: f64,
    pub star_norm: f64,
    pub l2_norm: f64,
    /// `‖(∂_y,k)(e^{iktb}ω)‖`.
    pub h1_profile_norm: f64,
    /// `‖(∂_y,k)²(e^{iktb}ω)‖`.
    pub h2_profile_norm: f64,
}

fn grid_size(n_max: usize, extra: f64) -> usize {
    fft::pow2_at_least(4 * (n_max + extra.ceil() as usize) + 8)
}

/// Multiply by `e^{iktb(y)}` on a grid fine enough to hold the product, and
/// return the coefficients `|n| ≤ N`.
pub fn profile(w: &ModeFunction, t: f64) -> ModeFunction {
    let kt = w.k() * t;
    let m = grid_size(w.n_max(), kt.abs() + 10.0 * kt.abs().sqrt() + 40.0);
    let ys = fft::grid_points(m);
    let mut vals = w.to_grid(m);
    for (v, y) in vals.iter_mut().zip(&ys) {
        *v *= C64::from_polar(1.0, kt * y.cos());
    }
    ModeFunction::from_grid(w.k(), &vals, w.n_max())
}

pub fn sample_state(w: &ModeFunction, t: f64) -> Result<ProfileSample> {
    let k = w.k();
    let psi = laplacian_inverse_k(w)?;
    let m = grid_size(w.n_max(), 0.0);
    let ys = fft::grid_points(m);
    let psi_v = psi.to_grid(m);
    let dpsi_v = psi.dy().to_grid(m);
    let sup_psi = psi_v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let sup_dy_profile_psi = ys
        .iter()
        .zip(psi_v.iter().zip(&dpsi_v))
        .map(|(y, (p, dp))| (dp - C64::new(0.0, k * t * y.sin()) * p).norm())
        .fold(0.0, f64::max);
    let omega_0 = w.coeffs().iter().sum::<C64>().norm();
    let omega_pi = w
        .indices()
        .zip(w.coeffs())
        .map(|(n, c)| if n % 2 == 0 { *c } else { -*c })
        .sum::<C64>()
        .norm();
    let p = profile(w, t);
    Ok(ProfileSample {
        t,
        sup_psi,
        sup_dy_profile_psi,
        omega_0,
        omega_pi,
        star_norm: star_norm(w)?,
        l2_norm: w.l2_norm(),
        h1_profile_norm: sobolev_norm(&p, 1.0),
        h2_profile_norm: sobolev_norm(&p, 2.0),
    })
}

pub fn sample_trajectory(traj: &LinearTrajectory) -> Result<Vec<ProfileSample>> {
    let pairs: Vec<(f64, &ModeFunction)> = traj.times.iter().cloned().zip(&traj.states).collect();
    par::map(&pairs, |(t, w)| sample_state(w, *t)).into_iter().collect()
}

/// Rates with their reference exponents, as measured on one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub k: f64,
    pub window: (f64, f64),
    pub fits: BTreeMap<String, RateFit>,
    pub reference: BTreeMap<String, f64>,
    /// `max_t ‖ω(t)‖ / ‖ω₀‖` and `min_t ‖ω(t)‖ / ‖ω₀‖`.
    pub l2_ratio_range: (f64, f64),
    pub star_norm_drift: f64,
    pub samples: Vec<ProfileSample>,
}

/// The default fit window `[max(10, 2k²), t_end]`.
pub fn default_window(k: f64, t_end: f64) -> (f64, f64) {
    ((2.0 * k * k).max(10.0), t_end)
}

/// Power-law fits of the decay diagnostics.
///
/// Requires the trajectory to reach `10·k²`, one decade past the onset of decay.
pub fn measure_rates(traj: &LinearTrajectory, window: Option<(f64, f64)>) -> Result<RateReport> {
    let k = traj.k;
    let t_end = *traj.times.last().expect("non-empty trajectory");
    if t_end < 10.0 * k * k {
        return Err(Error::InvalidWindow(format!("trajectory ends at {t_end}, needs at least 10k² = {}", 10.0 * k * k)));
    }
    let window = window.unwrap_or_else(|| default_window(k, t_end));
    let samples = sample_trajectory(traj)?;
    let series = |f: fn(&ProfileSample) -> f64| samples.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>();
    let mut fits = BTreeMap::new();
    let mut reference = BTreeMap::new();
    let entries: [(&str, fn(&ProfileSample) -> f64, f64); 5] = [
        ("sup_psi", |s| s.sup_psi, -2.0),
        ("sup_dy_profile_psi", |s| s.sup_dy_profile_psi, -1.2),
        ("omega_0", |s| s.omega_0, -1.0),
        ("omega_pi", |s| s.omega_pi, -1.0),
        ("h2_profile_norm", |s| s.h2_profile_norm, 0.0),
    ];
    for (name, f, r) in entries {
        fits.insert(name.to_string(), fit_power_law(&series(f), window)?);
        reference.insert(name.to_string(), r);
    }
    let l0 = samples[0].l2_norm;
    let ratios = samples.iter().map(|s| s.l2_norm / l0);
    let l2_ratio_range = ratios.fold((f64::MIN, f64::MAX), |(hi, lo), r| (hi.max(r), lo.min(r)));
    Ok(RateReport { k, window, fits, reference, l2_ratio_range, star_norm_drift: traj.star_norm_drift(), samples })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Omega1Residual {
    pub t: f64,
    pub value: f64,
    /// `false` when the reference `‖4tk⁴Λ₃ω‖` vanished and `value` is absolute.
    pub relative: bool,
}

/// `‖(∂_t + ikB)ω₁ + 4tk⁴Λ₃ω‖ / ‖4tk⁴Λ₃ω‖` at `traj.times[index]`.
///
/// `ω₁ = (Δ_k + iktΛ₁ - k²t²(1-B²))ω` in physical time. The time derivative
/// is the centred five-point stencil, or the one-sided fourth-order one at
/// the ends; the samples used must be equally spaced.
pub fn omega1_residual(traj: &LinearTrajectory, index: usize) -> Result<Omega1Residual> {
    let n = traj.times.len();
    if n < 5 || index >= n {
        return Err(Error::InvalidWindow("need five samples around the evaluation time".into()));
    }
    let (start, weights): (usize, [f64; 5]) = if index >= 2 && index + 2 < n {
        (index - 2, [1.0, -8.0, 0.0, 8.0, -1.0])
    } else if index < 2 {
        (index, [-25.0, 48.0, -36.0, 16.0, -3.0])
    } else {
        (index - 4, [3.0, -16.0, 36.0, -48.0, 25.0])
    };
    let ts = &traj.times[start..start + 5];
    let h = ts[1] - ts[0];
    if ts.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs()) {
        return Err(Error::InvalidWindow("differencing stencil is not equally spaced".into()));
    }
    let k = traj.k;
    let t = traj.times[index];
    let mut dw1 = ModeFunction::zeros(k, traj.states[index].n_max());
    for (j, c) in weights.iter().enumerate() {
        if *c != 0.0 {
            let w1 = apply_omega1(&traj.states[start + j], ts[j]);
            dw1 = dw1.add(&w1.scale(C64::new(c / (12.0 * h), 0.0)))?;
        }
    }
    let w = &traj.states[index];
    let w1 = apply_omega1(w, t);
    let forcing = apply_lambda3(w).scale(C64::new(4.0 * t * k.powi(4), 0.0));
    let res = dw1.add(&apply_b(&w1).scale(C64::new(0.0, k)))?.add(&forcing)?;
    let denom = forcing.l2_norm();
    if denom > 1e-300 {
        Ok(Omega1Residual { t, value: res.l2_norm() / denom, relative: true })
    } else {
        Ok(Omega1Residual { t, value: res.l2_norm(), relative: false })
    }
}

/// Green functions of the inner region at one `(t, k)`.
#[derive(Debug, Clone, Serialize)]
pub struct GreenSample {
    pub t: f64,
    pub k: f64,
    #[serde(skip)]
    pub w1: C64,
    #[serde(skip)]
    pub w2: C64,
    pub w1_abs: f64,
    pub w2_abs: f64,
    pub ys: Vec<f64>,
    #[serde(skip)]
    pub f1p: Vec<C64>,
    #[serde(skip)]
    pub f1m: Vec<C64>,
    #[serde(skip)]
    pub f2p: Vec<C64>,
    #[serde(skip)]
    pub f2m: Vec<C64>,
    /// `max_y |f_{1+} + f_{1-} - e^{-itb} W₁|`.
    pub wronskian_defect: f64,
    /// `max_y |f_{1+}(y)| t (t^{-1/2} + y₊)`.
    pub f1_envelope_ratio: f64,
    /// `max_y |f_{2+}(y)| (t^{-1/2} + y₊)³ / (t^{-1/2} + y₋)²`.
    pub f2_envelope_ratio: f64,
}

/// Quadrature nodes needed for 20 nodes per phase period on `[-1/|k|, 1/|k|]`.
pub fn required_quad_points(t: f64, k: f64) -> usize {
    let periods = t * (1.0 - (1.0 / k.abs()).cos()) / (2.0 * std::f64::consts::PI);
    ((20.0 * periods).ceil() as usize).max(15)
}

/// `f_{1±}`, `f_{2±}`, `W₁`, `W₂` on `I = [-1/|k|, 1/|k|]` with `b = cos y`:
///
/// ```text
/// f_{1+}(y) = e^{-itb(y)} ∫_y^{1/|k|} e^{itb},          W₁ = ∫_I e^{itb}
/// f_{2+}(y) = f₂(y) ∫_y^{1/|k|} e^{-itb} f₂^{-2},       W₂ = ∫_I e^{-itb} f₂^{-2}
/// f₂ = b - 1 + 1/(2it),   f_{j-}(y) = f_{j+}(-y).
/// ```
///
/// `quad_points` counts the Gauss–Kronrod nodes of the initial partition;
/// every panel is then refined adaptively.
pub fn green_functions(t: f64, k: f64, quad_points: usize) -> Result<GreenSample> {
    if k.abs() <= 1.0 {
        return Err(Error::WavenumberTooSmall { k });
    }
    if t < k * k {
        return Err(Error::OutOfRange { name: "t", value: t, range: "[k², inf)" });
    }
    let required = required_quad_points(t, k);
    if quad_points < required {
        return Err(Error::UnresolvedPhase { required, given: quad_points });
    }
    let half = 1.0 / k.abs();
    let cells = (quad_points / 15).max(1);
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_panels: 4000 };
    let f2 = |y: f64| C64::new(y.cos() - 1.0, -1.0 / (2.0 * t));
    let g1 = |y: f64| C64::from_polar(1.0, t * y.cos());
    let g2 = |y: f64| C64::from_polar(1.0, -t * y.cos()) / (f2(y) * f2(y));

    // Sample points symmetric about 0; panel integrals accumulated from the right end.
    let ys: Vec<f64> = (0..=cells).map(|j| -half + 2.0 * half * j as f64 / cells as f64).collect();
    let panel = |g: &dyn Fn(f64) -> C64, a: f64, b: f64| quadrature::integrate(g, a, b, 1, opts).value;
    let tail = |g: &dyn Fn(f64) -> C64| {
        let mut acc = vec![ZERO; ys.len()];
        for j in (0..cells).rev() {
            acc[j] = acc[j + 1] + panel(g, ys[j], ys[j + 1]);
        }
        acc
    };
    let i1 = tail(&g1);
    let i2 = tail(&g2);
    let last = ys.len() - 1;
    let f1p: Vec<C64> = ys.iter().zip(&i1).map(|(y, v)| C64::from_polar(1.0, -t * y.cos()) * v).collect();
    let f1m: Vec<C64> = (0..ys.len()).map(|j| f1p[last - j]).collect();
    let f2p: Vec<C64> = ys.iter().zip(&i2).map(|(y, v)| f2(*y) * v).collect();
    let f2m: Vec<C64> = (0..ys.len()).map(|j| f2p[last - j]).collect();

    // Independent evaluation of W on a different partition.
    let w1 = quadrature::integrate(g1, -half, half, 2 * cells + 1, opts).value;
    let w2 = quadrature::integrate(g2, -half, half, 2 * cells + 1, opts).value;

    let sqt = t.powf(-0.5);
    let mut wronskian_defect = 0.0f64;
    let mut f1_envelope_ratio = 0.0f64;
    let mut f2_envelope_ratio = 0.0f64;
    for (j, &y) in ys.iter().enumerate() {
        let lhs = f1p[j] + f1m[j];
        let rhs = C64::from_polar(1.0, -t * y.cos()) * w1;
        wronskian_defect = wronskian_defect.max((lhs - rhs).norm());
        let (yp, ym) = (y.max(0.0), (-y).max(0.0));
        f1_envelope_ratio = f1_envelope_ratio.max(f1p[j].norm() * t * (sqt + yp));
        f2_envelope_ratio = f2_envelope_ratio.max(f2p[j].norm() * (sqt + yp).powi(3) / (sqt + ym).powi(2));
    }
    Ok(GreenSample {
        t,
        k,
        w1,
        w2,
        w1_abs: w1.norm(),
        w2_abs: w2.norm(),
        ys,
        f1p,
        f1m,
        f2p,
        f2m,
        wronskian_defect,
        f1_envelope_ratio,
        f2_envelope_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenScaling {
    pub k: f64,
    pub w1_fit: RateFit,
    pub w2_fit: RateFit,
    pub max_wronskian_defect: f64,
    pub max_f1_envelope_ratio: f64,
    pub max_f2_envelope_ratio: f64,
    pub samples: Vec<GreenSample>,
}

/// `|W₁|` and `|W₂|` exponents over geometrically spaced `t ∈ [t_lo, t_hi]`.
pub fn green_scaling(k: f64, t_lo: f64, t_hi: f64, count: usize) -> Result<GreenScaling> {
    let ts = crate::fit::log_space(t_lo, t_hi, count);
    let samples: Vec<GreenSample> = par::map(&ts, |&t| green_functions(t, k, required_quad_points(t, k).max(600)))
        .into_iter()
        .collect::<Result<_>>()?;
    let w1: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.w1_abs)).collect();
    let w2: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.w2_abs)).collect();
    let w1_fit = fit_power_law(&w1, (t_lo, t_hi))?;
    let w2_fit = fit_power_law(&w2, (t_lo, t_hi))?;
    let max_of = |f: fn(&GreenSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    Ok(GreenScaling {
        k,
        w1_fit,
        w2_fit,
        max_wronskian_defect: max_of(|s| s.wronskian_defect),
        max_f1_envelope_ratio: max_of(|s| s.f1_envelope_ratio),
        max_f2_envelope_ratio: max_of(|s| s.f2_envelope_ratio),
        samples,
    })
}

//! Pseudo-spectral Navier–Stokes in vorticity form on `T_{2πκ} × T_{2π}`.
//!
//! `∂_tΩ - νΔΩ + U·∇Ω = 0`, `U = ∇^⊥Δ^{-1}Ω`. The viscous term is integrated
//! exactly by an integrating factor and the advection term by classical RK4
//! in the Lawson form. Products are formed on the physical grid and dealiased
//! by the 2/3 rule.
//!
//! Storage is the real-to-complex layout: x-index `j ∈ [0, nx/2]` (the `-j`
//! slices are implied by reality) times the full y-range, with coefficient
//! `(j, n)` at `j·ny + (n mod ny)`. Coefficients use the normalized measure,
//! so `‖f‖² = Σ |f̂|²` over the full plane.

use std::cell::RefCell;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::fit::{fit_exponential, fit_power_law, RateFit};
use crate::par;
use crate::spectral::{TorusGrid, C64, ZERO};

/// Named perturbation shapes, each normalized to unit `H³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// `cos(αx) cos y`.
    Mode21,
    /// `cos(αx)`.
    Mode20,
    /// Seeded random coefficients on `1 ≤ j ≤ 3`, `|n| ≤ 4`, decaying like `e^{-(j+|n|)/2}`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub pattern: Pattern,
    /// Amplitude in units of `ν^{1/3}`.
    pub amplitude_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub kappa: f64,
    pub nx: usize,
    pub ny: usize,
    pub nu: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub max_dt: f64,
    pub perturbation: Perturbation,
    pub seed: u64,
    /// Steps between recorded samples; the step size is also re-chosen there.
    pub output_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            nx: 256,
            ny: 256,
            nu: 2e-3,
            t_end: 500.0,
            cfl: 0.4,
            max_dt: 0.05,
            perturbation: Perturbation { pattern: Pattern::Mode21, amplitude_multiplier: 1e-3 },
            seed: 0,
            output_stride: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<TorusGrid> {
        let grid = TorusGrid::new(self.kappa, self.nx, self.ny)?;
        if !(self.nu >= 0.0 && self.nu < 1.0) {
            return Err(Error::OutOfRange { name: "nu", value: self.nu, range: "[0, 1)" });
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::OutOfRange { name: "cfl", value: self.cfl, range: "(0, 0.5]" });
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::OutOfRange { name: "max_dt", value: self.max_dt, range: "(0, inf)" });
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::OutOfRange { name: "t_end", value: self.t_end, range: "[0, inf)" });
        }
        if !(self.perturbation.amplitude_multiplier >= 0.0) {
            return Err(Error::OutOfRange {
                name: "amplitude_multiplier",
                value: self.perturbation.amplitude_multiplier,
                range: "[0, inf)",
            });
        }
        if self.output_stride == 0 {
            return Err(Error::Config("output_stride must be positive".into()));
        }
        Ok(grid)
    }

    /// Perturbation amplitude `multiplier · ν^{1/3}`.
    pub fn amplitude(&self) -> f64 {
        self.perturbation.amplitude_multiplier * self.nu.cbrt()
    }
}

/// Spectral vorticity and the time it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub hat: Vec<C64>,
    pub time: f64,
}

/// Reusable buffers for the transforms and the advection term. Large buffers are
/// kept alive across calls; reallocating them every stage dominates the step cost.
struct Work {
    cols: Vec<C64>,
    rows: Vec<C64>,
    yscratch: Vec<C64>,
    r_in: Vec<f64>,
    r_scratch: Vec<C64>,
    c_scratch: Vec<C64>,
    spec: [Vec<C64>; 4],
    phys: [Vec<f64>; 4],
}

/// Transform plans, wavenumbers and scratch space for one grid.
///
/// A solver is single-threaded; independent runs each own one.
pub struct Solver {
    nx: usize,
    ny: usize,
    nxh: usize,
    nu: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    mask: Vec<bool>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    factors: Option<(f64, Vec<f64>, Vec<f64>)>,
    work: RefCell<Work>,
    stages: [Vec<C64>; 5],
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver").field("nx", &self.nx).field("ny", &self.ny).field("nu", &self.nu).finish()
    }
}

/// Blocked transpose: `dst[c·stride_out + r] = src[r·stride_in + c]` for `r < rows`, `c < cols`.
fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize, stride_in: usize, stride_out: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * stride_out + r] = src[r * stride_in + c];
                }
            }
        }
    }
}

/// Largest index kept by the 2/3 rule: `3K < n`.
fn dealias_limit(n: usize) -> usize {
    (n - 1) / 3
}

impl Solver {
    pub fn new(grid: TorusGrid, nu: f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let nxh = nx / 2 + 1;
        let alpha = grid.alpha();
        let kx: Vec<f64> = (0..nxh).map(|j| j as f64 * alpha).collect();
        let ky: Vec<f64> = (0..ny).map(|i| if i <= ny / 2 { i as f64 } else { i as f64 - ny as f64 }).collect();
        let (jl, nl) = (dealias_limit(nx), dealias_limit(ny) as f64);
        let mut mask = vec![false; nxh * ny];
        for j in 0..=jl.min(nxh - 1) {
            for (i, k) in ky.iter().enumerate() {
                mask[j * ny + i] = k.abs() <= nl;
            }
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(nx);
        let c2r = planner.plan_fft_inverse(nx);
        let fy = fft::forward_plan(ny);
        let iy = fft::inverse_plan(ny);
        let n = nxh * ny;
        let work = Work {
            cols: vec![ZERO; n],
            rows: vec![ZERO; n],
            yscratch: vec![ZERO; fy.get_inplace_scratch_len().max(iy.get_inplace_scratch_len())],
            r_in: r2c.make_input_vec(),
            r_scratch: r2c.make_scratch_vec(),
            c_scratch: c2r.make_scratch_vec(),
            spec: std::array::from_fn(|_| vec![ZERO; n]),
            phys: std::array::from_fn(|_| vec![0.0; nx * ny]),
        };
        Self {
            nx,
            ny,
            nxh,
            nu,
            kx,
            ky,
            mask,
            r2c,
            c2r,
            fy,
            iy,
            factors: None,
            work: RefCell::new(work),
            stages: std::array::from_fn(|_| vec![ZERO; n]),
        }
    }

    pub fn len(&self) -> usize {
        self.nxh * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn k2(&self, idx: usize) -> f64 {
        let (j, i) = (idx / self.ny, idx % self.ny);
        self.kx[j] * self.kx[j] + self.ky[i] * self.ky[i]
    }

    fn active_columns(&self) -> usize {
        dealias_limit(self.nx).min(self.nxh - 1) + 1
    }

    /// Row-major physical samples `f(x_i, y_l)` at `l·nx + i` to coefficients.
    pub fn forward(&self, phys: &[f64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.len()];
        let w = &mut *self.work.borrow_mut();
        self.forward_into(phys, self.nxh, &mut out, &mut w.rows, &mut w.r_in, &mut w.r_scratch, &mut w.yscratch);
        out
    }

    /// Coefficients to row-major physical samples.
    pub fn inverse(&self, hat: &[C64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx * self.ny];
        let w = &mut *self.work.borrow_mut();
        self.inverse_into(hat, self.nxh, &mut out, &mut w.cols, &mut w.rows, &mut w.c_scratch, &mut w.yscratch);
        out
    }

    // Only the first `ncols` x-slices are transformed in y; the rest come out zero
    // (forward) or are assumed zero (inverse).
    #[allow(clippy::too_many_arguments)]
    fn forward_into(
        &self,
        phys: &[f64],
        ncols: usize,
        out: &mut [C64],
        rows: &mut [C64],
        input: &mut [f64],
        scratch: &mut [C64],
        yscratch: &mut [C64],
    ) {
        let (nx, ny, nxh) = (self.nx, self.ny, self.nxh);
        for (l, spec) in rows.chunks_mut(nxh).enumerate() {
            input.copy_from_slice(&phys[l * nx..(l + 1) * nx]);
            self.r2c.process_with_scratch(input, spec, scratch).expect("buffer sizes match the plan");
        }
        transpose(rows, out, ny, ncols, nxh, ny);
        out[ncols * ny..].iter_mut().for_each(|c| *c = ZERO);
        let scale = 1.0 / (nx * ny) as f64;
        for col in out.chunks_mut(ny).take(ncols) {
            self.fy.process_with_scratch(col, yscratch);
            col.iter_mut().for_each(|c| *c *= scale);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn inverse_into(
        &self,
        hat: &[C64],
        ncols: usize,
        out: &mut [f64],
        cols: &mut [C64],
        rows: &mut [C64],
        scratch: &mut [C64],
        yscratch: &mut [C64],
    ) {
        let (nx, ny, nxh) = (self.nx, self.ny, self.nxh);
        let cols = &mut cols[..ncols * ny];
        cols.copy_from_slice(&hat[..ncols * ny]);
        for col in cols.chunks_mut(ny) {
            self.iy.process_with_scratch(col, yscratch);
        }
        // c2r uses its input as scratch, so the padding is cleared every call.
        for row in rows.chunks_mut(nxh) {
            row[ncols..].iter_mut().for_each(|c| *c = ZERO);
        }
        transpose(cols, rows, ncols, ny, ny, nxh);
        for (row, o) in rows.chunks_mut(nxh).zip(out.chunks_mut(nx)) {
            row[0].im = 0.0;
            row[nxh - 1].im = 0.0;
            self.c2r.process_with_scratch(row, o, scratch).expect("buffer sizes match the plan");
        }
    }

    /// Mirror the `j = 0` column so that `f̂(0,-n) = conj f̂(0,n)` holds bit for bit.
    fn symmetrize(&self, hat: &mut [C64]) {
        let ny = self.ny;
        hat[0].im = 0.0;
        for i in 1..ny / 2 {
            let avg = (hat[i] + hat[ny - i].conj()) * 0.5;
            hat[i] = avg;
            hat[ny - i] = avg.conj();
        }
        hat[ny / 2] = ZERO;
    }

    /// Advection term `-(U·∇Ω)^` (dealiased) and `max|u|`, `max|v|` on the grid.
    pub fn advection(&self, w: &[C64]) -> (Vec<C64>, f64, f64) {
        let mut out = vec![ZERO; self.len()];
        let (umax, vmax) = self.advection_into(w, &mut out);
        (out, umax, vmax)
    }

    fn advection_into(&self, w: &[C64], out: &mut [C64]) -> (f64, f64) {
        let work = &mut *self.work.borrow_mut();
        let Work { cols, rows, yscratch, r_in, r_scratch, c_scratch, spec, phys } = work;
        let [u, v, wx, wy] = spec;
        let ny = self.ny;
        for (j, &kx) in self.kx.iter().enumerate() {
            for (i, &ky) in self.ky.iter().enumerate() {
                let idx = j * ny + i;
                if !self.mask[idx] {
                    u[idx] = ZERO;
                    v[idx] = ZERO;
                    wx[idx] = ZERO;
                    wy[idx] = ZERO;
                    continue;
                }
                let k2 = kx * kx + ky * ky;
                let psi = if k2 > 0.0 { -w[idx] / k2 } else { ZERO };
                u[idx] = psi * C64::new(0.0, -ky);
                v[idx] = psi * C64::new(0.0, kx);
                wx[idx] = w[idx] * C64::new(0.0, kx);
                wy[idx] = w[idx] * C64::new(0.0, ky);
            }
        }
        let active = self.active_columns();
        for (f, p) in spec.iter().zip(phys.iter_mut()) {
            self.inverse_into(f, active, p, cols, rows, c_scratch, yscratch);
        }
        let [pu, pv, pwx, pwy] = phys;
        let umax = pu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let vmax = pv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..pu.len() {
            pu[i] = pu[i] * pwx[i] + pv[i] * pwy[i];
        }
        self.forward_into(pu, active, out, rows, r_in, r_scratch, yscratch);
        for (o, &keep) in out.iter_mut().zip(&self.mask) {
            *o = if keep { -*o } else { ZERO };
        }
        out[0] = ZERO;
        self.symmetrize(out);
        (umax, vmax)
    }

    fn ensure_factors(&mut self, dt: f64) {
        if matches!(&self.factors, Some((h, _, _)) if *h == dt) {
            return;
        }
        let half: Vec<f64> = (0..self.len()).map(|i| (-self.nu * self.k2(i) * 0.5 * dt).exp()).collect();
        let full: Vec<f64> = half.iter().map(|e| e * e).collect();
        self.factors = Some((dt, half, full));
    }

    /// One integrating-factor RK4 step of size `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> SimState {
        self.ensure_factors(dt);
        let mut stages = std::mem::take(&mut self.stages);
        let [k1, k2, k3, k4, tmp] = &mut stages;
        let (_, eh, ef) = self.factors.as_ref().expect("factors were just set");
        let w = &state.hat;
        let h2 = 0.5 * dt;
        self.advection_into(w, k1);
        for i in 0..w.len() {
            tmp[i] = (w[i] + k1[i] * h2) * eh[i];
        }
        self.advection_into(tmp, k2);
        for i in 0..w.len() {
            tmp[i] = w[i] * eh[i] + k2[i] * h2;
        }
        self.advection_into(tmp, k3);
        for i in 0..w.len() {
            tmp[i] = w[i] * ef[i] + k3[i] * (dt * eh[i]);
        }
        self.advection_into(tmp, k4);
        let hat = (0..w.len())
            .map(|i| {
                if !self.mask[i] {
                    return ZERO;
                }
                w[i] * ef[i] + (k1[i] * ef[i] + (k2[i] + k3[i]) * (2.0 * eh[i]) + k4[i]) * (dt / 6.0)
            })
            .collect();
        self.stages = stages;
        SimState { hat, time: state.time + dt }
    }

    /// Step from the current velocity: `dt = min(max_dt, cfl / (max|u|/Δx + max|v|/Δy))`.
    pub fn cfl_dt(&self, state: &SimState, grid: &TorusGrid, cfl: f64, max_dt: f64) -> f64 {
        let (_, umax, vmax) = self.advection(&state.hat);
        let dx = grid.period_x() / self.nx as f64;
        let dy = 2.0 * std::f64::consts::PI / self.ny as f64;
        let rate = umax / dx + vmax / dy;
        if rate > 0.0 {
            (cfl / rate).min(max_dt)
        } else {
            max_dt
        }
    }

    // Norms over the full plane: columns j ≥ 1 stand for ±j.

    fn column_weight(&self, idx: usize) -> f64 {
        if idx < self.ny {
            1.0
        } else {
            2.0
        }
    }

    pub fn l2_norm(&self, hat: &[C64]) -> f64 {
        hat.iter().enumerate().map(|(i, c)| self.column_weight(i) * c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖P_≠ f‖_{L²}`.
    pub fn nonzero_l2(&self, hat: &[C64]) -> f64 {
        (2.0 * hat[self.ny..].iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `Σ w(k) |f̂|²` over the nonzero x-modes.
    fn nonzero_weighted(&self, hat: &[C64], w: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for idx in self.ny..hat.len() {
            let (kx, ky) = (self.kx[idx / self.ny], self.ky[idx % self.ny]);
            acc += 2.0 * w(kx, ky) * hat[idx].norm_sqr();
        }
        acc
    }

    /// `‖P_≠ ∇^⊥Δ^{-1} f‖_{L²}`.
    pub fn nonzero_velocity_l2(&self, hat: &[C64]) -> f64 {
        self.nonzero_weighted(hat, |kx, ky| 1.0 / (kx * kx + ky * ky)).sqrt()
    }

    /// Energy `‖U‖²` and enstrophy `‖Ω‖²`.
    pub fn energy_enstrophy(&self, hat: &[C64]) -> (f64, f64) {
        let mut e = 0.0;
        let mut z = 0.0;
        for (idx, c) in hat.iter().enumerate() {
            let k2 = self.k2(idx);
            let w = self.column_weight(idx) * c.norm_sqr();
            z += w;
            if k2 > 0.0 {
                e += w / k2;
            }
        }
        (e, z)
    }

    /// `|ω̂_j(y)|` for the `j`-th x-slice at the point `y`.
    pub fn slice_at(&self, hat: &[C64], j: usize, y: f64) -> f64 {
        let col = &hat[j * self.ny..(j + 1) * self.ny];
        col.iter().zip(&self.ky).map(|(c, k)| c * C64::from_polar(1.0, k * y)).sum::<C64>().norm()
    }

    /// `|V'(y)| = |P₀Ω(y)|` on the y-grid.
    fn shear_slope(&self, hat: &[C64]) -> Vec<f64> {
        let mut col = hat[..self.ny].to_vec();
        self.iy.process(&mut col);
        col.iter().map(|z| z.re.abs()).collect()
    }

    /// `‖|V'|^{1/2} ∂_x∇Δ^{-1}P_≠Ω‖²` with `V' = -P₀Ω` taken from the same state.
    fn weighted_gradient_sq(&self, hat: &[C64]) -> f64 {
        let n = self.len();
        let mut g1 = vec![ZERO; n];
        let mut g2 = vec![ZERO; n];
        for idx in self.ny..n {
            let (kx, ky) = (self.kx[idx / self.ny], self.ky[idx % self.ny]);
            let k2 = kx * kx + ky * ky;
            g1[idx] = hat[idx] * (kx * kx / k2);
            g2[idx] = hat[idx] * (kx * ky / k2);
        }
        let p1 = self.inverse(&g1);
        let p2 = self.inverse(&g2);
        let slope = self.shear_slope(hat);
        let mut acc = 0.0;
        for l in 0..self.ny {
            for i in 0..self.nx {
                let q = l * self.nx + i;
                acc += slope[l] * (p1[q] * p1[q] + p2[q] * p2[q]);
            }
        }
        acc / (self.nx * self.ny) as f64
    }
}

fn pattern_field(solver: &Solver, grid: &TorusGrid, pattern: Pattern, seed: u64) -> Vec<C64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let alpha = grid.alpha();
    let p = grid.period_x();
    let mut hat = match pattern {
        Pattern::Mode21 | Pattern::Mode20 => {
            let phys: Vec<f64> = (0..ny)
                .flat_map(|l| {
                    let y = 2.0 * std::f64::consts::PI * l as f64 / ny as f64;
                    (0..nx).map(move |i| {
                        let x = p * i as f64 / nx as f64;
                        let base = (alpha * x).cos();
                        if pattern == Pattern::Mode21 {
                            base * y.cos()
                        } else {
                            base
                        }
                    })
                })
                .collect();
            solver.forward(&phys)
        }
        Pattern::Random => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut hat = vec![ZERO; solver.len()];
            for j in 1..=3usize {
                for n in -4i64..=4 {
                    let decay = (-((j as i64 + n.abs()) as f64) / 2.0).exp();
                    let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
                    hat[j * ny + n.rem_euclid(ny as i64) as usize] = c;
                }
            }
            hat
        }
    };
    for (h, &keep) in hat.iter_mut().zip(&solver.mask) {
        if !keep {
            *h = ZERO;
        }
    }
    hat[..ny].iter_mut().for_each(|c| *c = ZERO);
    let h3 = solver.nonzero_weighted(&hat, |kx, ky| (kx * kx + ky * ky).powi(3)).sqrt();
    hat.iter_mut().for_each(|c| *c /= h3);
    hat
}

/// `sin y` in coefficient form.
pub fn shear_hat(solver: &Solver, scale: f64) -> Vec<C64> {
    let mut hat = vec![ZERO; solver.len()];
    hat[1] = C64::new(0.0, -0.5 * scale);
    hat[solver.ny - 1] = C64::new(0.0, 0.5 * scale);
    hat
}

/// `Ω₀ = sin y + amplitude · pattern`.
pub fn initial_state(solver: &Solver, config: &SimConfig) -> Result<SimState> {
    let grid = config.validate()?;
    let mut hat = shear_hat(solver, 1.0);
    let amp = config.amplitude();
    if amp > 0.0 {
        let p = pattern_field(solver, &grid, config.perturbation.pattern, config.seed);
        for (h, q) in hat.iter_mut().zip(p) {
            *h += q * amp;
        }
    }
    solver.symmetrize(&mut hat);
    Ok(SimState { hat, time: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnsSample {
    pub t: f64,
    pub omega_neq_l2: f64,
    pub u_neq_l2: f64,
    pub shear_deviation_l2: f64,
    /// `|ω̂_α(t, 0)|` for the first x-slice.
    pub depletion_probe_0: f64,
    /// `|ω̂_α(t, π)|`.
    pub depletion_probe_pi: f64,
}

/// Components of the space-time norm `X_I` of `Ω_≠`, accumulated by the trapezoid rule
/// over the recorded samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct XiNorm {
    pub sup_l2: f64,
    pub nu_half_grad: f64,
    pub dx_half_grad_inv_lap: f64,
    pub weighted_dx_grad_inv_lap: f64,
}

impl XiNorm {
    pub fn total(&self) -> f64 {
        self.sup_l2 + self.nu_half_grad + self.dx_half_grad_inv_lap + self.weighted_dx_grad_inv_lap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Completed,
    /// A non-finite value appeared; the bundle ends at the last good state.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct RunBundle {
    pub config: SimConfig,
    pub samples: Vec<DnsSample>,
    pub xi: XiNorm,
    pub status: RunStatus,
    pub final_state: SimState,
    pub steps: usize,
    pub runtime_s: f64,
}

impl RunBundle {
    pub fn series(&self, f: impl Fn(&DnsSample) -> f64) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, f(s))).collect()
    }
}

fn sample(solver: &Solver, state: &SimState, nu: f64) -> DnsSample {
    let shear = shear_hat(solver, (-nu * state.time).exp());
    let dev: Vec<C64> = state.hat.iter().zip(&shear).map(|(a, b)| a - b).collect();
    DnsSample {
        t: state.time,
        omega_neq_l2: solver.nonzero_l2(&state.hat),
        u_neq_l2: solver.nonzero_velocity_l2(&state.hat),
        shear_deviation_l2: solver.l2_norm(&dev),
        depletion_probe_0: solver.slice_at(&state.hat, 1, 0.0),
        depletion_probe_pi: solver.slice_at(&state.hat, 1, std::f64::consts::PI),
    }
}

struct XiAccumulator {
    prev: Option<(f64, [f64; 3])>,
    sums: [f64; 3],
    sup: f64,
}

impl XiAccumulator {
    fn push(&mut self, solver: &Solver, state: &SimState) {
        let h = &state.hat;
        let vals = [
            solver.nonzero_weighted(h, |kx, ky| kx * kx + ky * ky),
            solver.nonzero_weighted(h, |kx, ky| kx.abs() / (kx * kx + ky * ky)),
            solver.weighted_gradient_sq(h),
        ];
        self.sup = self.sup.max(solver.nonzero_l2(h));
        if let Some((t0, v0)) = self.prev {
            let dt = state.time - t0;
            for i in 0..3 {
                self.sums[i] += 0.5 * dt * (v0[i] + vals[i]);
            }
        }
        self.prev = Some((state.time, vals));
    }

    fn finish(&self, nu: f64) -> XiNorm {
        XiNorm {
            sup_l2: self.sup,
            nu_half_grad: (nu * self.sums[0]).sqrt(),
            dx_half_grad_inv_lap: self.sums[1].sqrt(),
            weighted_dx_grad_inv_lap: self.sums[2].sqrt(),
        }
    }
}

/// [`run_experiment_with`] without an observer.
pub fn run_experiment(config: &SimConfig) -> Result<RunBundle> {
    run_experiment_with(config, |_| {})
}

/// Integrate to `t_end`, recording a sample every `output_stride` steps and at the end.
///
/// `observe` sees each sample as it is produced.
pub fn run_experiment_with(config: &SimConfig, mut observe: impl FnMut(&DnsSample)) -> Result<RunBundle> {
    let grid = config.validate()?;
    let started = Instant::now();
    let mut solver = Solver::new(grid, config.nu);
    let mut state = initial_state(&solver, config)?;
    let mut samples = Vec::new();
    let mut xi = XiAccumulator { prev: None, sums: [0.0; 3], sup: 0.0 };
    let first = sample(&solver, &state, config.nu);
    observe(&first);
    samples.push(first);
    xi.push(&solver, &state);
    let mut steps = 0usize;
    let mut status = RunStatus::Completed;
    let mut dt = solver.cfl_dt(&state, &grid, config.cfl, config.max_dt);
    while state.time < config.t_end * (1.0 - 1e-12) {
        let h = dt.min(config.t_end - state.time);
        let next = solver.step(&state, h);
        if next.hat.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            log::warn!("non-finite vorticity at t = {}; stopping at last good state", next.time);
            status = RunStatus::Aborted;
            break;
        }
        state = next;
        steps += 1;
        let at_end = state.time >= config.t_end * (1.0 - 1e-12);
        if steps % config.output_stride == 0 || at_end {
            let s = sample(&solver, &state, config.nu);
            observe(&s);
            samples.push(s);
            xi.push(&solver, &state);
            dt = solver.cfl_dt(&state, &grid, config.cfl, config.max_dt);
        }
    }
    Ok(RunBundle {
        config: *config,
        samples,
        xi: xi.finish(config.nu),
        status,
        final_state: state,
        steps,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// Fixed-step integration used by verification studies.
pub fn integrate_fixed(solver: &mut Solver, state: &SimState, dt: f64, steps: usize) -> Result<SimState> {
    let mut s = state.clone();
    for _ in 0..steps {
        s = solver.step(&s, dt);
        if s.hat.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite { t: s.time });
        }
    }
    Ok(s)
}

/// Relative drift of energy and enstrophy after `steps` fixed inviscid steps.
///
/// The initial data is built from `config` (its `nu` only sets the amplitude scale);
/// the integration itself runs with `ν = 0`.
pub fn conservation_drift(config: &SimConfig, dt: f64, steps: usize) -> Result<(f64, f64)> {
    let grid = config.validate()?;
    let mut solver = Solver::new(grid, 0.0);
    let s0 = initial_state(&solver, config)?;
    let (e0, z0) = solver.energy_enstrophy(&s0.hat);
    let end = integrate_fixed(&mut solver, &s0, dt, steps)?;
    let (e1, z1) = solver.energy_enstrophy(&end.hat);
    Ok(((e1 - e0).abs() / e0, (z1 - z0).abs() / z0))
}

/// Observed order from three runs to `t` with steps `dt`, `dt/2`, `dt/4`:
/// `log2(‖u_dt - u_{dt/2}‖ / ‖u_{dt/2} - u_{dt/4}‖)`, with both differences returned.
pub fn refinement_order(config: &SimConfig, t: f64, dt: f64) -> Result<(f64, f64, f64)> {
    let grid = config.validate()?;
    let mut solver = Solver::new(grid, config.nu);
    let s0 = initial_state(&solver, config)?;
    let steps = (t / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t).abs() > 1e-9 * t {
        return Err(Error::Config("t must be a multiple of dt".into()));
    }
    let mut finals = Vec::with_capacity(3);
    for level in 0..3u32 {
        let m = 1usize << level;
        finals.push(integrate_fixed(&mut solver, &s0, dt / m as f64, steps * m)?.hat);
    }
    let diff = |a: &[C64], b: &[C64]| {
        let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        solver.l2_norm(&d)
    };
    let d1 = diff(&finals[0], &finals[1]);
    let d2 = diff(&finals[1], &finals[2]);
    Ok(((d1 / d2).log2(), d1, d2))
}

/// Exponential decay rate of `‖Ω_≠‖` on `[ν^{-1/2}, min(t_end, ν^{-1})]`.
pub fn enhanced_dissipation_fit(series: &[(f64, f64)], nu: f64, t_end: f64) -> Result<RateFit> {
    if !(nu > 0.0) {
        return Err(Error::OutOfRange { name: "nu", value: nu, range: "(0, 1)" });
    }
    let window = (nu.powf(-0.5), t_end.min(1.0 / nu));
    let covered = series.first().is_some_and(|s| s.0 <= window.0)
        && series.last().is_some_and(|s| s.0 >= window.1 * (1.0 - 1e-9));
    if !covered || window.0 >= window.1 {
        return Err(Error::InvalidWindow(format!("series does not cover [{:.3}, {:.3}]", window.0, window.1)));
    }
    fit_exponential(series, window)
}

/// Power-law fit of `‖Ω_≠‖` on an arbitrary window.
pub fn phase_exponent(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    fit_power_law(series, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    ReturnsToShear,
    NotDecayed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanEntry {
    pub nu: f64,
    pub multiplier: f64,
    pub initial: f64,
    pub final_value: f64,
    pub t_final: f64,
    pub class: Classification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Per ν: the smallest multiplier above which no run returned to the shear.
    pub transitions: Vec<(f64, Option<f64>)>,
}

/// Classify each `(ν, multiplier)` by whether `‖Ω_≠‖` falls below 1% of its initial value
/// by `min(t_end, 1/ν)`.
pub fn threshold_scan(base: &SimConfig, nu_list: &[f64], multipliers: &[f64], pattern: Pattern) -> Result<ScanReport> {
    let positive: Vec<f64> = multipliers.iter().cloned().filter(|m| *m > 0.0).collect();
    let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = multipliers.iter().cloned().fold(0.0, f64::max);
    if !(lo <= 0.01 && hi >= 10.0) {
        return Err(Error::Config("multipliers must span at least [0.01, 10]".into()));
    }
    let mut jobs = Vec::new();
    for &nu in nu_list {
        for &m in multipliers {
            let mut c = *base;
            c.nu = nu;
            c.t_end = base.t_end.min(1.0 / nu);
            c.perturbation = Perturbation { pattern, amplitude_multiplier: m };
            c.validate()?;
            jobs.push(c);
        }
    }
    let runs = par::map(&jobs, |c| (c.nu, c.perturbation.amplitude_multiplier, run_experiment(c)));
    let mut entries = Vec::with_capacity(runs.len());
    for (nu, m, run) in runs {
        let entry = match run {
            Ok(b) => {
                let initial = b.samples[0].omega_neq_l2;
                let last = *b.samples.last().expect("at least the initial sample");
                let class = match b.status {
                    RunStatus::Aborted => Classification::Inconclusive,
                    RunStatus::Completed if initial == 0.0 || last.omega_neq_l2 < 0.01 * initial => {
                        Classification::ReturnsToShear
                    }
                    RunStatus::Completed => Classification::NotDecayed,
                };
                ScanEntry { nu, multiplier: m, initial, final_value: last.omega_neq_l2, t_final: last.t, class }
            }
            Err(e) => {
                log::warn!("scan run nu={nu} multiplier={m} failed: {e}");
                ScanEntry { nu, multiplier: m, initial: f64::NAN, final_value: f64::NAN, t_final: 0.0, class: Classification::Inconclusive }
            }
        };
        entries.push(entry);
    }
    let transitions = nu_list
        .iter()
        .map(|&nu| {
            let mut rows: Vec<&ScanEntry> = entries.iter().filter(|e| e.nu == nu).collect();
            rows.sort_by(|a, b| a.multiplier.total_cmp(&b.multiplier));
            let mut t = None;
            for (i, r) in rows.iter().enumerate() {
                if r.class != Classification::ReturnsToShear {
                    if rows[i..].iter().all(|q| q.class == Classification::NotDecayed) {
                        t = Some(r.multiplier);
                    }
                    break;
                }
            }
            (nu, t)
        })
        .collect();
    Ok(ScanReport { entries, transitions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(nu: f64) -> SimConfig {
        SimConfig { nx: 32, ny: 32, nu, t_end: 1.0, max_dt: 0.01, output_stride: 10, ..Default::default() }
    }

    #[test]
    fn transforms_invert() {
        let grid = TorusGrid::new(0.5, 16, 24).unwrap();
        let s = Solver::new(grid, 0.0);
        let phys: Vec<f64> = (0..16 * 24).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let back = s.inverse(&s.forward(&phys));
        for (a, b) in phys.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn shear_is_steady_under_advection() {
        let c = small(1e-2);
        let grid = c.validate().unwrap();
        let s = Solver::new(grid, c.nu);
        let st = SimState { hat: shear_hat(&s, 1.0), time: 0.0 };
        let (adv, umax, vmax) = s.advection(&st.hat);
        assert!(adv.iter().all(|z| z.norm() < 1e-15));
        assert!((umax - 1.0).abs() < 1e-12 && vmax < 1e-15);
    }

    #[test]
    fn exact_shear_decay() {
        let nu = 1e-2;
        let mut c = small(nu);
        c.perturbation.amplitude_multiplier = 0.0;
        c.t_end = 0.1 / nu;
        c.max_dt = 0.05;
        let b = run_experiment(&c).unwrap();
        let last = b.samples.last().unwrap();
        assert!((last.t - c.t_end).abs() < 1e-12);
        assert!(last.shear_deviation_l2 / ((-nu * last.t).exp() * 0.5f64.sqrt()) < 1e-10);
        assert!(b.samples.iter().all(|s| s.omega_neq_l2 == 0.0));
    }

    #[test]
    fn reality_and_mean_exact() {
        let mut c = small(1e-2);
        c.perturbation = Perturbation { pattern: Pattern::Random, amplitude_multiplier: 2.0 };
        c.seed = 11;
        let grid = c.validate().unwrap();
        let mut s = Solver::new(grid, c.nu);
        let st = initial_state(&s, &c).unwrap();
        let end = integrate_fixed(&mut s, &st, 0.01, 20).unwrap();
        assert_eq!(end.hat[0], ZERO);
        for i in 1..c.ny / 2 {
            assert_eq!(end.hat[i], end.hat[c.ny - i].conj());
        }
        assert!(end.hat.iter().zip(&s.mask).all(|(h, &m)| m || *h == ZERO));
    }

    #[test]
    fn pattern_is_unit_h3() {
        let c = small(1e-2);
        let grid = c.validate().unwrap();
        let s = Solver::new(grid, c.nu);
        for p in [Pattern::Mode21, Pattern::Mode20, Pattern::Random] {
            let h = pattern_field(&s, &grid, p, 3);
            let h3 = s.nonzero_weighted(&h, |kx, ky| (kx * kx + ky * ky).powi(3)).sqrt();
            assert!((h3 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_perturbation_stays_zero() {
        let mut c = small(1e-2);
        c.perturbation.amplitude_multiplier = 0.0;
        let b = run_experiment(&c).unwrap();
        assert!(b.samples.iter().all(|s| s.omega_neq_l2 == 0.0));
        assert!(enhanced_dissipation_fit(&b.series(|s| s.omega_neq_l2), 0.5, 10.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small(1e-2);
        c.cfl = 0.8;
        assert!(c.validate().is_err());
        let mut c = small(1e-2);
        c.perturbation.amplitude_multiplier = -1.0;
        assert!(c.validate().is_err());
        let mut c = small(1e-2);
        c.nx = 30;
        c.kappa = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scan_requires_span() {
        let c = small(1e-2);
        assert!(threshold_scan(&c, &[1e-2], &[0.1, 1.0], Pattern::Mode21).is_err());
    }

    #[test]
    fn tiny_scan() {
        let mut c = SimConfig { nx: 16, ny: 16, t_end: 4.0, max_dt: 0.05, output_stride: 20, ..Default::default() };
        c.cfl = 0.4;
        let r = threshold_scan(&c, &[0.3], &[0.0, 0.01, 10.0], Pattern::Mode21).unwrap();
        assert_eq!(r.entries.len(), 3);
        assert_eq!(r.entries[0].class, Classification::ReturnsToShear);
        assert_eq!(r.transitions.len(), 1);
    }

    #[test]
    fn inviscid_conservation() {
        let mut c = small(1e-3);
        c.perturbation = Perturbation { pattern: Pattern::Random, amplitude_multiplier: 3.0 };
        let (de, dz) = conservation_drift(&c, 1e-2, 1000).unwrap();
        assert!(de < 1e-9 && dz < 1e-9, "{de} {dz}");
    }

    #[test]
    fn fourth_order_in_time() {
        let mut c = small(1e-2);
        c.perturbation = Perturbation { pattern: Pattern::Random, amplitude_multiplier: 3.0 };
        let (order, d1, _) = refinement_order(&c, 2.0, 0.1).unwrap();
        assert!(d1 > 1e-12);
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn zero_mode_follows_heat_flow_in_linear_regime() {
        let mut c = small(2e-2);
        c.perturbation = Perturbation { pattern: Pattern::Mode21, amplitude_multiplier: 1e-3 };
        let grid = c.validate().unwrap();
        let mut s = Solver::new(grid, c.nu);
        let s0 = initial_state(&s, &c).unwrap();
        let end = integrate_fixed(&mut s, &s0, 0.02, 250).unwrap();
        let mut err = 0.0f64;
        for i in 0..c.ny {
            let n = s.ky[i];
            let heat = s0.hat[i] * (-c.nu * n * n * end.time).exp();
            err = err.max((end.hat[i] - heat).norm());
        }
        assert!(err < 1e-8, "{err}");
    }
}

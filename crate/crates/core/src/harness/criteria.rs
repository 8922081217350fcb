//! The acceptance criteria, each evaluated at its fixed settings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::QuasilinearConfig;
use super::experiments::quasilinear_ledger;
use crate::coercivity::{check_sequence_inequalities, coercive_matrix_sweep, default_k_set, default_s_grid};
use crate::dns::{self, Pattern, Perturbation, SimConfig, Solver};
use crate::error::Result;
use crate::fit::fit_power_law;
use crate::linear_euler::{evolve_linearized_euler, green_scaling, measure_rates, omega1_residual, InitialProfile};
use crate::operators::identity_residuals;
use crate::quasilinear::morse_transform;
use crate::resolvent::{self, ladder_spread, summarize, SliceSummary};
use crate::shear::ShearProfile;

pub const ALL: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
    /// Context that does not enter the verdict.
    pub info: Vec<String>,
    pub runtime_s: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({:.1} s) {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.runtime_s,
            self.summary
        )
    }
}

struct Draft {
    pass: bool,
    summary: String,
    metrics: BTreeMap<String, f64>,
    info: Vec<String>,
}

impl Draft {
    fn new() -> Self {
        Self { pass: true, summary: String::new(), metrics: BTreeMap::new(), info: Vec::new() }
    }

    /// Record a metric and fold its check into the verdict.
    fn check(&mut self, name: &str, value: f64, ok: bool) {
        self.metrics.insert(name.to_string(), value);
        if !(ok && value.is_finite()) {
            self.pass = false;
            if !self.summary.is_empty() {
                self.summary.push_str("; ");
            }
            self.summary.push_str(&format!("{name} = {value:.6e} out of bounds"));
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "sequence inequalities",
        2 => "operator identities",
        3 => "coercive decomposition",
        4 => "linearized Euler decay",
        5 => "omega_1 residual order",
        6 => "resolvent constants",
        7 => "Green function scaling",
        8 => "Morse transform",
        9 => "quasilinear error envelope",
        10 => "DNS verification",
        11 => "DNS scaling",
        _ => "unknown",
    }
}

/// Evaluate one criterion. Numerical errors count as failures, not as errors.
pub fn evaluate(id: u8) -> CriterionOutcome {
    let clock = Instant::now();
    let result = match id {
        1 => c1(),
        2 => c2(),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(),
        8 => c8(),
        9 => c9(),
        10 => c10(),
        11 => c11(),
        _ => Err(crate::Error::Config(format!("no criterion {id}"))),
    };
    let d = result.unwrap_or_else(|e| Draft { pass: false, summary: format!("error: {e}"), ..Draft::new() });
    CriterionOutcome {
        id,
        title: title(id).to_string(),
        pass: d.pass,
        summary: if d.pass && d.summary.is_empty() { "all checks within bounds".into() } else { d.summary },
        metrics: d.metrics,
        info: d.info,
        runtime_s: clock.elapsed().as_secs_f64(),
    }
}

fn c1() -> Result<Draft> {
    let mut d = Draft::new();
    let clock = Instant::now();
    let r = check_sequence_inequalities(&default_k_set(), 500, &default_s_grid())?;
    let runtime = clock.elapsed().as_secs_f64();
    d.check("min_slack_b", r.min_slack_b, r.min_slack_b >= -1e-9);
    d.check("min_slack_c", r.min_slack_c, r.min_slack_c >= -1e-9);
    d.check("runtime_s", runtime, runtime < 10.0);
    d.metric("points", r.points as f64);
    Ok(d)
}

fn c2() -> Result<Draft> {
    let mut d = Draft::new();
    let base = identity_residuals(2.0, 128, 8)?;
    let wide = identity_residuals(2.0, 128, 16)?;
    for ((name, r8), (_, r16)) in base.iter().zip(&wide) {
        d.check(&format!("{name}_margin8"), *r8, *r8 <= 1e-10);
        d.check(&format!("{name}_margin16"), *r16, *r16 <= 1e-10);
        let change = (r8 - r16).abs();
        d.check(&format!("{name}_margin_change"), change, change <= 1e-10);
    }
    Ok(d)
}

fn c3() -> Result<Draft> {
    let mut d = Draft::new();
    for c in coercive_matrix_sweep(&[2.0, 4.0], &[0.0, 0.2, 0.4], 128)? {
        let tag = format!("k{}_s{}", c.k, c.s);
        d.check(&format!("residual_{tag}"), c.decomposition_residual, c.decomposition_residual <= 1e-9);
        d.check(&format!("min_eig_{tag}"), c.min_eig, c.min_eig >= -1e-8);
    }
    Ok(d)
}

fn c4() -> Result<Draft> {
    let mut d = Draft::new();
    let clock = Instant::now();
    let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.25).collect();
    let traj = evolve_linearized_euler(&InitialProfile::Smooth.build(2.0, 256), &times, 1e-10)?;
    let rates = measure_rates(&traj, Some((10.0, 100.0)))?;
    let runtime = clock.elapsed().as_secs_f64();
    d.check("star_norm_drift", rates.star_norm_drift, rates.star_norm_drift <= 1e-6);
    let exp = |name: &str| rates.fits[name].exponent;
    d.check("sup_psi_exponent", exp("sup_psi"), (exp("sup_psi") + 2.0).abs() <= 0.3);
    d.check("omega_0_exponent", exp("omega_0"), (exp("omega_0") + 1.0).abs() <= 0.3);
    d.check("omega_pi_exponent", exp("omega_pi"), (exp("omega_pi") + 1.0).abs() <= 0.3);
    let (hi, lo) = rates.l2_ratio_range;
    d.check("l2_ratio_max", hi, hi <= 3.0);
    d.check("l2_ratio_min", lo, lo >= 1.0 / 3.0);
    d.check("runtime_s", runtime, runtime < 60.0);
    let late: Vec<(f64, f64)> = rates.samples.iter().map(|s| (s.t, s.sup_psi)).collect();
    if let Ok(f) = fit_power_law(&late, (50.0, 100.0)) {
        d.info.push(format!("sup|psi| exponent on [50, 100]: {:.3}", f.exponent));
    }
    d.info.push("resolution Ny = 512 (|n| <= 256); Ny = 256 under-resolves kt at t = 100".into());
    Ok(d)
}

fn c5() -> Result<Draft> {
    let mut d = Draft::new();
    let w0 = InitialProfile::Smooth.build(2.0, 64);
    let residual = |h: f64| -> Result<f64> {
        let mut ts = vec![0.0];
        ts.extend((-2..=2).map(|j| 5.0 + j as f64 * h));
        let traj = evolve_linearized_euler(&w0, &ts, 1e-14)?;
        Ok(omega1_residual(&traj, 3)?.value)
    };
    let r: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| residual(h)).collect::<Result<_>>()?;
    for (i, v) in r.iter().enumerate() {
        d.metric(&format!("residual_{i}"), *v);
    }
    let o1 = (r[0] / r[1]).log2();
    let o2 = (r[1] / r[2]).log2();
    d.check("order_coarse", o1, o1 >= 3.0);
    d.check("order_fine", o2, o2 >= 3.0);
    Ok(d)
}

fn slice_ratio(a: &[SliceSummary], b: &[SliceSummary], f: fn(&SliceSummary) -> f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (f(x) / f(y)).max(f(y) / f(x))).fold(1.0, f64::max)
}

fn c6() -> Result<Draft> {
    let mut d = Draft::new();
    let v = ShearProfile::cosine();
    let ks = resolvent::default_k_set(2.0, 20.0);
    let ls = resolvent::lambda_grid(-1.5, 1.5, 31);
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let nus = [1e-1, 1e-2, 1e-3];
    let ray: Vec<Vec<SliceSummary>> = [128, 256]
        .iter()
        .map(|&n| Ok(summarize(&resolvent::rayleigh_constant_sweep(&v, &ks, &ls, &eps, n)?)))
        .collect::<Result<_>>()?;
    let ns: Vec<Vec<SliceSummary>> = [128, 256]
        .iter()
        .map(|&n| Ok(summarize(&resolvent::ns_constant_sweep(&v, &ks, &ls, &nus, n)?)))
        .collect::<Result<_>>()?;
    for (n, s) in [128, 256].iter().zip(&ray) {
        for x in s {
            d.metric(&format!("rayleigh_sup_N{n}_eps{:e}", x.eps_or_nu), x.sup_ratio1);
        }
        let spread = ladder_spread(s);
        d.check(&format!("rayleigh_ladder_spread_N{n}"), spread, spread < 2.0);
    }
    let rn = slice_ratio(&ray[0], &ray[1], |s| s.sup_ratio1);
    d.check("rayleigh_N_ratio", rn, rn < 2.0);
    for (n, s) in [128, 256].iter().zip(&ns) {
        for x in s {
            d.metric(&format!("ns_sup1_N{n}_nu{:e}", x.eps_or_nu), x.sup_ratio1);
            d.metric(&format!("ns_sup2_N{n}_nu{:e}", x.eps_or_nu), x.sup_ratio2);
        }
        let s1 = ladder_spread(s);
        let s2 = s.iter().map(|x| x.sup_ratio2).fold(0.0, f64::max)
            / s.iter().map(|x| x.sup_ratio2).fold(f64::INFINITY, f64::min);
        d.check(&format!("ns_ladder_spread_ratio1_N{n}"), s1, s1 < 2.0);
        d.check(&format!("ns_ladder_spread_ratio2_N{n}"), s2, s2 < 2.0);
    }
    let n1 = slice_ratio(&ns[0], &ns[1], |s| s.sup_ratio1);
    let n2 = slice_ratio(&ns[0], &ns[1], |s| s.sup_ratio2);
    d.check("ns_N_ratio1", n1, n1 < 2.0);
    d.check("ns_N_ratio2", n2, n2 < 2.0);
    let finite = ray.iter().chain(&ns).flatten().all(|s| s.sup_ratio1.is_finite() && s.sup_ratio2.is_finite());
    d.check("all_finite", if finite { 1.0 } else { 0.0 }, finite);
    d.info.push("small-eps Rayleigh suprema at N = 128, 256 sit on the lambda = 0 truncation eigenvalue and scale like 1/(eps N)".into());
    Ok(d)
}

fn c7() -> Result<Draft> {
    let mut d = Draft::new();
    let g = green_scaling(2.0, 1e2, 1e4, 41)?;
    d.check("w1_exponent", g.w1_fit.exponent, (g.w1_fit.exponent + 0.5).abs() <= 0.05);
    d.check("w2_exponent", g.w2_fit.exponent, (g.w2_fit.exponent - 1.5).abs() <= 0.05);
    d.check("wronskian_defect", g.max_wronskian_defect, g.max_wronskian_defect <= 1e-9);
    Ok(d)
}

fn c8() -> Result<Draft> {
    let mut d = Draft::new();
    let m = morse_transform(&ShearProfile::from_cosine_series(&[0.0, 1.0, 0.01])?)?;
    d.check("residual_perturbed", m.residual, m.residual <= 1e-8);
    for (a, dd) in [(1.0, 0.0), (0.5, 0.3), (2.0, -1.0), (0.1, 5.0)] {
        let t = morse_transform(&ShearProfile::affine(a, dd)?)?;
        let tag = format!("a{a}_d{dd}");
        let coeff = (t.a - a).abs().max((t.d - dd).abs());
        d.check(&format!("coefficients_{tag}"), coeff, coeff <= 1e-13 * (1.0 + a.abs() + dd.abs()));
        let dev = t.deviation_from_identity(256);
        d.check(&format!("theta_deviation_{tag}"), dev, dev <= 1e-13);
        d.check(&format!("residual_{tag}"), t.residual, t.residual <= 1e-13 * (1.0 + a.abs() + dd.abs()));
    }
    Ok(d)
}

fn c9() -> Result<Draft> {
    let mut d = Draft::new();
    let coarse = QuasilinearConfig { ny: 256, dt: 0.05, ..QuasilinearConfig::default() };
    let fine = QuasilinearConfig { ny: 512, dt: 0.025, ..QuasilinearConfig::default() };
    let (_, lc, _) = quasilinear_ledger(&coarse)?;
    let (_, lf, _) = quasilinear_ledger(&fine)?;
    d.metric("envelope_c_coarse", lc.envelope_c);
    d.metric("envelope_c_fine", lf.envelope_c);
    let ratio = lf.envelope_c / lc.envelope_c;
    d.check("envelope_ratio", ratio, ratio > 0.5 && ratio < 2.0);
    if lc.noise_dominated || lf.noise_dominated {
        d.info.push("time differencing is noise dominated on part of the ledger".into());
    }
    Ok(d)
}

fn small_config(nu: f64, multiplier: f64, pattern: Pattern) -> SimConfig {
    SimConfig {
        nx: 64,
        ny: 64,
        nu,
        perturbation: Perturbation { pattern, amplitude_multiplier: multiplier },
        ..SimConfig::default()
    }
}

fn c10() -> Result<Draft> {
    let mut d = Draft::new();

    let nu = 1e-2;
    let cfg = small_config(nu, 0.0, Pattern::Mode21);
    let grid = cfg.validate()?;
    let mut solver = Solver::new(grid, nu);
    let s0 = dns::initial_state(&solver, &cfg)?;
    let (dt, steps) = (0.05, 200);
    let end = dns::integrate_fixed(&mut solver, &s0, dt, steps)?;
    let t = dt * steps as f64;
    let exact = dns::shear_hat(&solver, (-nu * t).exp());
    let diff: Vec<_> = end.hat.iter().zip(&exact).map(|(a, b)| a - b).collect();
    let rel = solver.l2_norm(&diff) / solver.l2_norm(&exact);
    d.check("shear_decay_relative_error", rel, rel <= 1e-10);

    let cfg = small_config(1e-3, 3.0, Pattern::Random);
    let (de, dz) = dns::conservation_drift(&cfg, 1e-3, 10_000)?;
    d.check("inviscid_energy_drift", de, de <= 1e-8);
    d.check("inviscid_enstrophy_drift", dz, dz <= 1e-8);

    // Coarsest step kept inside the RK4 stability region for the fastest advected mode.
    let (order, d1, d2) = dns::refinement_order(&cfg, 2.0, 0.04)?;
    d.metric("refinement_diff_coarse", d1);
    d.metric("refinement_diff_fine", d2);
    d.check("time_order", order, (order - 4.0).abs() <= 0.5);
    d.info.push("verification grid 64 x 64; the integrator does not depend on resolution".into());
    Ok(d)
}

fn c11() -> Result<Draft> {
    let mut d = Draft::new();
    let run = |nu: f64| dns::run_experiment(&SimConfig { nu, t_end: 1.0 / nu, ..SimConfig::default() });
    let slow = run(2e-3)?;
    let fast = run(8e-3)?;
    d.metric("runtime_s_nu2e-3", slow.runtime_s);
    d.metric("runtime_s_nu8e-3", fast.runtime_s);

    let nu: f64 = 2e-3;
    let omega = slow.series(|s| s.omega_neq_l2);
    let against = |lo: f64, hi: f64| -> Result<f64> { Ok(dns::phase_exponent(&omega, (lo, hi))?.exponent) };
    let (lo, hi) = (3.0 * nu.powf(-1.0 / 3.0), nu.powf(-4.0 / 9.0));
    match against(lo, hi) {
        Ok(e) => d.check("phase_exponent", e, (e + 3.0).abs() <= 1.0),
        Err(_) => {
            d.check("phase_exponent", f64::NAN, false);
            d.summary.push_str(&format!(" (window [{lo:.2}, {hi:.2}] is empty)"));
        }
    }
    for (name, w) in [("[nu^-1/3, 3nu^-1/3]", (nu.powf(-1.0 / 3.0), lo)), ("[nu^-4/9, 3nu^-1/3]", (hi, lo))] {
        if let Ok(e) = against(w.0, w.1) {
            d.info.push(format!("phase exponent on {name} = [{:.2}, {:.2}]: {e:.3}", w.0, w.1));
        }
    }

    let r_slow = dns::enhanced_dissipation_fit(&omega, nu, slow.final_state.time)?;
    let r_fast = dns::enhanced_dissipation_fit(&fast.series(|s| s.omega_neq_l2), 8e-3, fast.final_state.time)?;
    d.metric("rate_nu2e-3", r_slow.exponent);
    d.metric("rate_nu8e-3", r_fast.exponent);
    let ratio = r_fast.exponent / r_slow.exponent;
    d.check("rate_ratio", ratio, (ratio - 2.0).abs() <= 0.6);
    for (label, b) in [("2e-3", &slow), ("8e-3", &fast)] {
        if let Some(s) = b.samples.last() {
            d.info.push(format!("nu = {label}: final ||U_neq|| / ||Omega_neq|| = {:.4}", s.u_neq_l2 / s.omega_neq_l2));
        }
    }
    Ok(d)
}

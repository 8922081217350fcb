//! One runner per module subcommand. Each writes its CSV, SVG and JSON files
//! into a directory and returns a JSON summary; [`run_in_dir`] adds the manifest.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{CoercivityConfig, DnsConfig, LinearEulerConfig, QuasilinearConfig, ResolventConfig};
use super::output::{line_chart, push_number, timestamp, ExperimentManifest, OutputDir, Scale, Series, Table};
use crate::coercivity::{check_sequence_inequalities, coercive_matrix_sweep, sequence_rows};
use crate::dns::{self, Classification, SimConfig};
use crate::error::{Error, Result};
use crate::linear_euler::{evolve_linearized_euler, measure_rates};
use crate::quasilinear::{
    build_approx_solution, error_ledger, measure_envelopes, timescales, unit_mode21, ApproxEnvelopes, ApproxOptions,
    ApproxTrajectory, ErrorLedger,
};
use crate::resolvent::{self, ladder_spread, summarize, ResolventProbe};
use crate::shear::ShearProfile;
use crate::spectral::TorusGrid;

/// Run `body` against a fresh output directory and finish it with a manifest.
pub fn run_in_dir<C: Serialize>(
    name: &str,
    config: &C,
    seed: u64,
    dir: &Path,
    body: impl FnOnce(&mut OutputDir) -> Result<Value>,
) -> Result<(Value, ExperimentManifest)> {
    let started = timestamp();
    let clock = Instant::now();
    let mut out = OutputDir::create(dir)?;
    let summary = body(&mut out)?;
    let manifest = out.finish(name, config, seed, started, clock.elapsed().as_secs_f64())?;
    Ok((summary, manifest))
}

pub fn coercivity(cfg: &CoercivityConfig, out: &mut OutputDir) -> Result<Value> {
    let rows = sequence_rows(&cfg.k_set, cfg.n_max, &cfg.s_grid)?;
    let mut table = Table::new(&["n", "k", "s", "a", "b", "c", "slack_b", "slack_c"]);
    for r in &rows {
        table.push(vec![r.n as f64, r.k, r.s, r.a, r.b, r.c, r.slack_b(), r.slack_c()]);
    }
    out.write_table("coercivity.csv", &table)?;
    let report = check_sequence_inequalities(&cfg.k_set, cfg.n_max, &cfg.s_grid)?;
    let checks = coercive_matrix_sweep(&cfg.matrix_k, &cfg.matrix_s, cfg.matrix_n)?;
    let summary = json!({
        "min_slack_b": report.min_slack_b,
        "min_slack_c": report.min_slack_c,
        "argmin_b": report.argmin_b,
        "argmin_c": report.argmin_c,
        "points": report.points,
        "matrix_checks": checks,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

pub fn linear_euler(cfg: &LinearEulerConfig, out: &mut OutputDir) -> Result<Value> {
    if !(cfg.dt > 0.0 && cfg.t_end > 0.0) {
        return Err(Error::Config("linear_euler: dt and t_end must be positive".into()));
    }
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.dt).collect();
    let w0 = cfg.profile.build(cfg.k, cfg.ny / 2);
    let traj = evolve_linearized_euler(&w0, &times, cfg.tol)?;
    let rates = measure_rates(&traj, cfg.window)?;
    let mut table = Table::new(&["t", "sup_psi", "omega_0", "omega_pi", "star_norm", "H1_profile_norm"]);
    for s in &rates.samples {
        table.push(vec![s.t, s.sup_psi, s.omega_0, s.omega_pi, s.star_norm, s.h1_profile_norm]);
    }
    out.write_table("linear_euler.csv", &table)?;
    let pick = |f: fn(&crate::linear_euler::ProfileSample) -> f64| -> Vec<(f64, f64)> {
        rates.samples.iter().filter(|s| s.t > 0.0).map(|s| (s.t, f(s))).collect()
    };
    let chart = line_chart(
        &format!("linearized Euler, k = {}", cfg.k),
        "t",
        "value",
        &[
            Series::new("sup|psi_k|", pick(|s| s.sup_psi)),
            Series::new("|omega_k(t,0)|", pick(|s| s.omega_0)),
            Series::new("|omega_k(t,pi)|", pick(|s| s.omega_pi)),
        ],
        Scale::Log,
        Scale::Log,
    );
    out.write("linear_euler.svg", chart.as_bytes())?;
    let summary = json!({
        "k": rates.k,
        "window": rates.window,
        "fits": rates.fits,
        "reference": rates.reference,
        "star_norm_drift": rates.star_norm_drift,
        "l2_ratio_range": rates.l2_ratio_range,
    });
    out.write_json("fits.json", &summary)?;
    Ok(summary)
}

fn probe_table(probes: &[ResolventProbe]) -> Table {
    let mut t = Table::new(&["k", "lambda", "eps_or_nu", "theta", "ratio1", "ratio2", "condition"]);
    for p in probes {
        t.push(vec![p.k, p.lambda, p.eps_or_nu, p.theta, p.ratio1, p.ratio2, p.condition]);
    }
    t
}

pub fn resolvent(cfg: &ResolventConfig, out: &mut OutputDir) -> Result<Value> {
    let v = ShearProfile::cosine();
    let ks = resolvent::default_k_set(cfg.alpha, cfg.k_max);
    let ls = resolvent::lambda_grid(cfg.lambda_range.0, cfg.lambda_range.1, cfg.lambda_count);
    let ray = resolvent::rayleigh_constant_sweep(&v, &ks, &ls, &cfg.eps_list, cfg.n_max)?;
    let ns = resolvent::ns_constant_sweep(&v, &ks, &ls, &cfg.nu_list, cfg.n_max)?;
    out.write_table("resolvent_rayleigh.csv", &probe_table(&ray))?;
    out.write_table("resolvent_ns.csv", &probe_table(&ns))?;
    let (rs, nss) = (summarize(&ray), summarize(&ns));
    let chart = line_chart(
        "best constants per slice",
        "eps or nu",
        "sup ratio",
        &[
            Series::new("Rayleigh ratio1", rs.iter().map(|s| (s.eps_or_nu, s.sup_ratio1)).collect()),
            Series::new("NS ratio1", nss.iter().map(|s| (s.eps_or_nu, s.sup_ratio1)).collect()),
            Series::new("NS ratio2", nss.iter().map(|s| (s.eps_or_nu, s.sup_ratio2)).collect()),
        ],
        Scale::Log,
        Scale::Log,
    );
    out.write("resolvent.svg", chart.as_bytes())?;
    let summary = json!({
        "n_max": cfg.n_max,
        "rayleigh": rs,
        "rayleigh_ladder_spread": ladder_spread(&rs),
        "ns": nss,
        "ns_ladder_spread": ladder_spread(&nss),
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

/// Approximate solution, error ledger and envelopes for one quasilinear configuration.
pub fn quasilinear_ledger(cfg: &QuasilinearConfig) -> Result<(ApproxTrajectory, ErrorLedger, ApproxEnvelopes)> {
    if !(cfg.dt > 0.0 && cfg.nu > 0.0) {
        return Err(Error::Config("quasilinear: dt and nu must be positive".into()));
    }
    let (t0, t1, _) = timescales(cfg.nu);
    let t_end = cfg.t_end.unwrap_or(t1);
    let steps = (t_end / cfg.dt).ceil() as usize + 2;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.dt).collect();
    let grid = TorusGrid::new(cfg.kappa, 16, cfg.ny)?;
    let w0 = unit_mode21(grid).scaled(cfg.amplitude_multiplier * cfg.nu.cbrt());
    let profile = ShearProfile::from_cosine_series(&cfg.shear_cosine_series)?;
    let traj = build_approx_solution(&w0, &profile, cfg.nu, &times, ApproxOptions { ny: cfg.ny, ode_tol: cfg.ode_tol })?;
    let ledger = error_ledger(&traj)?;
    let env = measure_envelopes(&traj, (t0, t1))?;
    Ok((traj, ledger, env))
}

pub fn quasilinear(cfg: &QuasilinearConfig, out: &mut OutputDir) -> Result<Value> {
    let (traj, ledger, env) = quasilinear_ledger(cfg)?;
    let mut table = Table::new(&["t", "sup_dx_omegaL", "sup_uLy", "ErL_L2", "envelope_c"]);
    for s in &ledger.samples {
        let d = env
            .diagnostics
            .iter()
            .find(|d| d.t == s.t)
            .expect("ledger times are snapshot times");
        table.push(vec![s.t, d.sup_dx_omega_l, d.sup_u_l_y, s.er_l2, s.ratio]);
    }
    out.write_table("quasilinear.csv", &table)?;
    let chart = line_chart(
        "quasilinear error ledger",
        "t",
        "value",
        &[
            Series::new("||Er_L||", ledger.samples.iter().map(|s| (s.t, s.er_l2)).collect()),
            Series::new("shape", ledger.samples.iter().map(|s| (s.t, s.shape * traj.h3_norm)).collect()),
            Series::new("sup|u_L^y|", env.diagnostics.iter().map(|d| (d.t, d.sup_u_l_y)).collect()),
        ],
        Scale::Linear,
        Scale::Log,
    );
    out.write("quasilinear.svg", chart.as_bytes())?;
    let summary = json!({
        "nu": cfg.nu,
        "ny": cfg.ny,
        "dt": cfg.dt,
        "envelope_c": ledger.envelope_c,
        "argmax_t": ledger.argmax_t,
        "noise_dominated": ledger.noise_dominated,
        "recommended_dt": ledger.recommended_dt,
        "morse_residual": traj.morse.residual,
        "dx_bound": env.dx_bound,
        "u_y_fit": env.u_y_fit,
    });
    out.write_json("fits.json", &summary)?;
    Ok(summary)
}

/// CSV of one DNS run.
pub fn dns_table(samples: &[dns::DnsSample]) -> Table {
    let mut t = Table::new(&[
        "t",
        "omega_neq_L2",
        "u_neq_L2",
        "shear_deviation_L2",
        "depletion_probe_0",
        "depletion_probe_pi",
    ]);
    for s in samples {
        t.push(vec![s.t, s.omega_neq_l2, s.u_neq_l2, s.shear_deviation_l2, s.depletion_probe_0, s.depletion_probe_pi]);
    }
    t
}

pub fn dns_run(sim: &SimConfig, out: &mut OutputDir) -> Result<Value> {
    let bundle = dns::run_experiment(sim)?;
    out.write_table("dns.csv", &dns_table(&bundle.samples))?;
    let chart = line_chart(
        "DNS perturbation norms",
        "t",
        "L2 norm",
        &[
            Series::new("||Omega_neq||", bundle.series(|s| s.omega_neq_l2)),
            Series::new("||U_neq||", bundle.series(|s| s.u_neq_l2)),
        ],
        Scale::Linear,
        Scale::Log,
    );
    out.write("dns.svg", chart.as_bytes())?;
    let fit = if sim.nu > 0.0 {
        dns::enhanced_dissipation_fit(&bundle.series(|s| s.omega_neq_l2), sim.nu, sim.t_end).ok()
    } else {
        None
    };
    let summary = json!({
        "status": bundle.status,
        "steps": bundle.steps,
        "runtime_s": bundle.runtime_s,
        "t_final": bundle.final_state.time,
        "xi_norm": bundle.xi,
        "xi_total": bundle.xi.total(),
        "enhanced_dissipation_fit": fit,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

pub fn dns(cfg: &DnsConfig, out: &mut OutputDir) -> Result<Value> {
    let mut summary = dns_run(&cfg.sim, out)?;
    if let Some(scan) = &cfg.scan {
        let report = dns::threshold_scan(&cfg.sim, &scan.nu_list, &scan.multipliers, scan.pattern)?;
        let mut csv = String::from("nu,multiplier,initial,final,t_final,classification\n");
        for e in &report.entries {
            let class = match e.class {
                Classification::ReturnsToShear => "RETURNS_TO_SHEAR",
                Classification::NotDecayed => "NOT_DECAYED",
                Classification::Inconclusive => "INCONCLUSIVE",
            };
            for v in [e.nu, e.multiplier, e.initial, e.final_value, e.t_final] {
                push_number(&mut csv, v);
                csv.push(',');
            }
            csv.push_str(class);
            csv.push('\n');
        }
        out.write("scan.csv", csv.as_bytes())?;
        summary["scan_transitions"] = serde_json::to_value(&report.transitions)?;
    }
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

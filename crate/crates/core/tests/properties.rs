//! Randomized invariants across the modules.

use kflow::coercivity::{delta_s, sequence_abc};
use kflow::dns::{self, Pattern, Perturbation, SimConfig, Solver};
use kflow::fit::{fit_exponential, fit_power_law};
use kflow::harness::output::{config_digest, Table};
use kflow::linear_euler::evolve_linearized_euler;
use kflow::operators::{apply_a, apply_b, apply_lambda1, build_dy, identity_residuals};
use kflow::quasilinear::morse_transform;
use kflow::shear::ShearProfile;
use kflow::spectral::{sobolev_norm, star_norm, Field2D, ModeFunction, TorusGrid, C64};
use proptest::prelude::*;

fn coeffs(n_max: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2 * n_max + 1)
        .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

fn mode(k: f64, n_max: usize) -> impl Strategy<Value = ModeFunction> {
    coeffs(n_max).prop_map(move |c| ModeFunction::from_coeffs(k, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval(f in mode(2.0, 40), m in prop::sample::select(vec![128usize, 256, 1024])) {
        let grid = f.to_grid(m);
        let phys = (grid.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64).sqrt();
        let spec = f.l2_norm();
        prop_assert!((phys - spec).abs() <= 1e-12 * spec);
    }

    #[test]
    fn h1_norm_matches_differentiation(f in mode(3.0, 24)) {
        let dy = build_dy(3.0, 24).apply(&f);
        let assembled = (dy.l2_norm().powi(2) + 9.0 * f.l2_norm().powi(2)).sqrt();
        let symbol = sobolev_norm(&f, 1.0);
        prop_assert!((assembled - symbol).abs() <= 1e-12 * symbol);
    }

    #[test]
    fn real_operators_keep_fields_real(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
        let grid = TorusGrid::new(0.5, 16, 32).unwrap();
        let field = Field2D::from_physical(grid, true, |x, y| {
            a * (2.0 * x + y).cos() + b * (4.0 * x).sin() * (2.0 * y).cos() + c * (2.0 * x - 3.0 * y).sin()
        });
        prop_assert_eq!(field.reality_defect(), 0.0);
        for op in [apply_a, apply_b, apply_lambda1] {
            let mut out = field.clone();
            let jm = field.j_max() as i64;
            for j in (-jm..=jm).filter(|&j| j != 0) {
                *out.mode_mut(j) = op(field.mode(j));
            }
            prop_assert_eq!(out.reality_defect(), 0.0);
        }
    }

    #[test]
    fn identities_hold_for_any_wavenumber(k in 1.2..12.0f64) {
        for (name, r) in identity_residuals(k, 32, 8).unwrap() {
            prop_assert!(r <= 1e-10, "{} = {:e} at k = {}", name, r, k);
        }
    }

    #[test]
    fn sequence_slacks_nonnegative(n in -500i64..=500, j in 1usize..=40, s in 0.0..=0.4f64) {
        let t = sequence_abc(n, 2.0 * j as f64, s).unwrap();
        prop_assert!(t.slack_b() >= -1e-9);
        prop_assert!(t.slack_c() >= -1e-9);
    }

    #[test]
    fn delta_decreasing(s1 in 0.0..=0.4f64, s2 in 0.0..=0.4f64) {
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(delta_s(lo).unwrap() >= delta_s(hi).unwrap());
    }

    #[test]
    fn fits_recover_exact_laws(p in -4.0..2.0f64, c in 0.1..10.0f64, r in 0.0..0.2f64) {
        let pts: Vec<(f64, f64)> = (1..=40).map(|i| {
            let t = i as f64;
            (t, c * t.powf(p))
        }).collect();
        prop_assert!((fit_power_law(&pts, (1.0, 40.0)).unwrap().exponent - p).abs() < 1e-10);
        let pts: Vec<(f64, f64)> = (0..=40).map(|i| {
            let t = i as f64;
            (t, c * (-r * t).exp())
        }).collect();
        prop_assert!((fit_exponential(&pts, (0.0, 40.0)).unwrap().exponent - r).abs() < 1e-10);
    }

    #[test]
    fn csv_roundtrips_every_value(v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..20)) {
        let mut t = Table::new(&["x"]);
        for x in &v {
            t.push(vec![*x]);
        }
        let csv = t.to_csv();
        let back: Vec<f64> = csv.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn digest_ignores_key_order(pairs in prop::collection::btree_map("[a-z]{1,6}", any::<i32>(), 1..8)) {
        let forward: serde_json::Map<String, serde_json::Value> =
            pairs.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
        let mut text = String::from("{");
        for (i, (k, v)) in pairs.iter().rev().enumerate() {
            if i > 0 {
                text.push(',');
            }
            text.push_str(&format!("\"{k}\":{v}"));
        }
        text.push('}');
        let reversed: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(config_digest(&forward).unwrap(), config_digest(&reversed).unwrap());
    }

    #[test]
    fn parallel_map_matches_sequential(v in prop::collection::vec(-1e3..1e3f64, 0..200)) {
        let f = |x: &f64| (x * 1.7).sin() * x;
        prop_assert_eq!(kflow::par::map(&v, f), kflow::par::map_sequential(&v, f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn star_norm_conserved(f in mode(2.0, 12)) {
        let f = f.resized(48);
        let traj = evolve_linearized_euler(&f, &[0.0, 2.0, 4.0], 1e-11).unwrap();
        let s0 = star_norm(&traj.states[0]).unwrap();
        for s in &traj.states {
            prop_assert!((star_norm(s).unwrap() - s0).abs() <= 1e-6 * s0);
        }
    }

    #[test]
    fn affine_profiles_are_recovered(a in 0.05..3.0f64, d in -2.0..2.0f64) {
        let m = morse_transform(&ShearProfile::affine(a, d).unwrap()).unwrap();
        prop_assert!((m.a - a).abs() <= 1e-13 * (1.0 + a));
        prop_assert!((m.d - d).abs() <= 1e-13 * (1.0 + a + d.abs()));
        prop_assert!(m.deviation_from_identity(128) <= 1e-13);
    }

    #[test]
    fn small_perturbations_transform_accurately(c2 in -0.02..0.02f64, c3 in -0.01..0.01f64) {
        let m = morse_transform(&ShearProfile::from_cosine_series(&[0.0, 1.0, c2, c3]).unwrap()).unwrap();
        prop_assert!(m.residual <= 1e-8);
        prop_assert!(m.min_slope > 0.0);
    }

    #[test]
    fn dns_steps_keep_reality_and_zero_mean(seed in any::<u64>(), mult in 0.5..5.0f64, steps in 1usize..20) {
        let cfg = SimConfig {
            nx: 32,
            ny: 32,
            nu: 1e-2,
            seed,
            perturbation: Perturbation { pattern: Pattern::Random, amplitude_multiplier: mult },
            ..SimConfig::default()
        };
        let grid = cfg.validate().unwrap();
        let mut solver = Solver::new(grid, cfg.nu);
        let s0 = dns::initial_state(&solver, &cfg).unwrap();
        let end = dns::integrate_fixed(&mut solver, &s0, 0.02, steps).unwrap();
        prop_assert_eq!(end.hat[0], C64::new(0.0, 0.0));
        let ny = grid.ny();
        for n in 1..ny {
            prop_assert_eq!(end.hat[n], end.hat[ny - n].conj());
        }
    }
}

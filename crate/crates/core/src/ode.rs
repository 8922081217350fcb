//! Adaptive Dormand–Prince 5(4) for complex-valued linear systems.

use crate::error::{Error, Result};
use crate::spectral::{C64, ZERO};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; also the largest step ever taken when `h_max` is unset.
    pub h_init: f64,
    pub h_max: Option<f64>,
}

impl OdeOptions {
    pub fn with_tol(tol: f64, h_init: f64) -> Self {
        Self { rtol: tol, atol: tol, h_init, h_max: None }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut acc = ZERO;
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrate `y' = f(t, y)` from `times[0]` and return the state at every entry of `times`.
///
/// `f(t, y, dy)` writes the derivative into `dy`. Steps are clipped to land on
/// each output time exactly, so the sequence of outputs does not depend on
/// interpolation.
pub fn integrate<F>(mut f: F, y0: &[C64], times: &[f64], opts: OdeOptions) -> Result<(Vec<Vec<C64>>, OdeStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    let mut stats = OdeStats::default();
    if times.is_empty() {
        return Ok((out, stats));
    }
    let mut y = y0.to_vec();
    let mut t = times[0];
    out.push(y.clone());
    let h_max = opts.h_max.unwrap_or(opts.h_init);
    let mut h = opts.h_init.min(h_max);
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    let mut tmp = vec![ZERO; n];
    let mut ynew = vec![ZERO; n];
    f(t, &y, &mut k[0]);

    for &t_out in &times[1..] {
        while t < t_out {
            let last = t + h >= t_out;
            let step = if last { t_out - t } else { h };
            if step < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepSizeUnderflow { t, h: step });
            }
            {
                let (k0, rest) = k.split_at_mut(1);
                axpy_into(&mut tmp, &y, step, &[(A21, &k0[0])]);
                f(t + C2 * step, &tmp, &mut rest[0]);
            }
            axpy_into(&mut tmp, &y, step, &[(A31, &k[0]), (A32, &k[1])]);
            f(t + C3 * step, &tmp, &mut k[2]);
            axpy_into(&mut tmp, &y, step, &[(A41, &k[0]), (A42, &k[1]), (A43, &k[2])]);
            f(t + C4 * step, &tmp, &mut k[3]);
            axpy_into(&mut tmp, &y, step, &[(A51, &k[0]), (A52, &k[1]), (A53, &k[2]), (A54, &k[3])]);
            f(t + C5 * step, &tmp, &mut k[4]);
            axpy_into(
                &mut tmp,
                &y,
                step,
                &[(A61, &k[0]), (A62, &k[1]), (A63, &k[2]), (A64, &k[3]), (A65, &k[4])],
            );
            f(t + step, &tmp, &mut k[5]);
            axpy_into(&mut ynew, &y, step, &[(B1, &k[0]), (B3, &k[2]), (B4, &k[3]), (B5, &k[4]), (B6, &k[5])]);
            f(t + step, &ynew, &mut k[6]);

            let mut err = 0.0;
            for i in 0..n {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * step;
                let sc = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = (step * fac).min(h_max);
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_exact_to_tolerance() {
        // y' = i y, y(0) = 1.
        let times: Vec<f64> = (0..=20).map(|j| j as f64 * 0.5).collect();
        let (ys, _) = integrate(
            |_, y, dy| dy[0] = y[0] * C64::new(0.0, 1.0),
            &[C64::new(1.0, 0.0)],
            &times,
            OdeOptions::with_tol(1e-12, 0.1),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - C64::from_polar(1.0, *t)).norm() < 1e-10);
        }
    }

    #[test]
    fn fifth_order_with_fixed_steps() {
        // Force fixed steps with an enormous tolerance and check the order.
        let run = |h: f64| {
            let opts = OdeOptions { rtol: 1e3, atol: 1e3, h_init: h, h_max: Some(h) };
            let (ys, _) = integrate(|t, _, dy| dy[0] = C64::new(t.cos(), 0.0), &[ZERO], &[0.0, 2.0], opts).unwrap();
            (ys[1][0].re - 2f64.sin()).abs()
        };
        let e1 = run(0.2);
        let e2 = run(0.1);
        assert!((e1 / e2).log2() > 4.5, "{e1} {e2}");
    }

    #[test]
    fn non_finite_is_reported() {
        let r = integrate(|_, y, dy| dy[0] = y[0] * y[0], &[C64::new(1.0, 0.0)], &[0.0, 2.0], OdeOptions::with_tol(1e-8, 0.1));
        assert!(r.is_err());
    }
}

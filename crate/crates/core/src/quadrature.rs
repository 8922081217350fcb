//! Adaptive Gauss–Kronrod (7/15) quadrature for complex integrands on intervals.

use std::collections::BinaryHeap;

use crate::spectral::{C64, ZERO};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod rule with the embedded 7-point Gauss estimate.
fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    ((rk * h), ((rk - rg) * h).norm())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Cap on the number of panels, counting the initial partition.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-12, max_panels: 20_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
    /// Whether the error target was met before the panel cap.
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn totals(h: &BinaryHeap<Panel>) -> (C64, f64) {
    h.iter().fold((ZERO, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// `∫_a^b f` starting from `cells` equal panels; the panel with the largest
/// error estimate is bisected until the total estimate meets the tolerance.
pub fn integrate<F: FnMut(f64) -> C64>(mut f: F, a: f64, b: f64, cells: usize, opts: QuadOptions) -> QuadResult {
    let cells = cells.max(1);
    let width = (b - a) / cells as f64;
    let mut heap = BinaryHeap::with_capacity(2 * cells);
    let mut evals = 0;
    for i in 0..cells {
        let lo = a + width * i as f64;
        let hi = if i + 1 == cells { b } else { lo + width };
        let (value, error) = gk15(&mut f, lo, hi);
        evals += 15;
        heap.push(Panel { a: lo, b: hi, value, error });
    }
    let (mut value, mut error) = totals(&heap);
    let mut converged = true;
    while error > opts.abs_tol.max(opts.rel_tol * value.norm()) {
        if heap.len() >= opts.max_panels {
            converged = false;
            break;
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            converged = false;
            break;
        }
        let (vl, el) = gk15(&mut f, worst.a, m);
        let (vr, er) = gk15(&mut f, m, worst.b);
        evals += 30;
        heap.push(Panel { a: worst.a, b: m, value: vl, error: el });
        heap.push(Panel { a: m, b: worst.b, value: vr, error: er });
        if heap.len() % 64 == 0 {
            (value, error) = totals(&heap);
        } else {
            value += vl + vr - worst.value;
            error += el + er - worst.error;
        }
    }
    let (value, error) = totals(&heap);
    QuadResult { value, error, evaluations: evals, converged }
}

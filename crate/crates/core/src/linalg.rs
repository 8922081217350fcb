//! Banded LU with partial pivoting, a one-norm condition estimator and a
//! Lanczos iteration for the top eigenvalue of a Hermitian operator.

use nalgebra::DMatrix;

use crate::spectral::{C64, ZERO};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` keeps the columns `i - kl ..= i + ku + kl`; the extra `kl` columns
/// absorb the fill produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, rows: vec![ZERO; n * (2 * kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width()).then(|| i * self.width() + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map_or(ZERO, |s| self.rows[s])
    }

    /// Sets an entry inside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) lies outside the band");
        let s = self.slot(i, j).expect("inside band");
        self.rows[s] = v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// `max_j Σ_i |a_ij|`.
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, c) in col.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c += self.get(i, j).norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Factorizes in place. Returns `None` on an exactly zero pivot.
    pub fn lu(mut self) -> Option<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0; n];
        let mut mult = vec![ZERO; n * kl.max(1)];
        for c in 0..n {
            let last = (c + kl).min(n - 1);
            let p = (c..=last).max_by(|&a, &b| self.get(a, c).norm().total_cmp(&self.get(b, c).norm())).unwrap();
            piv[c] = p;
            let right = (c + kl + ku).min(n - 1);
            if p != c {
                for j in c..=right {
                    let (a, b) = (self.get(c, j), self.get(p, j));
                    let sa = self.slot(c, j).unwrap();
                    self.rows[sa] = b;
                    if let Some(sb) = self.slot(p, j) {
                        self.rows[sb] = a;
                    }
                }
            }
            let d = self.get(c, c);
            if d == ZERO {
                return None;
            }
            for r in c + 1..=last {
                let l = self.get(r, c) / d;
                mult[c * kl + (r - c - 1)] = l;
                if l != ZERO {
                    for j in c..=right {
                        if let Some(s) = self.slot(r, j) {
                            let u = self.get(c, j);
                            self.rows[s] -= l * u;
                        }
                    }
                }
            }
        }
        Some(BandLu { a: self, piv, mult })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
    mult: Vec<C64>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.a.n
    }

    fn upper_right(&self, i: usize) -> usize {
        (i + self.a.kl + self.a.ku).min(self.a.n - 1)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.a.n;
        let kl = self.a.kl;
        let mut x = b.to_vec();
        for c in 0..n {
            x.swap(c, self.piv[c]);
            let xc = x[c];
            for r in c + 1..=(c + kl).min(n - 1) {
                x[r] -= self.mult[c * kl + (r - c - 1)] * xc;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=self.upper_right(i) {
                acc -= self.a.get(i, j) * x[j];
            }
            x[i] = acc / self.a.get(i, i);
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let n = self.a.n;
        let kl = self.a.kl;
        let mut x = b.to_vec();
        // U^H is lower triangular.
        for i in 0..n {
            x[i] /= self.a.get(i, i).conj();
            let xi = x[i];
            for j in i + 1..=self.upper_right(i) {
                x[j] -= self.a.get(i, j).conj() * xi;
            }
        }
        for c in (0..n).rev() {
            let mut acc = x[c];
            for r in c + 1..=(c + kl).min(n - 1) {
                acc -= self.mult[c * kl + (r - c - 1)].conj() * x[r];
            }
            x[c] = acc;
            x.swap(c, self.piv[c]);
        }
        x
    }

    /// Estimate of `‖A^{-1}‖₁` by the Hager–Higham iteration.
    pub fn inverse_norm_one_estimate(&self) -> f64 {
        let n = self.a.n;
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.norm()).sum();
            let xi: Vec<C64> = y.iter().map(|v| if v.norm() > 0.0 { v / v.norm() } else { C64::new(1.0, 0.0) }).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z.iter().enumerate().map(|(j, v)| (j, v.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![ZERO; n];
            x[j] = C64::new(1.0, 0.0);
        }
        est
    }
}

/// Result of a Lanczos run.
#[derive(Debug, Clone, Copy)]
pub struct TopEigen {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of a Hermitian operator on `C^dim`, with full
/// reorthogonalization and a fixed, deterministic start vector.
pub fn lanczos_top(dim: usize, max_iter: usize, tol: f64, mut apply: impl FnMut(&[C64]) -> Vec<C64>) -> TopEigen {
    let m_max = max_iter.min(dim).max(1);
    let mut q: Vec<C64> = (0..dim)
        .map(|i| {
            let x = i as f64;
            C64::new(1.0 + 0.37 * (1.7 * x + 0.3).sin(), 0.5 * (2.3 * x).cos())
        })
        .collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m_max);
    let mut alpha = Vec::with_capacity(m_max);
    let mut beta: Vec<f64> = Vec::with_capacity(m_max);
    let mut prev = f64::NAN;
    let mut value = 0.0;
    for it in 0..m_max {
        basis.push(q.clone());
        let mut w = apply(&q);
        let a = dot(&q, &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let bnext = norm(&w);
        let (top, last_comp) = tridiagonal_top(&alpha, &beta);
        value = top;
        let resid = bnext * last_comp.abs();
        let settled = (top - prev).abs() <= tol * top.abs();
        if resid <= tol * top.abs().max(f64::MIN_POSITIVE) || (settled && it > 4) || bnext <= 1e-14 * top.abs() {
            return TopEigen { value, iterations: it + 1, converged: true };
        }
        prev = top;
        beta.push(bnext);
        q = w.into_iter().map(|v| v / bnext).collect();
    }
    TopEigen { value, iterations: m_max, converged: m_max == dim }
}

fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let e = t.symmetric_eigen();
    let (idx, top) = e.eigenvalues.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    (top, e.eigenvectors[(m - 1, idx)])
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

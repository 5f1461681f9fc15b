//! Platt's sequential minimal optimization with a full error cache.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::KernelSpec;

/// Smallest change in a multiplier worth applying.
const ALPHA_EPS: f64 = 1e-10;
/// Memory budget for cached kernel rows.
const CACHE_BYTES: usize = 512 << 20;

pub(crate) struct SmoProblem<'a> {
    pub x: &'a [f64],
    pub dim: usize,
    pub y: &'a [f64],
    /// Box bound per sample.
    pub c: &'a [f64],
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub passes: usize,
    pub converged: bool,
}

struct RowCache {
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

struct Solver<'a> {
    p: &'a SmoProblem<'a>,
    n: usize,
    alpha: Vec<f64>,
    bias: f64,
    /// `f(x_i) - y_i` for every sample.
    errors: Vec<f64>,
    diag: Vec<f64>,
    cache: RowCache,
    rng: ChaCha8Rng,
}

impl<'a> Solver<'a> {
    fn sample(&self, i: usize) -> &'a [f64] {
        &self.p.x[i * self.p.dim..(i + 1) * self.p.dim]
    }

    /// Compute row `i` if missing, never evicting row `keep`.
    fn ensure_row(&mut self, i: usize, keep: usize) {
        if self.cache.rows[i].is_some() {
            return;
        }
        if self.cache.order.len() >= self.cache.capacity {
            let mut old = self.cache.order.pop_front().expect("nonempty");
            if old == keep {
                self.cache.order.push_back(old);
                old = self.cache.order.pop_front().expect("capacity >= 2");
            }
            self.cache.rows[old] = None;
        }
        let xi = self.sample(i);
        let row: Vec<f64> = (0..self.n)
            .into_par_iter()
            .map(|j| self.p.kernel.eval(xi, self.sample(j)))
            .collect();
        self.cache.rows[i] = Some(row);
        self.cache.order.push_back(i);
    }

    fn row(&self, i: usize) -> &[f64] {
        self.cache.rows[i].as_deref().expect("row cached")
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.p.c[i]
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (y1, y2) = (self.p.y[i1], self.p.y[i2]);
        let (c1, c2) = (self.p.c[i1], self.p.c[i2]);
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), c2.min(c1 + a2 - a1))
        } else {
            ((a1 + a2 - c1).max(0.0), c2.min(a1 + a2))
        };
        if hi - lo <= 0.0 {
            return false;
        }
        self.ensure_row(i1, i2);
        self.ensure_row(i2, i1);
        let k11 = self.diag[i1];
        let k22 = self.diag[i2];
        let k12 = self.row(i1)[i2];
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // objective restricted to the segment is linear or concave: pick an end
            let f1 = y1 * (e1 - self.bias) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 - self.bias) - s * a1 * k12 - a2 * k22;
            let end = |a2x: f64| {
                let a1x = a1 + s * (a2 - a2x);
                a1x * f1
                    + a2x * f2
                    + 0.5 * a1x * a1x * k11
                    + 0.5 * a2x * a2x * k22
                    + s * a2x * a1x * k12
            };
            let (obj_lo, obj_hi) = (end(lo), end(hi));
            if obj_lo < obj_hi - ALPHA_EPS {
                lo
            } else if obj_lo > obj_hi + ALPHA_EPS {
                hi
            } else {
                a2
            }
        };
        if (a2_new - a2).abs() < ALPHA_EPS * (a2_new + a2 + ALPHA_EPS) {
            return false;
        }
        let mut a1_new = a1 + s * (a2 - a2_new);
        // snap rounding residue onto the box
        if a1_new < 0.0 {
            a2_new += s * a1_new;
            a1_new = 0.0;
        } else if a1_new > c1 {
            a2_new += s * (a1_new - c1);
            a1_new = c1;
        }
        a2_new = a2_new.clamp(0.0, c2);

        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1_new > 0.0 && a1_new < c1 {
            b1
        } else if a2_new > 0.0 && a2_new < c2 {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.bias;
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.bias = b_new;

        let row1 = self.cache.rows[i1].as_deref().expect("row cached");
        let row2 = self.cache.rows[i2].as_deref().expect("row cached");
        for ((e, k1), k2) in self.errors.iter_mut().zip(row1).zip(row2) {
            *e += d1 * k1 + d2 * k2 + db;
        }
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.p.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.p.tol && a2 < self.p.c[i2]) || (r2 > self.p.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let non_bound: Vec<usize> = (0..self.n).filter(|&i| self.non_bound(i)).collect();
        if non_bound.len() > 1 {
            let mut best = None;
            let mut best_gap = -1.0;
            for &i in &non_bound {
                let gap = (self.errors[i] - e2).abs();
                if gap > best_gap {
                    best_gap = gap;
                    best = Some(i);
                }
            }
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        if !non_bound.is_empty() {
            let start = self.rng.random_range(0..non_bound.len());
            for t in 0..non_bound.len() {
                let i1 = non_bound[(start + t) % non_bound.len()];
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let start = self.rng.random_range(0..self.n);
        for t in 0..self.n {
            let i1 = (start + t) % self.n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

pub(crate) fn solve(p: &SmoProblem<'_>) -> SmoSolution {
    let n = p.y.len();
    let capacity = (CACHE_BYTES / (8 * n.max(1))).clamp(2, n.max(2));
    let mut solver = Solver {
        p,
        n,
        alpha: vec![0.0; n],
        bias: 0.0,
        errors: p.y.iter().map(|y| -y).collect(),
        diag: (0..n)
            .map(|i| {
                let x = &p.x[i * p.dim..(i + 1) * p.dim];
                p.kernel.eval(x, x)
            })
            .collect(),
        cache: RowCache {
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        },
        rng: ChaCha8Rng::seed_from_u64(p.seed),
    };

    let mut examine_all = true;
    let mut passes = 0;
    let mut converged = false;
    while passes < p.max_passes {
        let mut changed = 0;
        if examine_all {
            for i in 0..n {
                changed += solver.examine(i) as usize;
            }
        } else {
            for i in 0..n {
                if solver.non_bound(i) {
                    changed += solver.examine(i) as usize;
                }
            }
        }
        passes += 1;
        if examine_all && changed == 0 {
            converged = true;
            break;
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }

    SmoSolution {
        alpha: solver.alpha,
        bias: solver.bias,
        passes,
        converged,
    }
}

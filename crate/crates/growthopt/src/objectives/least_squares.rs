//! Interpolating least squares: `f(x) = (1/n) sum_i 0.5 (a_i^T x - b_i)^2`
//! with targets constructed as `b_i = a_i^T x*`, so every component shares the
//! minimizer `x*` and attains value zero there (interpolation).

use serde::{Deserialize, Serialize};

use crate::linalg::{Point, SymMatrix};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeastSquaresData {
    /// Component rows `a_i`.
    pub rows: Vec<Point>,
    /// Targets `b_i`, computed as `a_i . x_star` with the same dot-product
    /// routine used at evaluation time, so the residual at `x_star` is exactly
    /// zero in floating point.
    pub targets: Vec<f64>,
    /// Shared minimizer.
    pub x_star: Point,
    /// Construction seed (provenance).
    pub seed: u64,
    /// Requested singular-value spread (max/min) of the row matrix.
    pub conditioning: f64,
}

impl LeastSquaresData {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.x_star.dim()
    }

    pub fn residual(&self, x: &Point, i: usize) -> f64 {
        self.rows[i].dot(x) - self.targets[i]
    }

    pub fn eval_component(&self, x: &Point, i: usize) -> f64 {
        let r = self.residual(x, i);
        0.5 * r * r
    }

    pub fn grad_component(&self, x: &Point, i: usize) -> Point {
        self.rows[i].scaled(self.residual(x, i))
    }

    pub fn eval_full(&self, x: &Point) -> f64 {
        let n = self.n() as f64;
        (0..self.n()).map(|i| self.eval_component(x, i)).sum::<f64>() / n
    }

    pub fn grad_full(&self, x: &Point) -> Point {
        let mut g = Point::zeros(self.dim());
        let inv_n = 1.0 / self.n() as f64;
        for i in 0..self.n() {
            g.add_scaled(inv_n * self.residual(x, i), &self.rows[i]);
        }
        g
    }

    /// Largest squared row norm: a global curvature bound for both the full
    /// objective and every component.
    pub fn max_row_norm_sq(&self) -> f64 {
        self.rows
            .iter()
            .map(Point::norm_sq)
            .fold(0.0f64, f64::max)
    }

    /// `M = (1/n) sum_i a_i a_i^T`, the Hessian of the full objective.
    pub fn gram(&self) -> SymMatrix {
        let w = vec![1.0 / self.n() as f64; self.n()];
        SymMatrix::weighted_gram(&self.rows, &w)
    }

    /// Smallest eigenvalue of the full Hessian; `None` when numerically
    /// singular (then the objective is convex but not strongly convex).
    pub fn strong_convexity(&self) -> Option<f64> {
        let (vals, _) = self.gram().sym_eigen();
        let min = *vals.first()?;
        let max = vals.last().copied().unwrap_or(0.0);
        if min > 1e-12 * max.max(1.0) {
            Some(min)
        } else {
            None
        }
    }

    /// Exact supremum over `x` of the single-draw growth ratio
    /// `E ||grad f(x, xi)||^2 / ||grad f(x)||^2`.
    ///
    /// With residual vector `r = x - x*`, the numerator is `r^T Q r` for
    /// `Q = (1/n) sum_i ||a_i||^2 a_i a_i^T` and the denominator is
    /// `r^T M^2 r`. The supremum of the generalized Rayleigh quotient is the
    /// top eigenvalue of `M^{-1} Q M^{-1}`; it exists when `M` is invertible.
    pub fn sgc_ratio_sup(&self) -> Option<f64> {
        let m = self.gram();
        let (vals, vecs) = m.sym_eigen();
        let d = m.dim;
        let max = vals.last().copied().unwrap_or(0.0);
        if vals.iter().any(|&v| v <= 1e-12 * max.max(1.0)) {
            return None;
        }
        // M^{-1} = V diag(1/lambda) V^T
        let mut minv = SymMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += vecs.get(i, k) * vecs.get(j, k) / vals[k];
                }
                minv.set(i, j, s);
            }
        }
        let weights: Vec<f64> = self
            .rows
            .iter()
            .map(|a| a.norm_sq() / self.n() as f64)
            .collect();
        let q = SymMatrix::weighted_gram(&self.rows, &weights);
        let w = minv.mul(&q).mul(&minv);
        let (wvals, _) = w.sym_eigen();
        wvals.last().copied()
    }
}

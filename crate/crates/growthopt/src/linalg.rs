//! Dense points and the few small-matrix primitives the crate needs.
//!
//! Problems here are desk-scale (dimensions in the tens), so the matrix
//! helpers are deliberately simple and allocation-friendly: a cyclic Jacobi
//! eigensolver for symmetric matrices and Gram–Schmidt orthonormalization for
//! random test-problem construction. Both are plain `f64` loops with a fixed
//! operation order, which keeps results bit-identical across platforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite dense vector in `R^d`.
///
/// Invariant: every coordinate is finite at construction. In-place arithmetic
/// can produce non-finite values mid-run; the optimizer loop re-checks via its
/// divergence guard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    /// Validating constructor: rejects NaN and infinities.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("point coordinates must be finite"));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Point) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += s * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Point {
        Point(self.0.iter().map(|v| v * s).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// Symmetric `d x d` matrix stored dense row-major. Only what the objective
/// builders and noise-ratio analysis need.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    pub dim: usize,
    /// Row-major entries, length `dim * dim`.
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    /// `sum_i w_i * rows[i] rows[i]^T` (outer-product accumulation).
    pub fn weighted_gram(rows: &[Point], weights: &[f64]) -> Self {
        assert_eq!(rows.len(), weights.len());
        let dim = rows.first().map_or(0, Point::dim);
        let mut m = SymMatrix::zeros(dim);
        for (row, &w) in rows.iter().zip(weights.iter()) {
            let c = row.coords();
            for i in 0..dim {
                for j in 0..dim {
                    m.data[i * dim + j] += w * c[i] * c[j];
                }
            }
        }
        m
    }

    /// Matrix product `self * other` (both symmetric-shaped, result may not
    /// be symmetric; callers symmetrize where required).
    pub fn mul(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = SymMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    /// Eigen-decomposition by cyclic Jacobi rotations. Returns eigenvalues in
    /// ascending order along with the matching orthonormal eigenvectors
    /// (columns). Intended for small (d <= ~64) symmetric matrices.
    pub fn sym_eigen(&self) -> (Vec<f64>, SymMatrix) {
        let d = self.dim;
        let mut a = self.clone();
        // Symmetrize defensively: downstream callers build products that are
        // symmetric only up to rounding.
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (a.get(i, j) + a.get(j, i));
                a.set(i, j, s);
                a.set(j, i, s);
            }
        }
        let mut v = SymMatrix::zeros(d);
        for i in 0..d {
            v.set(i, i, 1.0);
        }
        let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        let tol = 1e-15 * scale;
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..d {
                for j in (i + 1)..d {
                    off += a.get(i, j).abs();
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a.get(p, q);
                    if apq.abs() <= tol * 1e-2 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..d {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..d {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
        let mut vectors = SymMatrix::zeros(d);
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..d {
                vectors.set(k, new_col, v.get(k, old_col));
            }
        }
        (values, vectors)
    }
}

/// Orthonormalize the columns of an `nrows x ncols` matrix (given as column
/// vectors) with modified Gram–Schmidt, run twice for numerical cleanliness.
///
/// Requires `ncols <= nrows` and numerically independent inputs; returns an
/// error when a column collapses under projection (rank deficiency).
pub fn orthonormalize_columns(columns: &mut [Vec<f64>]) -> Result<()> {
    let ncols = columns.len();
    if ncols == 0 {
        return Ok(());
    }
    let nrows = columns[0].len();
    if ncols > nrows {
        return Err(Error::contract(format!(
            "cannot orthonormalize {ncols} columns in dimension {nrows}"
        )));
    }
    for _pass in 0..2 {
        for j in 0..ncols {
            // Split to get two non-overlapping borrows of the column slice.
            let (done, rest) = columns.split_at_mut(j);
            let col = &mut rest[0];
            for prev in done.iter() {
                let proj: f64 = prev.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, p) in col.iter_mut().zip(prev.iter()) {
                    *c -= proj * p;
                }
            }
            let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::contract(
                    "rank-deficient matrix in orthonormalization",
                ));
            }
            for c in col.iter_mut() {
                *c /= norm;
            }
        }
    }
    Ok(())
}

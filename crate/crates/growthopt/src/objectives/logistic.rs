//! Separable logistic regression: `f(x) = (1/n) sum_i log(1 + exp(-y_i a_i^T x))`
//! on a linearly separable sample, so the infimum is 0 but is not attained.

use serde::{Deserialize, Serialize};

use crate::linalg::Point;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogisticData {
    /// Feature rows `a_i`.
    pub rows: Vec<Point>,
    /// Labels in `{-1, +1}` stored as `f64`.
    pub labels: Vec<f64>,
    /// Guaranteed margin: the construction places a unit vector `w` with
    /// `y_i (a_i . w) >= margin` for every `i`.
    pub margin: f64,
    /// Construction seed (provenance).
    pub seed: u64,
    /// The unit separating direction `w` used by the construction.
    pub separator: Point,
}

impl LogisticData {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Point::dim)
    }

    /// Margin term `t = y_i a_i^T x`.
    fn score(&self, x: &Point, i: usize) -> f64 {
        self.labels[i] * self.rows[i].dot(x)
    }

    /// `log(1 + exp(-t))` evaluated in a numerically stable branch split.
    pub fn eval_component(&self, x: &Point, i: usize) -> f64 {
        let t = self.score(x, i);
        if t >= 0.0 {
            (-t).exp().ln_1p()
        } else {
            -t + t.exp().ln_1p()
        }
    }

    /// Scalar `c_i` with `grad f_i(x) = c_i a_i`, namely `-y_i sigma(-t)`;
    /// the factor `sigma(-t) = 1 / (1 + exp(t))` is computed without overflow.
    pub(crate) fn grad_factor(&self, x: &Point, i: usize) -> f64 {
        let t = self.score(x, i);
        let s = if t >= 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        };
        -self.labels[i] * s
    }

    pub fn grad_component(&self, x: &Point, i: usize) -> Point {
        self.rows[i].scaled(self.grad_factor(x, i))
    }

    pub fn eval_full(&self, x: &Point) -> f64 {
        let n = self.n() as f64;
        (0..self.n()).map(|i| self.eval_component(x, i)).sum::<f64>() / n
    }

    pub fn grad_full(&self, x: &Point) -> Point {
        let mut g = Point::zeros(self.dim());
        let inv_n = 1.0 / self.n() as f64;
        for i in 0..self.n() {
            g.add_scaled(inv_n * self.grad_factor(x, i), &self.rows[i]);
        }
        g
    }

    /// Closed-form curvature cap: the component Hessian is
    /// `sigma(t)(1 - sigma(t)) a_i a_i^T` with `sigma(1 - sigma) <= 1/4`, so
    /// `max_i ||a_i||^2 / 4` bounds every component (and hence the mean).
    pub fn max_component_curvature(&self) -> f64 {
        self.rows
            .iter()
            .map(|a| 0.25 * a.norm_sq())
            .fold(0.0f64, f64::max)
    }
}

//! Exponential of an inner product: `f(x) = exp(a^T x)`.
//!
//! The classic example of a function whose Hessian norm `||a||^2 exp(a^T x)`
//! is unbounded globally but is controlled linearly by the gradient norm
//! (and, since the infimum is 0, by the function value itself).

use serde::{Deserialize, Serialize};

use crate::linalg::Point;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpInnerData {
    /// Direction `a` (nonzero).
    pub direction: Point,
}

impl ExpInnerData {
    pub fn dim(&self) -> usize {
        self.direction.dim()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.direction.dot(x).exp()
    }

    pub fn grad(&self, x: &Point) -> Point {
        self.direction.scaled(self.eval(x))
    }
}

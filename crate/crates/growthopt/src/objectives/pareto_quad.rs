//! Quadratic with heavy-tailed multiplicative gradient noise.
//!
//! The objective itself is `f(x) = ||x||^2 / 2`; stochastic gradients are
//! `(Z + 1) x` where `|Z|` is Pareto with tail index `alpha` on `[1, inf)`
//! and the sign of `Z` is symmetric. `E Z = 0`, so the oracle is unbiased,
//! and `E |Z|^p = alpha / (alpha - p)` is finite exactly for `p < alpha`:
//! a clean dial for studying moment-limited noise.

use serde::{Deserialize, Serialize};

use crate::linalg::Point;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParetoQuadData {
    /// Tail index of the noise magnitude; must exceed 1 so the mean exists.
    pub alpha: f64,
    /// Ambient dimension.
    pub dim: usize,
}

impl ParetoQuadData {
    pub fn eval(&self, x: &Point) -> f64 {
        0.5 * x.norm_sq()
    }

    pub fn grad(&self, x: &Point) -> Point {
        x.clone()
    }

    /// `E |Z|^p = alpha / (alpha - p)` for `p < alpha`; `None` otherwise
    /// (the moment diverges).
    pub fn abs_moment(&self, p: f64) -> Option<f64> {
        if p >= 0.0 && p < self.alpha {
            Some(self.alpha / (self.alpha - p))
        } else {
            None
        }
    }

    /// Single-draw growth ratio `E ||(Z+1) x||^p / ||x||^p = E |Z+1|^p`.
    /// For `p = 2` (when finite) the sign symmetry kills the cross term and
    /// the ratio is `E Z^2 + 1`; for general `p in (1, alpha)` we expose the
    /// convenient upper-bound form `E |Z|^p + 1` used in the batch analysis.
    pub fn growth_ratio(&self, p: f64) -> Option<f64> {
        self.abs_moment(p).map(|m| m + 1.0)
    }
}

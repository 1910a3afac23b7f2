//! Synthetic problem families with closed-form gradients and known constants.
//!
//! Four families cover the regimes the optimizers and checks care about:
//!
//! * [`LeastSquaresData`] — interpolating finite sum; convex, `L`-smooth,
//!   optionally strongly convex, with an exactly computable growth ratio.
//! * [`LogisticData`] — separable logistic regression; convex with an
//!   infimum (0) that is not attained.
//! * [`ExpInnerData`] — `exp(a^T x)`; the canonical generalized-smooth
//!   function that is not `L`-smooth.
//! * [`ParetoQuadData`] — quadratic with symmetric heavy-tailed
//!   multiplicative gradient noise of tunable tail index.

mod exp_inner;
mod least_squares;
mod logistic;
mod pareto_quad;

pub use exp_inner::ExpInnerData;
pub use least_squares::LeastSquaresData;
pub use logistic::LogisticData;
pub use pareto_quad::ParetoQuadData;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, Point};
use crate::rng::{streams, SeedStream};

/// How a smoothness constant was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Derived in closed form from the family definition.
    Analytic,
    /// Estimated by fuzzing; an approximation, not a certificate.
    Empirical,
}

/// A nonnegative smoothness/convexity constant plus its provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn analytic(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::Analytic,
        }
    }

    pub fn empirical(value: f64) -> Self {
        Constant {
            value,
            provenance: Provenance::Empirical,
        }
    }
}

/// Smoothness description of an objective.
///
/// `l0`/`l1` bound the full objective's Hessian by `l0 + l1 ||grad f(x)||`
/// locally; `cl0`/`cl1` are the same constants holding for every realization
/// (absent when single draws are unbounded); `h0`/`h1` bound the Hessian by
/// `h0 + h1 (f(x) - f*)`; `mu` is strong convexity when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    pub l0: Constant,
    pub l1: Constant,
    pub cl0: Option<Constant>,
    pub cl1: Option<Constant>,
    pub h0: Constant,
    pub h1: Constant,
    pub mu: Option<Constant>,
}

impl SmoothnessProfile {
    /// All constants must be nonnegative and finite; `mu`, when present,
    /// must be strictly positive to be meaningful.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("l0", Some(self.l0)),
            ("l1", Some(self.l1)),
            ("cl0", self.cl0),
            ("cl1", self.cl1),
            ("h0", Some(self.h0)),
            ("h1", Some(self.h1)),
        ];
        for (name, c) in named {
            if let Some(c) = c {
                if !c.value.is_finite() || c.value < 0.0 {
                    return Err(Error::contract(format!(
                        "smoothness constant {name} must be finite and >= 0, got {}",
                        c.value
                    )));
                }
            }
        }
        if let Some(mu) = self.mu {
            if !mu.value.is_finite() || mu.value <= 0.0 {
                return Err(Error::contract(format!(
                    "strong convexity constant must be finite and > 0, got {}",
                    mu.value
                )));
            }
        }
        Ok(())
    }
}

/// Problem family and its data. The serde tag doubles as the config-file
/// family name.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    InterpLeastSquares(LeastSquaresData),
    SeparableLogistic(LogisticData),
    ExpInnerProduct(ExpInnerData),
    ParetoQuadratic(ParetoQuadData),
}

/// A fully specified objective: family data plus optimum metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Minimizer, when one exists and is known.
    pub known_optimum: Option<Point>,
    /// Optimal (or infimal) value, when known.
    pub known_fstar: Option<f64>,
    /// Per-component optimal values for finite sums (all zero under
    /// interpolation).
    pub per_component_fstar: Option<Vec<f64>>,
    /// True when `known_fstar` is an infimum that is not attained.
    pub infimum_only: bool,
    /// Standard deviation of additive Gaussian gradient noise injected by the
    /// stochastic oracle on top of component sampling (`E||noise||^2 = sigma^2`).
    /// Zero means the oracle noise comes from component sampling alone.
    #[serde(default)]
    pub oracle_noise_sigma: f64,
}

impl ObjectiveSpec {
    pub fn family_name(&self) -> &'static str {
        match &self.family {
            Family::InterpLeastSquares(_) => "interp_least_squares",
            Family::SeparableLogistic(_) => "separable_logistic",
            Family::ExpInnerProduct(_) => "exp_inner_product",
            Family::ParetoQuadratic(_) => "pareto_quadratic",
        }
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            Family::InterpLeastSquares(d) => d.dim(),
            Family::SeparableLogistic(d) => d.dim(),
            Family::ExpInnerProduct(d) => d.dim(),
            Family::ParetoQuadratic(d) => d.dim,
        }
    }

    /// Component count; 0 for families whose stochasticity is not a finite
    /// sum (or that are deterministic).
    pub fn n_components(&self) -> usize {
        match &self.family {
            Family::InterpLeastSquares(d) => d.n(),
            Family::SeparableLogistic(d) => d.n(),
            Family::ExpInnerProduct(_) | Family::ParetoQuadratic(_) => 0,
        }
    }

    pub fn is_finite_sum(&self) -> bool {
        self.n_components() > 0
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn eval_full(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.family {
            Family::InterpLeastSquares(d) => d.eval_full(x),
            Family::SeparableLogistic(d) => d.eval_full(x),
            Family::ExpInnerProduct(d) => d.eval(x),
            Family::ParetoQuadratic(d) => d.eval(x),
        })
    }

    pub fn grad_full(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        Ok(match &self.family {
            Family::InterpLeastSquares(d) => d.grad_full(x),
            Family::SeparableLogistic(d) => d.grad_full(x),
            Family::ExpInnerProduct(d) => d.grad(x),
            Family::ParetoQuadratic(d) => d.grad(x),
        })
    }

    fn check_component(&self, i: usize) -> Result<()> {
        let n = self.n_components();
        if n == 0 {
            return Err(Error::Unsupported {
                family: self.family_name(),
                operation: "per-component access",
            });
        }
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(())
    }

    pub fn eval_component(&self, x: &Point, i: usize) -> Result<f64> {
        self.check_dim(x)?;
        self.check_component(i)?;
        Ok(match &self.family {
            Family::InterpLeastSquares(d) => d.eval_component(x, i),
            Family::SeparableLogistic(d) => d.eval_component(x, i),
            _ => unreachable!("check_component rejects non-finite-sum families"),
        })
    }

    pub fn grad_component(&self, x: &Point, i: usize) -> Result<Point> {
        self.check_dim(x)?;
        self.check_component(i)?;
        Ok(match &self.family {
            Family::InterpLeastSquares(d) => d.grad_component(x, i),
            Family::SeparableLogistic(d) => d.grad_component(x, i),
            _ => unreachable!("check_component rejects non-finite-sum families"),
        })
    }

    pub fn smoothness_constants(&self) -> SmoothnessProfile {
        match &self.family {
            Family::InterpLeastSquares(d) => {
                let l0 = d.max_row_norm_sq();
                SmoothnessProfile {
                    l0: Constant::analytic(l0),
                    l1: Constant::analytic(0.0),
                    cl0: Some(Constant::analytic(l0)),
                    cl1: Some(Constant::analytic(0.0)),
                    h0: Constant::analytic(l0),
                    h1: Constant::analytic(0.0),
                    mu: d.strong_convexity().map(Constant::analytic),
                }
            }
            Family::SeparableLogistic(d) => {
                // sigma'(t) <= 1/4 caps every component Hessian at
                // ||a_i||^2 / 4; the mean inherits the same cap.
                let l0 = d.max_component_curvature();
                SmoothnessProfile {
                    l0: Constant::analytic(l0),
                    l1: Constant::analytic(0.0),
                    cl0: Some(Constant::analytic(l0)),
                    cl1: Some(Constant::analytic(0.0)),
                    h0: Constant::analytic(l0),
                    h1: Constant::analytic(0.0),
                    mu: None,
                }
            }
            Family::ExpInnerProduct(d) => {
                let a = d.direction.norm();
                SmoothnessProfile {
                    l0: Constant::analytic(0.0),
                    l1: Constant::analytic(a),
                    cl0: Some(Constant::analytic(0.0)),
                    cl1: Some(Constant::analytic(a)),
                    h0: Constant::analytic(0.0),
                    h1: Constant::analytic(a * a),
                    mu: None,
                }
            }
            Family::ParetoQuadratic(_) => SmoothnessProfile {
                l0: Constant::analytic(1.0),
                l1: Constant::analytic(0.0),
                // Single draws (Z+1)x have unbounded curvature |Z+1| over
                // the noise distribution, so no per-realization constants.
                cl0: None,
                cl1: None,
                h0: Constant::analytic(1.0),
                h1: Constant::analytic(0.0),
                mu: Some(Constant::analytic(1.0)),
            },
        }
    }

    pub fn fstar(&self) -> Option<f64> {
        self.known_fstar
    }

    /// `f(x) - f*` when the optimal value is known.
    pub fn gap(&self, value: f64) -> Option<f64> {
        self.known_fstar.map(|f| value - f)
    }

    pub fn optimum(&self) -> Option<&Point> {
        self.known_optimum.as_ref()
    }

    /// Exact supremum of the single-draw growth ratio, available for
    /// interpolating least squares with a nonsingular Gram matrix.
    pub fn sgc_ratio_sup(&self) -> Option<f64> {
        match &self.family {
            Family::InterpLeastSquares(d) => d.sgc_ratio_sup(),
            Family::ExpInnerProduct(_) => Some(1.0), // deterministic oracle
            _ => None,
        }
    }

    /// Attach additive Gaussian oracle noise (finite-sum families only; the
    /// Pareto family carries its own noise model and the exponential family
    /// is deliberately deterministic).
    pub fn with_oracle_noise(mut self, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::contract(format!(
                "oracle noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if sigma > 0.0 && !self.is_finite_sum() {
            return Err(Error::Unsupported {
                family: self.family_name(),
                operation: "injected Gaussian oracle noise",
            });
        }
        self.oracle_noise_sigma = sigma;
        Ok(self)
    }

    /// Structural sanity for specs arriving from config files.
    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::InterpLeastSquares(d) => {
                if d.rows.is_empty() || d.targets.len() != d.rows.len() {
                    return Err(Error::contract("least-squares rows/targets mismatch"));
                }
                if d.rows.iter().any(|r| r.dim() != d.dim()) {
                    return Err(Error::contract("least-squares row dimension mismatch"));
                }
            }
            Family::SeparableLogistic(d) => {
                if d.rows.is_empty() || d.labels.len() != d.rows.len() {
                    return Err(Error::contract("logistic rows/labels mismatch"));
                }
                if d.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::contract("logistic labels must be +/-1"));
                }
                if !(d.margin.is_finite() && d.margin > 0.0) {
                    return Err(Error::contract("logistic margin must be > 0"));
                }
            }
            Family::ExpInnerProduct(d) => {
                if d.direction.norm() == 0.0 {
                    return Err(Error::contract("exp-inner-product direction must be nonzero"));
                }
            }
            Family::ParetoQuadratic(d) => {
                if !(d.alpha.is_finite() && d.alpha > 1.0) {
                    return Err(Error::contract("pareto tail index must be > 1"));
                }
                if d.dim == 0 {
                    return Err(Error::contract("pareto dimension must be >= 1"));
                }
            }
        }
        if let Some(opt) = &self.known_optimum {
            if opt.dim() != self.dim() {
                return Err(Error::contract("known_optimum dimension mismatch"));
            }
        }
        if !self.oracle_noise_sigma.is_finite() || self.oracle_noise_sigma < 0.0 {
            return Err(Error::contract("oracle_noise_sigma must be finite and >= 0"));
        }
        self.smoothness_constants().validate()
    }
}

pub(crate) fn gaussian_vec(rng: &mut SeedStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random interpolating least squares with a controlled singular-value
/// spread.
///
/// The row matrix is assembled as `A = U diag(sigma) V^T` with orthonormal
/// `U` (n x r) and `V` (d x r), `r = min(n, d)`, and log-spaced singular
/// values spanning exactly `conditioning = sigma_max / sigma_min` with
/// geometric mean 1. The minimizer is drawn afterwards and targets are set
/// to `b_i = a_i . x*` with the evaluation-time dot product, making the
/// interpolation exact in floating point, not just in theory.
pub fn build_interp_least_squares(
    seed: u64,
    n: usize,
    d: usize,
    conditioning: f64,
) -> Result<ObjectiveSpec> {
    if n == 0 || d == 0 {
        return Err(Error::contract("least squares needs n >= 1 and d >= 1"));
    }
    if !conditioning.is_finite() || conditioning < 1.0 {
        return Err(Error::contract(format!(
            "conditioning must be finite and >= 1, got {conditioning}"
        )));
    }
    let mut rng = SeedStream::substream(seed, streams::BUILD);
    let r = n.min(d);
    let singulars: Vec<f64> = if r == 1 {
        vec![1.0]
    } else {
        (0..r)
            .map(|j| conditioning.powf(j as f64 / (r - 1) as f64 - 0.5))
            .collect()
    };
    let mut u_cols: Vec<Vec<f64>> = (0..r).map(|_| gaussian_vec(&mut rng, n)).collect();
    orthonormalize_columns(&mut u_cols)?;
    let mut v_cols: Vec<Vec<f64>> = (0..r).map(|_| gaussian_vec(&mut rng, d)).collect();
    orthonormalize_columns(&mut v_cols)?;
    let rows: Vec<Point> = (0..n)
        .map(|i| {
            let mut a = vec![0.0; d];
            for j in 0..r {
                let w = u_cols[j][i] * singulars[j];
                for (ak, vk) in a.iter_mut().zip(v_cols[j].iter()) {
                    *ak += w * vk;
                }
            }
            Point::new(a)
        })
        .collect::<Result<_>>()?;
    let x_star = Point::new(gaussian_vec(&mut rng, d))?;
    let targets: Vec<f64> = rows.iter().map(|a| a.dot(&x_star)).collect();
    let data = LeastSquaresData {
        rows,
        targets,
        x_star: x_star.clone(),
        seed,
        conditioning,
    };
    Ok(ObjectiveSpec {
        family: Family::InterpLeastSquares(data),
        known_optimum: Some(x_star),
        known_fstar: Some(0.0),
        per_component_fstar: Some(vec![0.0; n]),
        infimum_only: false,
        oracle_noise_sigma: 0.0,
    })
}

/// Random linearly separable logistic regression with a guaranteed margin.
///
/// A unit separator `w` is drawn first; each sample is a Gaussian point with
/// its component along `w` replaced by `label * (margin + |t|)` for Gaussian
/// `t`, so `y_i (a_i . w) >= margin` holds by construction.
pub fn build_separable_logistic(
    seed: u64,
    n: usize,
    d: usize,
    margin: f64,
) -> Result<ObjectiveSpec> {
    if n == 0 || d == 0 {
        return Err(Error::contract("logistic needs n >= 1 and d >= 1"));
    }
    if !margin.is_finite() || margin <= 0.0 {
        return Err(Error::contract(format!(
            "margin must be finite and > 0, got {margin}"
        )));
    }
    let mut rng = SeedStream::substream(seed, streams::BUILD);
    let w = loop {
        let raw = gaussian_vec(&mut rng, d);
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            break Point::new(raw.into_iter().map(|v| v / norm).collect())?;
        }
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let z = Point::new(gaussian_vec(&mut rng, d))?;
        let y: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let t: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        // Project out the w-component, then place the sample at signed
        // distance margin + t along w.
        let mut a = z.clone();
        a.add_scaled(-w.dot(&z), &w);
        a.add_scaled(y * (margin + t), &w);
        rows.push(a);
        labels.push(y);
    }
    let data = LogisticData {
        rows,
        labels,
        margin,
        seed,
        separator: w,
    };
    Ok(ObjectiveSpec {
        family: Family::SeparableLogistic(data),
        known_optimum: None,
        known_fstar: Some(0.0),
        per_component_fstar: Some(vec![0.0; n]),
        infimum_only: true,
        oracle_noise_sigma: 0.0,
    })
}

/// `f(x) = exp(a^T x)`; rejects the zero direction (the function would be
/// constant, and the family's whole point is unbounded curvature).
pub fn build_exp_inner_product(direction: Point) -> Result<ObjectiveSpec> {
    if direction.norm() == 0.0 {
        return Err(Error::contract(
            "exp-inner-product direction must be nonzero",
        ));
    }
    Ok(ObjectiveSpec {
        family: Family::ExpInnerProduct(ExpInnerData { direction }),
        known_optimum: None,
        known_fstar: Some(0.0),
        per_component_fstar: None,
        infimum_only: true,
        oracle_noise_sigma: 0.0,
    })
}

/// Quadratic with symmetric-Pareto multiplicative gradient noise; `alpha`
/// must exceed 1 so the noise has a mean and the oracle is unbiased.
pub fn build_pareto_quadratic(alpha: f64, dim: usize) -> Result<ObjectiveSpec> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::contract(format!(
            "pareto tail index must be finite and > 1, got {alpha}"
        )));
    }
    if dim == 0 {
        return Err(Error::contract("pareto dimension must be >= 1"));
    }
    Ok(ObjectiveSpec {
        family: Family::ParetoQuadratic(ParetoQuadData { alpha, dim }),
        known_optimum: Some(Point::zeros(dim)),
        known_fstar: Some(0.0),
        per_component_fstar: None,
        infimum_only: false,
        oracle_noise_sigma: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ls_from_rows(rows: Vec<Vec<f64>>, x_star: Vec<f64>) -> ObjectiveSpec {
        let rows: Vec<Point> = rows.into_iter().map(|r| Point::new(r).unwrap()).collect();
        let x_star = Point::new(x_star).unwrap();
        let targets: Vec<f64> = rows.iter().map(|a| a.dot(&x_star)).collect();
        let n = rows.len();
        ObjectiveSpec {
            family: Family::InterpLeastSquares(LeastSquaresData {
                rows,
                targets,
                x_star: x_star.clone(),
                seed: 0,
                conditioning: 1.0,
            }),
            known_optimum: Some(x_star),
            known_fstar: Some(0.0),
            per_component_fstar: Some(vec![0.0; n]),
            infimum_only: false,
            oracle_noise_sigma: 0.0,
        }
    }

    /// Central finite differences with per-coordinate relative step.
    fn fd_grad(obj: &ObjectiveSpec, x: &Point) -> Vec<f64> {
        let h_base = 1e-6;
        (0..x.dim())
            .map(|k| {
                let h = h_base * (1.0 + x.coords()[k].abs());
                let mut hi = x.coords().to_vec();
                let mut lo = hi.clone();
                hi[k] += h;
                lo[k] -= h;
                let fh = obj.eval_full(&Point::new(hi).unwrap()).unwrap();
                let fl = obj.eval_full(&Point::new(lo).unwrap()).unwrap();
                (fh - fl) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(obj: &ObjectiveSpec, x: &Point, rel_tol: f64) {
        let g = obj.grad_full(x).unwrap();
        let fd = fd_grad(obj, x);
        let scale = g.norm().max(1.0);
        for (k, (&a, &b)) in g.coords().iter().zip(fd.iter()).enumerate() {
            assert!(
                (a - b).abs() <= rel_tol * scale,
                "coordinate {k}: analytic {a} vs fd {b}"
            );
        }
    }

    #[test]
    fn least_squares_identity_value() {
        // A = I_2, x* = (1,1), x = (0,0): each residual is -1, so
        // f = (0.5 + 0.5)/2 = 0.5 exactly.
        let obj = ls_from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]);
        let x = Point::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(obj.eval_full(&x).unwrap(), 0.5);
    }

    #[test]
    fn least_squares_component_gradients_hand_values() {
        // Rows (2,0) and (0,0) with zero targets (x* = 0). At x = (1,1):
        // component 0 -> a_0 (a_0 . x) = (2,0) * 2 = (4,0); component 1 -> 0.
        let obj = ls_from_rows(vec![vec![2.0, 0.0], vec![0.0, 0.0]], vec![0.0, 0.0]);
        let x = Point::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            obj.grad_component(&x, 0).unwrap().coords(),
            &[4.0, 0.0]
        );
        assert_eq!(
            obj.grad_component(&x, 1).unwrap().coords(),
            &[0.0, 0.0]
        );
    }

    #[test]
    fn component_errors() {
        let obj = ls_from_rows(vec![vec![1.0]], vec![2.0]);
        let x = Point::new(vec![0.0]).unwrap();
        assert!(matches!(
            obj.grad_component(&x, 1),
            Err(Error::IndexOutOfRange { index: 1, n: 1 })
        ));
        let pareto = build_pareto_quadratic(2.0, 3).unwrap();
        let y = Point::zeros(3);
        assert!(matches!(
            pareto.grad_component(&y, 0),
            Err(Error::Unsupported { .. })
        ));
        let wrong_dim = Point::zeros(2);
        assert!(matches!(
            pareto.eval_full(&wrong_dim),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn built_least_squares_interpolates_exactly() {
        let obj = build_interp_least_squares(7, 50, 20, 30.0).unwrap();
        let x_star = obj.optimum().unwrap().clone();
        for i in 0..50 {
            // Targets reuse the evaluation dot product, so residuals vanish
            // in floating point, not merely approximately.
            assert_eq!(obj.grad_component(&x_star, i).unwrap().norm(), 0.0);
        }
        assert_eq!(obj.eval_full(&x_star).unwrap(), 0.0);
    }

    #[test]
    fn built_least_squares_hits_requested_conditioning() {
        let cond = 100.0;
        let obj = build_interp_least_squares(11, 40, 12, cond).unwrap();
        let Family::InterpLeastSquares(data) = &obj.family else {
            unreachable!()
        };
        let (vals, _) = data.gram().sym_eigen();
        let ratio = vals.last().unwrap() / vals.first().unwrap();
        let expect = cond * cond; // eigenvalues of A^T A scale as sigma^2
        assert!(
            (ratio / expect - 1.0).abs() < 1e-6,
            "gram eigenvalue spread {ratio} vs requested {expect}"
        );
    }

    #[test]
    fn component_mean_matches_full() {
        for obj in [
            build_interp_least_squares(3, 13, 5, 4.0).unwrap(),
            build_separable_logistic(5, 17, 6, 0.5).unwrap(),
        ] {
            let mut rng = SeedStream::substream(999, streams::FUZZ);
            let x = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
            let n = obj.n_components();
            let mean_val: f64 = (0..n)
                .map(|i| obj.eval_component(&x, i).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!((mean_val - obj.eval_full(&x).unwrap()).abs() <= 1e-12);
            let mut mean_grad = Point::zeros(obj.dim());
            for i in 0..n {
                mean_grad.add_scaled(1.0 / n as f64, &obj.grad_component(&x, i).unwrap());
            }
            let full = obj.grad_full(&x).unwrap();
            assert!(mean_grad.dist(&full) <= 1e-12 * (1.0 + full.norm()));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeedStream::substream(42, streams::FUZZ);
        let objs = vec![
            build_interp_least_squares(1, 10, 4, 10.0).unwrap(),
            build_separable_logistic(2, 12, 4, 1.0).unwrap(),
            build_exp_inner_product(Point::new(vec![0.3, -0.7, 0.2]).unwrap()).unwrap(),
            build_pareto_quadratic(1.5, 4).unwrap(),
        ];
        for obj in &objs {
            for _ in 0..10 {
                let x = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
                assert_grad_close(obj, &x, 1e-6);
            }
        }
    }

    #[test]
    fn exp_inner_product_hand_values() {
        let obj = build_exp_inner_product(Point::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let origin = Point::zeros(2);
        assert_eq!(obj.eval_full(&origin).unwrap(), 1.0);
        assert_eq!(obj.grad_full(&origin).unwrap().coords(), &[1.0, 0.0]);
        let prof = build_exp_inner_product(Point::new(vec![2.0, 0.0]).unwrap())
            .unwrap()
            .smoothness_constants();
        assert_eq!(prof.l0.value, 0.0);
        assert_eq!(prof.l1.value, 2.0);
        assert_eq!(prof.h0.value, 0.0);
        assert_eq!(prof.h1.value, 4.0);
        assert_eq!(prof.h1.provenance, Provenance::Analytic);
        // f > 0 everywhere, including far into the flat tail.
        let far = Point::new(vec![-300.0, 5.0]).unwrap();
        assert!(obj.eval_full(&far).unwrap() > 0.0);
        assert!(build_exp_inner_product(Point::zeros(2)).is_err());
    }

    #[test]
    fn pareto_profile_and_moments() {
        let obj = build_pareto_quadratic(2.0, 2).unwrap();
        let prof = obj.smoothness_constants();
        assert_eq!(prof.l0.value, 1.0);
        assert_eq!(prof.l1.value, 0.0);
        assert_eq!(prof.mu.unwrap().value, 1.0);
        assert!(prof.cl0.is_none() && prof.cl1.is_none());
        let x = Point::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(obj.grad_full(&x).unwrap().coords(), &[3.0, 4.0]);

        let Family::ParetoQuadratic(d) = &obj.family else {
            unreachable!()
        };
        // alpha = 2: E|Z| = 2/(2-1) = 2, so the p = 1 growth ratio is 3.
        assert_eq!(d.abs_moment(1.0), Some(2.0));
        assert_eq!(d.growth_ratio(1.0), Some(3.0));
        assert_eq!(d.abs_moment(2.0), None); // diverges at p = alpha

        let heavy = ParetoQuadData { alpha: 1.5, dim: 1 };
        // E|Z|^1.2 = 1.5/0.3 = 5, growth ratio 6.
        assert!((heavy.abs_moment(1.2).unwrap() - 5.0).abs() < 1e-12);
        assert!((heavy.growth_ratio(1.2).unwrap() - 6.0).abs() < 1e-12);

        assert!(build_pareto_quadratic(1.0, 2).is_err());
        assert!(build_pareto_quadratic(0.5, 2).is_err());
    }

    #[test]
    fn logistic_construction_respects_margin() {
        let obj = build_separable_logistic(3, 40, 8, 0.5).unwrap();
        let Family::SeparableLogistic(d) = &obj.family else {
            unreachable!()
        };
        assert!((d.separator.norm() - 1.0).abs() < 1e-12);
        for (a, &y) in d.rows.iter().zip(d.labels.iter()) {
            assert!(y * a.dot(&d.separator) >= d.margin * (1.0 - 1e-9));
        }
        // Walking along the separator drives the separable loss down
        // monotonically.
        let mut prev = f64::INFINITY;
        for t in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let v = obj.eval_full(&d.separator.scaled(t)).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(obj.infimum_only);
        assert_eq!(obj.fstar(), Some(0.0));
        assert!(obj.optimum().is_none());
    }

    #[test]
    fn logistic_symmetric_pair_gradient_hand_value() {
        // Two points +/-v with matching label signs: at the origin every
        // sigmoid factor is 1/2, so grad = -(1/2) * mean(y_i a_i) = -v/2.
        let v = vec![2.0, -1.0];
        let data = LogisticData {
            rows: vec![
                Point::new(v.clone()).unwrap(),
                Point::new(v.iter().map(|c| -c).collect()).unwrap(),
            ],
            labels: vec![1.0, -1.0],
            margin: 1.0,
            seed: 0,
            separator: Point::new(vec![2.0 / 5.0f64.sqrt(), -1.0 / 5.0f64.sqrt()]).unwrap(),
        };
        let g = data.grad_full(&Point::zeros(2));
        assert!((g.coords()[0] - (-1.0)).abs() < 1e-15);
        assert!((g.coords()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_is_stable_at_extreme_scores() {
        let obj = build_separable_logistic(9, 10, 3, 1.0).unwrap();
        let Family::SeparableLogistic(d) = &obj.family else {
            unreachable!()
        };
        for t in [-500.0, 500.0] {
            let x = d.separator.scaled(t);
            let v = obj.eval_full(&x).unwrap();
            let g = obj.grad_full(&x).unwrap();
            assert!(v.is_finite() && v >= 0.0);
            assert!(g.is_finite());
        }
    }

    #[test]
    fn smoothness_validation_rejects_negative() {
        let mut prof = build_pareto_quadratic(2.0, 1).unwrap().smoothness_constants();
        assert!(prof.validate().is_ok());
        prof.l0 = Constant::analytic(-1.0);
        assert!(prof.validate().is_err());
    }

    #[test]
    fn ls_unit_rows_profile() {
        // All rows unit norm -> L0 = 1, L1 = 0.
        let obj = ls_from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let prof = obj.smoothness_constants();
        assert_eq!(prof.l0.value, 1.0);
        assert_eq!(prof.l1.value, 0.0);
        assert_eq!(prof.cl0.unwrap().value, 1.0);
        assert_eq!(prof.mu.unwrap().value, 0.5); // lambda_min(A^T A / n)
    }

    #[test]
    fn sgc_sup_dominates_pointwise_ratio() {
        let obj = build_interp_least_squares(13, 30, 6, 25.0).unwrap();
        let sup = obj.sgc_ratio_sup().expect("nonsingular gram");
        assert!(sup >= 1.0 - 1e-9);
        let Family::InterpLeastSquares(data) = &obj.family else {
            unreachable!()
        };
        let mut rng = SeedStream::substream(77, streams::FUZZ);
        for _ in 0..20 {
            let x = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
            let full = data.grad_full(&x).norm_sq();
            if full < 1e-18 {
                continue;
            }
            let mean_sq: f64 = (0..data.n())
                .map(|i| data.grad_component(&x, i).norm_sq())
                .sum::<f64>()
                / data.n() as f64;
            assert!(mean_sq / full <= sup * (1.0 + 1e-9));
        }
    }

    #[test]
    fn smoothness_certificates_hold_on_fuzzed_pairs() {
        use rand::Rng;
        // Both certificates, 250 pairs per family. The modulus is anchored
        // at the steeper endpoint (larger gradient, resp. larger gap) —
        // the orientation in which every descent argument applies it.
        let objs = vec![
            build_interp_least_squares(17, 12, 5, 8.0).unwrap(),
            build_separable_logistic(18, 14, 4, 0.5).unwrap(),
            build_exp_inner_product(Point::new(vec![0.9, -1.3, 0.4]).unwrap()).unwrap(),
            build_pareto_quadratic(1.7, 3).unwrap(),
        ];
        let mut rng = SeedStream::substream(4242, streams::FUZZ);
        for obj in &objs {
            let prof = obj.smoothness_constants();
            let (l0, l1) = (prof.l0.value, prof.l1.value);
            let (h0, h1) = (prof.h0.value, prof.h1.value);
            let radius_l = if l1 > 0.0 { 1.0 / l1 } else { 2.0 };
            let radius_h = if h1 > 0.0 { 1.0 / h1.sqrt() } else { 2.0 };
            for _ in 0..250 {
                let x = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
                let dir = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
                if dir.norm() == 0.0 {
                    continue;
                }
                let gx = obj.grad_full(&x).unwrap();

                let t = rng.gen::<f64>() * radius_l / dir.norm();
                let mut y = x.clone();
                y.add_scaled(t, &dir);
                let gy = obj.grad_full(&y).unwrap();
                let dist = y.dist(&x);
                let anchor = gx.norm().max(gy.norm());
                assert!(
                    gy.dist(&gx) <= (l0 + l1 * anchor) * dist * (1.0 + 1e-8),
                    "{}: (l0,l1) certificate broke at dist {dist}",
                    obj.family_name()
                );

                let t = rng.gen::<f64>() * radius_h / dir.norm();
                let mut y = x.clone();
                y.add_scaled(t, &dir);
                let gy = obj.grad_full(&y).unwrap();
                let dist = y.dist(&x);
                let gap_x = obj.gap(obj.eval_full(&x).unwrap()).unwrap();
                let gap_y = obj.gap(obj.eval_full(&y).unwrap()).unwrap();
                let gap = gap_x.max(gap_y);
                assert!(
                    gy.dist(&gx) <= (h0 + h1 * gap) * dist * (1.0 + 1e-8),
                    "{}: (h0,h1) certificate broke at dist {dist}",
                    obj.family_name()
                );
            }
        }
    }

    #[test]
    fn convex_families_dominate_their_tangents() {
        // All four families are convex: f(y) >= f(x) + <grad f(x), y - x>
        // up to floating-point noise on fuzzed pairs.
        let objs = vec![
            build_interp_least_squares(17, 12, 5, 8.0).unwrap(),
            build_separable_logistic(18, 14, 4, 0.5).unwrap(),
            build_exp_inner_product(Point::new(vec![0.9, -1.3, 0.4]).unwrap()).unwrap(),
            build_pareto_quadratic(1.7, 3).unwrap(),
        ];
        let mut rng = SeedStream::substream(2424, streams::FUZZ);
        for obj in &objs {
            for _ in 0..250 {
                let x = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
                let y = Point::new(gaussian_vec(&mut rng, obj.dim())).unwrap();
                let g = obj.grad_full(&x).unwrap();
                let mut step = y.clone();
                step.add_scaled(-1.0, &x);
                let tangent = obj.eval_full(&x).unwrap() + g.dot(&step);
                assert!(
                    obj.eval_full(&y).unwrap() >= tangent - 1e-10,
                    "{}: tangent domination broke",
                    obj.family_name()
                );
            }
        }
    }

    #[test]
    fn spec_json_roundtrip_is_bit_exact() {
        let obj = build_interp_least_squares(21, 8, 5, 12.0).unwrap();
        let json = serde_json::to_string(&obj).unwrap();
        let back: ObjectiveSpec = serde_json::from_str(&json).unwrap();
        let json2 = serde_json::to_string(&back).unwrap();
        assert_eq!(json, json2);
        let Family::InterpLeastSquares(a) = &obj.family else {
            unreachable!()
        };
        let Family::InterpLeastSquares(b) = &back.family else {
            unreachable!()
        };
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            for (ca, cb) in ra.coords().iter().zip(rb.coords().iter()) {
                assert_eq!(ca.to_bits(), cb.to_bits());
            }
        }
        for (ta, tb) in a.targets.iter().zip(b.targets.iter()) {
            assert_eq!(ta.to_bits(), tb.to_bits());
        }
    }

    #[test]
    fn spec_rejects_non_finite_points_in_json() {
        let bad = r#"{"family":"exp_inner_product","direction":[1.0,null],
            "known_optimum":null,"known_fstar":0.0,
            "per_component_fstar":null,"infimum_only":true}"#;
        assert!(serde_json::from_str::<ObjectiveSpec>(bad).is_err());
    }

    #[test]
    fn oracle_noise_attachment_rules() {
        let ls = build_interp_least_squares(1, 4, 2, 1.0).unwrap();
        assert_eq!(ls.with_oracle_noise(0.5).unwrap().oracle_noise_sigma, 0.5);
        let pareto = build_pareto_quadratic(2.0, 2).unwrap();
        assert!(pareto.with_oracle_noise(0.5).is_err());
        let exp = build_exp_inner_product(Point::new(vec![1.0]).unwrap()).unwrap();
        assert!(exp.clone().with_oracle_noise(0.5).is_err());
        assert!(exp.with_oracle_noise(0.0).is_ok());
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_interp_least_squares(99, 6, 4, 8.0).unwrap();
        let b = build_interp_least_squares(99, 6, 4, 8.0).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = build_interp_least_squares(100, 6, 4, 8.0).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_ls_gradient_matches_fd(seed in 0u64..1000, n in 1usize..8, d in 1usize..5) {
            let obj = build_interp_least_squares(seed, n, d, 3.0).unwrap();
            let mut rng = SeedStream::substream(seed ^ 0xabcd, streams::FUZZ);
            let x = Point::new(gaussian_vec(&mut rng, d)).unwrap();
            assert_grad_close(&obj, &x, 1e-6);
        }

        #[test]
        fn prop_logistic_nonnegative_and_consistent(seed in 0u64..1000, n in 1usize..8, d in 1usize..5) {
            let obj = build_separable_logistic(seed, n, d, 0.25).unwrap();
            let mut rng = SeedStream::substream(seed ^ 0x1234, streams::FUZZ);
            let x = Point::new(gaussian_vec(&mut rng, d)).unwrap();
            prop_assert!(obj.eval_full(&x).unwrap() >= 0.0);
            let n_c = obj.n_components();
            let mean: f64 = (0..n_c).map(|i| obj.eval_component(&x, i).unwrap()).sum::<f64>() / n_c as f64;
            prop_assert!((mean - obj.eval_full(&x).unwrap()).abs() <= 1e-12);
        }
    }
}

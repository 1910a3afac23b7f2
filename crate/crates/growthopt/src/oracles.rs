//! Mini-batch stochastic gradient oracles and noise-statistic estimators.
//!
//! The oracle model is: a *single draw* is one i.i.d. sample of the
//! stochastic gradient (a uniformly chosen component for finite sums, an
//! independent multiplicative noise variable for the Pareto family, the full
//! gradient for deterministic families), and a mini-batch of size `B`
//! averages `B` single draws. Draws are i.i.d. *with replacement*: the
//! variance identities this crate checks assume independence.
//!
//! Estimators report [`NoiseStats`]: the growth ratio
//! `rho = E||grad f(x,xi)||^2 / ||grad f(x)||^2` (computed exactly over
//! components for finite sums), heavy-tail `p`-th centered moments
//! (median-of-means), and mini-batch variances (Monte Carlo, plus exhaustive
//! enumeration for small batches).

use rand::Rng;
use rand_distr::{OpenClosed01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::linalg::Point;
use crate::objectives::{Family, ObjectiveSpec};
use crate::rng::SeedStream;

/// Gradient norms at or below this are degenerate for ratio statistics.
pub const DEGENERATE_GRAD_TOL: f64 = 1e-12;

const MOM_BLOCKS: usize = 16;

/// What a mini-batch consisted of, for provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Draws {
    /// Component indices drawn for a finite-sum family.
    Components(Vec<usize>),
    /// Multiplicative noise realizations `Z` for the Pareto family.
    Noise(Vec<f64>),
    /// A deterministic family: each of the `count` draws was the full
    /// gradient.
    Full { count: usize },
}

impl Draws {
    pub fn len(&self) -> usize {
        match self {
            Draws::Components(v) => v.len(),
            Draws::Noise(v) => v.len(),
            Draws::Full { count } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One mini-batch oracle call with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSample {
    /// Average of the per-draw gradients.
    pub gradient: Point,
    pub batch_size: usize,
    pub draws: Draws,
    /// Keystream word position *before* the draws, so the sample can be
    /// re-derived from `(seed, stream, cursor)`.
    pub rng_cursor: u128,
}

/// How a noise statistic was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Exact ratio over all components of a finite sum.
    ExactFiniteSum,
    /// Seeded Monte Carlo.
    MonteCarlo,
}

/// Estimated noise constants at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    /// Growth ratio `E||grad f(x,xi)||^2 / ||grad f(x)||^2` (p = 2 form).
    pub rho_hat: f64,
    /// Additive noise level; zero by convention for interpolating families,
    /// fitted jointly with `rho_hat` by [`fit_rho_sigma`].
    pub sigma_hat: f64,
    /// Moment order the `rho_p_hat` field refers to.
    pub p: f64,
    /// `E||grad f(x,xi) - grad f(x)||^p / ||grad f(x)||^p + 1`.
    pub rho_p_hat: f64,
    pub sample_count: u64,
    pub estimator_variant: EstimatorVariant,
}

fn check_dim(obj: &ObjectiveSpec, x: &Point) -> Result<()> {
    if x.dim() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x.dim(),
        });
    }
    Ok(())
}

fn nondegenerate_grad(obj: &ObjectiveSpec, x: &Point) -> Result<Point> {
    let g = obj.grad_full(x)?;
    let norm = g.norm();
    if norm <= DEGENERATE_GRAD_TOL {
        return Err(Error::DegenerateGradient {
            norm,
            threshold: DEGENERATE_GRAD_TOL,
        });
    }
    Ok(g)
}

/// One symmetric-Pareto noise variable: `|Z| = U^{-1/alpha}` for `U` uniform
/// on `(0, 1]` (so `|Z| >= 1` always), then an independent fair sign.
pub fn sample_symmetric_pareto(alpha: f64, rng: &mut SeedStream) -> f64 {
    debug_assert!(alpha > 1.0, "tail index must exceed 1");
    let u: f64 = rng.sample(OpenClosed01);
    let magnitude = u.powf(-1.0 / alpha);
    if rng.gen::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Shared core of [`sample_minibatch`] and [`minibatch_gradient`]. Both must
/// consume the stream identically so that a recorded run can be replayed with
/// either entry point.
fn minibatch_impl(
    obj: &ObjectiveSpec,
    x: &Point,
    b: usize,
    rng: &mut SeedStream,
    record: bool,
) -> Result<(Point, Draws)> {
    if b == 0 {
        return Err(Error::contract("mini-batch size must be >= 1"));
    }
    check_dim(obj, x)?;
    let inv_b = 1.0 / b as f64;
    match &obj.family {
        Family::InterpLeastSquares(_) | Family::SeparableLogistic(_) => {
            let n = obj.n_components();
            let sigma = obj.oracle_noise_sigma;
            // Additive noise is drawn per coordinate with variance sigma^2/d,
            // so a single draw has E||noise||^2 = sigma^2.
            let coord_sd = if sigma > 0.0 {
                sigma / (obj.dim() as f64).sqrt()
            } else {
                0.0
            };
            let mut acc = Point::zeros(obj.dim());
            let mut picked = Vec::with_capacity(if record { b } else { 0 });
            for _ in 0..b {
                let i = rng.gen_range(0..n);
                match &obj.family {
                    Family::InterpLeastSquares(d) => {
                        acc.add_scaled(inv_b * d.residual(x, i), &d.rows[i]);
                    }
                    Family::SeparableLogistic(d) => {
                        acc.add_scaled(inv_b * d.grad_factor(x, i), &d.rows[i]);
                    }
                    _ => unreachable!(),
                }
                if coord_sd > 0.0 {
                    for c in acc.coords_mut() {
                        *c += inv_b * coord_sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                if record {
                    picked.push(i);
                }
            }
            Ok((acc, Draws::Components(picked)))
        }
        Family::ParetoQuadratic(d) => {
            let mut zs = Vec::with_capacity(if record { b } else { 0 });
            let mut factor_sum = 0.0;
            for _ in 0..b {
                let z = sample_symmetric_pareto(d.alpha, rng);
                factor_sum += z + 1.0;
                if record {
                    zs.push(z);
                }
            }
            Ok((x.scaled(inv_b * factor_sum), Draws::Noise(zs)))
        }
        Family::ExpInnerProduct(_) => Ok((obj.grad_full(x)?, Draws::Full { count: b })),
    }
}

/// Mini-batch oracle call with provenance (drawn indices / noise variables
/// and the stream cursor).
pub fn sample_minibatch(
    obj: &ObjectiveSpec,
    x: &Point,
    b: usize,
    rng: &mut SeedStream,
) -> Result<OracleSample> {
    let rng_cursor = rng.cursor();
    let (gradient, draws) = minibatch_impl(obj, x, b, rng, true)?;
    debug_assert_eq!(draws.len(), b);
    Ok(OracleSample {
        gradient,
        batch_size: b,
        draws,
        rng_cursor,
    })
}

/// Lean mini-batch gradient for run loops: identical draws to
/// [`sample_minibatch`], no provenance allocation.
pub fn minibatch_gradient(
    obj: &ObjectiveSpec,
    x: &Point,
    b: usize,
    rng: &mut SeedStream,
) -> Result<Point> {
    minibatch_impl(obj, x, b, rng, false).map(|(g, _)| g)
}

/// Exact growth ratio over the components of a finite sum:
/// `rho(x) = (1/n sum_i ||grad f_i(x)||^2) / ||grad f(x)||^2`.
pub fn estimate_rho(obj: &ObjectiveSpec, x: &Point) -> Result<NoiseStats> {
    if !obj.is_finite_sum() {
        return Err(Error::Unsupported {
            family: obj.family_name(),
            operation: "exact growth-ratio estimation over components",
        });
    }
    check_dim(obj, x)?;
    let g = nondegenerate_grad(obj, x)?;
    let n = obj.n_components();
    let mut mean_sq = 0.0;
    for i in 0..n {
        mean_sq += obj.grad_component(x, i)?.norm_sq();
    }
    mean_sq /= n as f64;
    let rho_hat = mean_sq / g.norm_sq();
    Ok(NoiseStats {
        rho_hat,
        sigma_hat: 0.0,
        p: 2.0,
        rho_p_hat: rho_hat,
        sample_count: n as u64,
        estimator_variant: EstimatorVariant::ExactFiniteSum,
    })
}

/// Monte Carlo estimate of the centered `p`-th moment ratio
/// `E||grad f(x,xi) - grad f(x)||^p / ||grad f(x)||^p + 1` for `p` in (1, 2),
/// using median-of-means over 16 blocks for heavy-tail robustness.
pub fn estimate_p_moment(
    obj: &ObjectiveSpec,
    x: &Point,
    p: f64,
    num_samples: usize,
    rng: &mut SeedStream,
) -> Result<NoiseStats> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::contract(format!(
            "moment order must lie in (1, 2), got {p}"
        )));
    }
    if num_samples < MOM_BLOCKS {
        return Err(Error::contract(format!(
            "need at least {MOM_BLOCKS} samples for median-of-means, got {num_samples}"
        )));
    }
    check_dim(obj, x)?;
    let g = nondegenerate_grad(obj, x)?;
    let mom = median_of_means(num_samples, rng, |block_rng| {
        let (draw, _) = minibatch_impl(obj, x, 1, block_rng, false)?;
        Ok(draw.sub(&g).norm().powf(p))
    })?;
    let rho_p_hat = mom / g.norm().powf(p) + 1.0;
    Ok(NoiseStats {
        rho_hat: rho_p_hat,
        sigma_hat: 0.0,
        p,
        rho_p_hat,
        sample_count: num_samples as u64,
        estimator_variant: EstimatorVariant::MonteCarlo,
    })
}

/// Median over 16 blocks of the block means of `stat`, with the blocks
/// evaluated on independent derived streams (safe to run in parallel, and
/// bit-identical either way).
fn median_of_means<F>(num_samples: usize, rng: &mut SeedStream, stat: F) -> Result<f64>
where
    F: Fn(&mut SeedStream) -> Result<f64> + Sync + Send,
{
    let base = rng.block_base();
    let per_block = num_samples / MOM_BLOCKS;
    let remainder = num_samples % MOM_BLOCKS;
    let block_means: Vec<Result<f64>> = map_indexed(MOM_BLOCKS, |i| {
        let mut block_rng = SeedStream::substream(base, i as u64);
        let count = per_block + usize::from(i < remainder);
        let mut sum = 0.0;
        for _ in 0..count {
            sum += stat(&mut block_rng)?;
        }
        Ok(sum / count as f64)
    });
    let mut means = block_means.into_iter().collect::<Result<Vec<f64>>>()?;
    means.sort_by(|a, b| a.partial_cmp(b).expect("block means are finite"));
    let mid = means.len() / 2;
    Ok(if means.len() % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    })
}

/// Monte Carlo estimate of the mini-batch deviation `E||g_B - grad f(x)||^2`
/// at batch size `b`, over `num_samples` independent batches.
pub fn minibatch_variance(
    obj: &ObjectiveSpec,
    x: &Point,
    b: usize,
    num_samples: usize,
    rng: &mut SeedStream,
) -> Result<f64> {
    if b == 0 {
        return Err(Error::contract("mini-batch size must be >= 1"));
    }
    if num_samples == 0 {
        return Err(Error::contract("need at least one sample"));
    }
    check_dim(obj, x)?;
    let g = obj.grad_full(x)?;
    let base = rng.block_base();
    let blocks = MOM_BLOCKS.min(num_samples);
    let per_block = num_samples / blocks;
    let remainder = num_samples % blocks;
    let block_sums: Vec<Result<f64>> = map_indexed(blocks, |i| {
        let mut block_rng = SeedStream::substream(base, i as u64);
        let count = per_block + usize::from(i < remainder);
        let mut sum = 0.0;
        for _ in 0..count {
            let (draw, _) = minibatch_impl(obj, x, b, &mut block_rng, false)?;
            sum += draw.sub(&g).norm_sq();
        }
        Ok(sum)
    });
    let total: f64 = block_sums
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total / num_samples as f64)
}

/// Exact mini-batch deviation for finite sums without injected noise,
/// enumerating all `n^b` equally likely batches. Practical only for tiny `b`;
/// guarded at 10^7 enumerated batches.
pub fn minibatch_variance_exact(obj: &ObjectiveSpec, x: &Point, b: usize) -> Result<f64> {
    if b == 0 {
        return Err(Error::contract("mini-batch size must be >= 1"));
    }
    if !obj.is_finite_sum() {
        return Err(Error::Unsupported {
            family: obj.family_name(),
            operation: "exhaustive mini-batch enumeration",
        });
    }
    if obj.oracle_noise_sigma > 0.0 {
        return Err(Error::contract(
            "exhaustive enumeration is exact only without injected noise",
        ));
    }
    check_dim(obj, x)?;
    let n = obj.n_components();
    let total = (n as f64).powi(b as i32);
    if total > 1e7 {
        return Err(Error::contract(format!(
            "refusing to enumerate {total:.3e} batches (n = {n}, b = {b})"
        )));
    }
    let g = obj.grad_full(x)?;
    // Component gradients are reused across tuples; precompute them.
    let comp_grads: Vec<Point> = (0..n)
        .map(|i| obj.grad_component(x, i))
        .collect::<Result<_>>()?;
    let inv_b = 1.0 / b as f64;
    let mut tuple = vec![0usize; b];
    let mut sum = 0.0;
    let count = total as u64;
    for _ in 0..count {
        let mut mean = Point::zeros(obj.dim());
        for &i in &tuple {
            mean.add_scaled(inv_b, &comp_grads[i]);
        }
        sum += mean.sub(&g).norm_sq();
        // Mixed-radix increment.
        for slot in tuple.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(sum / count as f64)
}

/// Least-squares fit of the single-draw deviation model
/// `Var(x) = (rho - 1) ||grad f(x)||^2 + sigma^2` over the given points,
/// estimating each deviation by Monte Carlo. Slope and intercept are clamped
/// to their physical ranges.
pub fn fit_rho_sigma(
    obj: &ObjectiveSpec,
    points: &[Point],
    samples_per_point: usize,
    rng: &mut SeedStream,
) -> Result<NoiseStats> {
    if points.len() < 2 {
        return Err(Error::contract("need at least two points to fit (rho, sigma)"));
    }
    let mut gs = Vec::with_capacity(points.len());
    let mut vs = Vec::with_capacity(points.len());
    for x in points {
        gs.push(obj.grad_full(x)?.norm_sq());
        vs.push(minibatch_variance(obj, x, 1, samples_per_point, rng)?);
    }
    let n = points.len() as f64;
    let mean_g = gs.iter().sum::<f64>() / n;
    let mean_v = vs.iter().sum::<f64>() / n;
    let sgg: f64 = gs.iter().map(|g| (g - mean_g) * (g - mean_g)).sum();
    let sgv: f64 = gs
        .iter()
        .zip(vs.iter())
        .map(|(g, v)| (g - mean_g) * (v - mean_v))
        .sum();
    if sgg <= 0.0 {
        return Err(Error::contract(
            "points do not separate gradient norms; slope is unidentifiable",
        ));
    }
    let mut slope = sgv / sgg;
    let mut intercept = mean_v - slope * mean_g;
    if slope < 0.0 {
        slope = 0.0;
        intercept = mean_v;
    }
    if intercept < 0.0 {
        intercept = 0.0;
        let sg2: f64 = gs.iter().map(|g| g * g).sum();
        let sv: f64 = gs.iter().zip(vs.iter()).map(|(g, v)| g * v).sum();
        slope = (sv / sg2).max(0.0);
    }
    Ok(NoiseStats {
        rho_hat: 1.0 + slope,
        sigma_hat: intercept.sqrt(),
        p: 2.0,
        rho_p_hat: 1.0 + slope,
        sample_count: (points.len() * samples_per_point) as u64,
        estimator_variant: EstimatorVariant::MonteCarlo,
    })
}

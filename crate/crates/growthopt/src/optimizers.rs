//! Update rules, admissible step-size/batch-size formulas, and the
//! instrumented run loop.
//!
//! Four methods share one loop:
//!
//! * `sgd` — `x <- x - eta g` with the raw mini-batch gradient `g`;
//! * `clip_sgd` — `x <- x - eta min{1, c/||g||} g` (step length capped at
//!   `eta c`);
//! * `nsgd` — `x <- x - eta g / (||g|| + lambda)` (step length capped at
//!   `eta`);
//! * `gd_warmup` — deterministic full-gradient descent with
//!   `eta_k = theta min{1/h0, 1/(3 h1 F_k)}` where `F_k = f(x^k) - f*`.
//!
//! The admissible-parameter helpers ([`theorem_stepsize`], [`batch_floor`],
//! [`target_lambda`]) encode the step-size rules, mini-batch floors and
//! normalization targets under which the convergence envelopes checked in
//! [`crate::verify`] are guaranteed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Point;
use crate::objectives::ObjectiveSpec;
use crate::oracles::minibatch_gradient;
use crate::rng::{streams, SeedStream};

/// Default warm-up aggressiveness `1 / (4 sqrt(2) + 4)`, the largest value
/// for which the warm-up analysis keeps its constants; callers may choose any
/// `theta` in `(0, 3/4]`.
pub fn default_warmup_theta() -> f64 {
    1.0 / (4.0 * std::f64::consts::SQRT_2 + 4.0)
}

/// Gap explosion factor: a run is declared divergent when the current gap
/// exceeds `1e8 * max(F_0, machine epsilon)`.
const DIVERGENCE_FACTOR: f64 = 1e8;

/// An update rule with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Sgd { eta: f64 },
    ClipSgd { eta: f64, clip_radius: f64 },
    Nsgd { eta: f64, lambda: f64 },
    GdWarmup { theta: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd { .. } => "sgd",
            Method::ClipSgd { .. } => "clip_sgd",
            Method::Nsgd { .. } => "nsgd",
            Method::GdWarmup { .. } => "gd_warmup",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::contract(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        match *self {
            Method::Sgd { eta } => positive("eta", eta),
            Method::ClipSgd { eta, clip_radius } => {
                positive("eta", eta)?;
                positive("clip_radius", clip_radius)
            }
            Method::Nsgd { eta, lambda } => {
                positive("eta", eta)?;
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::contract(format!(
                        "lambda must be finite and >= 0, got {lambda}"
                    )))
                }
            }
            Method::GdWarmup { theta } => {
                if theta.is_finite() && theta > 0.0 && theta <= 0.75 {
                    Ok(())
                } else {
                    Err(Error::contract(format!(
                        "theta must lie in (0, 3/4], got {theta}"
                    )))
                }
            }
        }
    }
}

/// A full run request: method, batch size, horizon, seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub method: Method,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.batch_size == 0 && !matches!(self.method, Method::GdWarmup { .. }) {
            return Err(Error::contract("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// `min{1, c/||g||} g`: identical direction, length capped at `c`.
pub fn clip_direction(g: &Point, c: f64) -> Point {
    debug_assert!(c > 0.0);
    let norm = g.norm();
    let alpha = (c / norm).min(1.0); // norm = 0 gives +inf, clamped to 1
    g.scaled(alpha)
}

/// `g / (||g|| + lambda)`; the zero gradient maps to the zero direction even
/// at `lambda = 0`.
pub fn nsgd_direction(g: &Point, lambda: f64) -> Point {
    debug_assert!(lambda >= 0.0);
    let denom = g.norm() + lambda;
    if denom == 0.0 {
        return Point::zeros(g.dim());
    }
    g.scaled(1.0 / denom)
}

/// Warm-up step size `theta * min{1/h0, 1/(3 h1 fk)}` with the conventions
/// `1/0 = +inf` in both operands; errors when both are infinite (no curvature
/// information at all) or when the inputs are out of range.
pub fn warmup_stepsize(theta: f64, h0: f64, h1: f64, fk: f64) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0 && theta <= 0.75) {
        return Err(Error::contract(format!(
            "theta must lie in (0, 3/4], got {theta}"
        )));
    }
    for (name, v) in [("h0", h0), ("h1", h1)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::contract(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    if !fk.is_finite() || fk < 0.0 {
        return Err(Error::contract(format!(
            "gap must be finite and >= 0, got {fk}"
        )));
    }
    let inv_flat = if h0 > 0.0 { 1.0 / h0 } else { f64::INFINITY };
    let denom = 3.0 * h1 * fk;
    let inv_curved = if denom > 0.0 {
        1.0 / denom
    } else {
        f64::INFINITY
    };
    let m = inv_flat.min(inv_curved);
    if m.is_infinite() {
        return Err(Error::contract(
            "warm-up step undefined: h0 = 0 and h1 * gap = 0",
        ));
    }
    Ok(theta * m)
}

/// Which theorem's admissible step-size rule to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Clipped SGD, non-convex `(l0, l1)` analysis.
    ClipNc,
    /// Normalized SGD, non-convex `(l0, l1)` analysis.
    NsgdNc,
    /// Clipped SGD, convex interpolation analysis (per-realization constants).
    ClipCvx,
    /// Normalized SGD, convex interpolation analysis.
    NsgdCvx,
    /// Clipped SGD under `(h0, h1)` function-value smoothness.
    ClipH,
    /// Normalized SGD under `(h0, h1)` function-value smoothness.
    NsgdH,
}

/// Constants consumed by [`theorem_stepsize`]; populate from
/// [`ObjectiveSpec::smoothness_constants`] and the run geometry.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleInputs {
    pub l0: f64,
    pub l1: f64,
    /// Per-realization constants; required by the convex rules.
    pub cl0: Option<f64>,
    pub cl1: Option<f64>,
    pub h0: f64,
    pub h1: f64,
    /// Growth ratio; required by the convex rules.
    pub rho: f64,
    /// Initial distance to the optimum; required by the `(h0, h1)` rules
    /// whenever `h1 > 0`.
    pub r0: Option<f64>,
}

fn finite_nonneg(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::contract(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

/// Largest step size admitted by the chosen analysis. `knob` is the clip
/// radius `c` for clip rules and the normalization constant `lambda` for
/// nsgd rules.
pub fn theorem_stepsize(rule: StepRule, inputs: &RuleInputs, knob: f64) -> Result<f64> {
    if !(knob.is_finite() && knob > 0.0) {
        return Err(Error::contract(format!(
            "step-rule knob (clip radius or lambda) must be > 0, got {knob}"
        )));
    }
    let require_rho = |rho: f64| -> Result<f64> {
        if rho.is_finite() && rho >= 1.0 {
            Ok(rho)
        } else {
            Err(Error::contract(format!(
                "growth ratio must be finite and >= 1, got {rho}"
            )))
        }
    };
    let require_cl = |c: Option<f64>, name: &str| -> Result<f64> {
        c.ok_or_else(|| {
            Error::contract(format!(
                "rule needs per-realization constant {name}, absent for this objective"
            ))
        })
        .and_then(|v| finite_nonneg(name, v))
    };
    let h_factor = |h1: f64, r0: Option<f64>| -> Result<f64> {
        if h1 == 0.0 {
            return Ok(0.0);
        }
        let r0 = r0.ok_or_else(|| {
            Error::contract("h-rule needs the initial distance r0 when h1 > 0")
        })?;
        let r0 = finite_nonneg("r0", r0)?;
        Ok(h1.sqrt().max(h1 * r0))
    };
    let denom = match rule {
        StepRule::ClipNc => {
            let l0 = finite_nonneg("l0", inputs.l0)?;
            let l1 = finite_nonneg("l1", inputs.l1)?;
            9.0 * (l0 + l1 * knob)
        }
        StepRule::NsgdNc => {
            let l0 = finite_nonneg("l0", inputs.l0)?;
            let l1 = finite_nonneg("l1", inputs.l1)?;
            l0 + l1 * knob
        }
        StepRule::ClipCvx => {
            let cl0 = require_cl(inputs.cl0, "cl0")?;
            let cl1 = require_cl(inputs.cl1, "cl1")?;
            let rho = require_rho(inputs.rho)?;
            9.0 * (cl0 + rho.sqrt() * cl1 * knob)
        }
        StepRule::NsgdCvx => {
            let cl0 = require_cl(inputs.cl0, "cl0")?;
            let cl1 = require_cl(inputs.cl1, "cl1")?;
            let rho = require_rho(inputs.rho)?;
            cl0 + rho.sqrt() * cl1 * knob
        }
        StepRule::ClipH => {
            let h0 = finite_nonneg("h0", inputs.h0)?;
            let h1 = finite_nonneg("h1", inputs.h1)?;
            9.0 * (h0 + h_factor(h1, inputs.r0)? * knob)
        }
        StepRule::NsgdH => {
            let h0 = finite_nonneg("h0", inputs.h0)?;
            let h1 = finite_nonneg("h1", inputs.h1)?;
            h0 + h_factor(h1, inputs.r0)? * knob
        }
    };
    if denom <= 0.0 {
        return Err(Error::contract(
            "admissible step size undefined: rule denominator is zero",
        ));
    }
    let numer = match rule {
        StepRule::ClipNc | StepRule::ClipCvx | StepRule::ClipH => 1.0,
        StepRule::NsgdNc | StepRule::NsgdCvx | StepRule::NsgdH => knob,
    };
    Ok(numer / denom)
}

/// Which analysis a mini-batch floor comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchRegime {
    ClipNc,
    NsgdNc,
    ClipCvx,
    NsgdCvx,
    ClipH,
    NsgdH,
    /// Heavy-tailed noise with only the `p`-th moment finite, `p` in (1, 2).
    Heavy { p: f64 },
}

/// Round up, but snap values within relative 1e-9 of an integer to that
/// integer first: the floors below are exact rationals (often exact powers),
/// and a one-ulp excursion above an integer must not inflate the requirement.
fn ceil_with_snap(v: f64) -> f64 {
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * v.abs().max(1.0) {
        nearest
    } else {
        v.ceil()
    }
}

/// Smallest admissible mini-batch size for the given analysis at growth
/// ratio `rho` (always at least 1).
pub fn batch_floor(regime: BatchRegime, rho: f64) -> Result<usize> {
    if !(rho.is_finite() && rho >= 1.0) {
        return Err(Error::contract(format!(
            "growth ratio must be finite and >= 1, got {rho}"
        )));
    }
    let excess = rho - 1.0;
    let raw = match regime {
        BatchRegime::ClipNc => 72.0 * excess,
        BatchRegime::NsgdNc | BatchRegime::NsgdCvx | BatchRegime::NsgdH => 64.0 * excess,
        BatchRegime::ClipCvx | BatchRegime::ClipH => 36.0 * excess,
        BatchRegime::Heavy { p } => {
            if !(p > 1.0 && p < 2.0) {
                return Err(Error::contract(format!(
                    "heavy-tail moment order must lie in (1, 2), got {p}"
                )));
            }
            let exponent = (3.0 * p + 1.0) / (p - 1.0);
            2f64.powf(exponent) * excess.powf(1.0 / (p - 1.0))
        }
    };
    if !raw.is_finite() {
        return Err(Error::contract(format!(
            "batch floor overflows for this regime (raw value {raw})"
        )));
    }
    Ok((ceil_with_snap(raw) as u64).max(1) as usize)
}

/// Accuracy regime for choosing the nsgd normalization constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRegime {
    /// Gradient-norm target: the floor term is `6 lambda`, so
    /// `lambda = epsilon / 12` leaves half the budget to the decaying term.
    NonConvex,
    /// Gap target: the floor term is `6 lambda r0`, so
    /// `lambda = epsilon / (12 r0)`.
    Convex,
}

/// Normalization constant that drives the nsgd error floor to `epsilon / 2`.
pub fn target_lambda(regime: LambdaRegime, epsilon: f64, r0: Option<f64>) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::contract(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )));
    }
    match regime {
        LambdaRegime::NonConvex => Ok(epsilon / 12.0),
        LambdaRegime::Convex => {
            let r0 = r0.ok_or_else(|| {
                Error::contract("convex lambda target needs the initial distance r0")
            })?;
            if !(r0.is_finite() && r0 > 0.0) {
                return Err(Error::contract(format!(
                    "r0 must be finite and > 0, got {r0}"
                )));
            }
            Ok(epsilon / (12.0 * r0))
        }
    }
}

/// Scalar trace row at iteration `k` (state *before* the step at `k`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRow {
    pub k: usize,
    /// Norm of the true (full) gradient at `x^k`.
    pub grad_norm: f64,
    /// `f(x^k) - f*`.
    pub gap: f64,
    /// Learning rate used at this iteration (0 on the terminal row).
    pub step_size: f64,
    /// `||x^k - x*||` when the optimum is known.
    pub dist_to_opt: Option<f64>,
    /// `||x^{k+1} - x^k||` (0 on the terminal row).
    pub step_len: f64,
}

/// Why a run stopped early.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    /// Iterate, value or gradient stopped being finite.
    NonFinite,
    /// Gap exceeded `1e8 * max(F_0, eps)`.
    GapExplosion,
}

/// Divergence marker: the offending iterate is *not* logged as a row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    /// Iteration index at which the guard tripped.
    pub iteration: usize,
    pub reason: DivergenceReason,
    /// Gap at the offending iterate, when finite.
    pub gap: Option<f64>,
}

/// Per-iteration extras needed by the verification checks but not part of
/// the CSV trace: all vectors have one entry per completed step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtTrace {
    /// `<grad f(x^k), x^{k+1} - x^k>`.
    pub step_dot_grad: Vec<f64>,
    /// `||g_batch - grad f(x^k)||`.
    pub batch_err: Vec<f64>,
    /// `||g_batch||`.
    pub batch_grad_norm: Vec<f64>,
}

/// Complete instrumented run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: OptimizerConfig,
    /// One row per visited iterate, including a terminal row with zero step
    /// fields; truncated before the offending iterate on divergence.
    pub rows: Vec<IterRow>,
    /// Sparse iterate snapshots: every `ceil(max_iters / 1000)` iterations
    /// plus the final (last finite) iterate.
    pub snapshots: Vec<(usize, Point)>,
    pub divergence: Option<DivergenceEvent>,
    pub ext: ExtTrace,
    /// Last finite iterate visited.
    pub final_x: Point,
}

impl RunTrace {
    /// Gap at the first row (the starting point).
    pub fn initial_gap(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.gap)
    }

    /// Smallest true gradient norm over visited iterates.
    pub fn min_grad_norm(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.grad_norm)
            .fold(f64::INFINITY, f64::min)
    }

    /// Gap at the last visited iterate.
    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.gap)
    }
}

/// Run the configured method from `x0`, logging every iteration.
///
/// Oracle draws come from the `(seed, ORACLE)` stream, so a rerun of the same
/// `(objective, x0, config)` triple is bit-identical. Divergence stops the
/// run and is recorded on the trace rather than raised as an error.
pub fn run(obj: &ObjectiveSpec, x0: &Point, cfg: &OptimizerConfig) -> Result<RunTrace> {
    cfg.validate()?;
    if x0.dim() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.dim(),
        });
    }
    let fstar = obj.known_fstar.ok_or_else(|| {
        Error::contract("run loop needs a known optimal value to log gaps")
    })?;
    let profile = obj.smoothness_constants();
    let mut rng = SeedStream::substream(cfg.seed, streams::ORACLE);
    let n = cfg.max_iters;
    let stride = (n / 1000).max(1);

    let mut x = x0.clone();
    let mut rows = Vec::with_capacity(n + 1);
    let mut ext = ExtTrace::default();
    let mut snapshots: Vec<(usize, Point)> = Vec::new();
    let mut divergence = None;
    let mut final_x = x.clone();
    let mut threshold = f64::INFINITY;

    for k in 0..=n {
        let f = obj.eval_full(&x)?;
        let gap = f - fstar;
        if k == 0 {
            threshold = DIVERGENCE_FACTOR * gap.max(f64::EPSILON);
        } else if !f.is_finite() || gap > threshold {
            divergence = Some(DivergenceEvent {
                iteration: k,
                reason: if f.is_finite() {
                    DivergenceReason::GapExplosion
                } else {
                    DivergenceReason::NonFinite
                },
                gap: f.is_finite().then_some(gap),
            });
            break;
        }
        let g_full = obj.grad_full(&x)?;
        if !g_full.is_finite() {
            divergence = Some(DivergenceEvent {
                iteration: k,
                reason: DivergenceReason::NonFinite,
                gap: f.is_finite().then_some(gap),
            });
            break;
        }
        final_x = x.clone();
        let dist_to_opt = obj.optimum().map(|opt| x.dist(opt));

        if k == n {
            rows.push(IterRow {
                k,
                grad_norm: g_full.norm(),
                gap,
                step_size: 0.0,
                dist_to_opt,
                step_len: 0.0,
            });
            break;
        }

        let (step_size, delta, batch) = match cfg.method {
            Method::Sgd { eta } => {
                let g = minibatch_gradient(obj, &x, cfg.batch_size, &mut rng)?;
                (eta, g.scaled(-eta), Some(g))
            }
            Method::ClipSgd { eta, clip_radius } => {
                let g = minibatch_gradient(obj, &x, cfg.batch_size, &mut rng)?;
                let d = clip_direction(&g, clip_radius);
                (eta, d.scaled(-eta), Some(g))
            }
            Method::Nsgd { eta, lambda } => {
                let g = minibatch_gradient(obj, &x, cfg.batch_size, &mut rng)?;
                let d = nsgd_direction(&g, lambda);
                (eta, d.scaled(-eta), Some(g))
            }
            Method::GdWarmup { theta } => {
                let eta_k =
                    warmup_stepsize(theta, profile.h0.value, profile.h1.value, gap.max(0.0))?;
                (eta_k, g_full.scaled(-eta_k), None)
            }
        };

        rows.push(IterRow {
            k,
            grad_norm: g_full.norm(),
            gap,
            step_size,
            dist_to_opt,
            step_len: delta.norm(),
        });
        ext.step_dot_grad.push(g_full.dot(&delta));
        match &batch {
            Some(g) => {
                ext.batch_err.push(g.sub(&g_full).norm());
                ext.batch_grad_norm.push(g.norm());
            }
            None => {
                ext.batch_err.push(0.0);
                ext.batch_grad_norm.push(g_full.norm());
            }
        }
        if k % stride == 0 {
            snapshots.push((k, x.clone()));
        }
        x.add_scaled(1.0, &delta);
    }

    let last_k = divergence.map_or(rows.last().map_or(0, |r| r.k), |d| {
        d.iteration.saturating_sub(1)
    });
    if snapshots.last().map(|(k, _)| *k) != Some(last_k) {
        snapshots.push((last_k, final_x.clone()));
    }
    Ok(RunTrace {
        config: *cfg,
        rows,
        snapshots,
        divergence,
        ext,
        final_x,
    })
}

//! Convergence-envelope checks: compare per-run statistics against the
//! closed-form guarantees of the supported analyses.
//!
//! Stochastic envelopes hold in expectation, so they are checked against
//! means (or medians, for the heavy-tailed statement) over independent
//! seeds, with a multiplicative slack plus a Monte Carlo standard-error
//! term. The gradient-descent envelopes are deterministic and checked on a
//! single trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Method, RunTrace};

use super::{LemmaId, LemmaReport, Witness};

/// Which convergence statement an envelope check targets.
///
/// The `(h0, h1)` stochastic analyses reuse the same bound shapes with their
/// own admissible step sizes, so they map onto the same identifiers; only
/// the step rule fed to the run differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// Clipped SGD, non-convex: `min_k E|g_k| <= sqrt(18 F0 / (eta N)) +
    /// 18 F0 / (eta c N)`.
    ClipNonconvex,
    /// Normalized SGD, non-convex: `min_k E|g_k| <= 4 F0 / (eta N) +
    /// 6 lambda`.
    NsgdNonconvex,
    /// Clipped SGD, convex: `E F_N <= max{(1 - eta c / (36 R0))^(N/2) F0,
    /// 18 R0^2 / (N eta)}`.
    ClipConvex,
    /// Normalized SGD, convex: `E F_N <= (1 - eta / (4 R0))^N F0 +
    /// 6 lambda R0`.
    NsgdConvex,
    /// Normalized SGD under heavy-tailed noise: same bound as the
    /// non-convex statement, checked against the median over seeds.
    NsgdHeavy,
    /// Warm-up GD, non-convex `(h0, h1)`: three-case bound built from the
    /// logged gap series.
    GdNonconvex,
    /// Warm-up GD, convex: linear phase above the gap threshold, sublinear
    /// below.
    GdConvex,
    /// Warm-up GD, strongly convex: the gap halves within a fixed budget of
    /// iterations, round after round.
    GdStronglyConvex,
}

impl TheoremId {
    pub fn name(&self) -> &'static str {
        match self {
            TheoremId::ClipNonconvex => "clip_nonconvex",
            TheoremId::NsgdNonconvex => "nsgd_nonconvex",
            TheoremId::ClipConvex => "clip_convex",
            TheoremId::NsgdConvex => "nsgd_convex",
            TheoremId::NsgdHeavy => "nsgd_heavy",
            TheoremId::GdNonconvex => "gd_nonconvex",
            TheoremId::GdConvex => "gd_convex",
            TheoremId::GdStronglyConvex => "gd_strongly_convex",
        }
    }
}

/// Closed-form envelope value for the scalar-statistic analyses. `knob` is
/// the clip radius for clip statements and lambda for nsgd statements; `r0`
/// is required by the convex ones. The GD identifiers need the logged gap
/// series instead and are rejected here.
pub fn envelope_bound(
    theorem: TheoremId,
    f0: f64,
    eta: f64,
    knob: f64,
    r0: Option<f64>,
    n: usize,
) -> Result<f64> {
    if !(f0.is_finite() && f0 >= 0.0) {
        return Err(Error::contract(format!("F0 must be finite and >= 0, got {f0}")));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::contract(format!("eta must be finite and > 0, got {eta}")));
    }
    if n == 0 {
        return Err(Error::contract("envelope needs at least one iteration"));
    }
    let nf = n as f64;
    let need_r0 = || {
        r0.ok_or_else(|| Error::contract("convex envelope needs the initial distance r0"))
    };
    Ok(match theorem {
        TheoremId::ClipNonconvex => {
            (18.0 * f0 / (eta * nf)).sqrt() + 18.0 * f0 / (eta * knob * nf)
        }
        TheoremId::NsgdNonconvex | TheoremId::NsgdHeavy => 4.0 * f0 / (eta * nf) + 6.0 * knob,
        TheoremId::ClipConvex => {
            let r0 = need_r0()?;
            let base = (1.0 - eta * knob / (36.0 * r0)).max(0.0);
            (base.powf(nf / 2.0) * f0).max(18.0 * r0 * r0 / (nf * eta))
        }
        TheoremId::NsgdConvex => {
            let r0 = need_r0()?;
            let base = (1.0 - eta / (4.0 * r0)).max(0.0);
            base.powf(nf) * f0 + 6.0 * knob * r0
        }
        TheoremId::GdNonconvex | TheoremId::GdConvex | TheoremId::GdStronglyConvex => {
            return Err(Error::contract(
                "gd envelopes are built from the gap series, not closed form",
            ))
        }
    })
}

/// First index `k` (over the stepped iterates, excluding the terminal one)
/// whose gap drops below `h0 / (3 h1)`; the step count `n` if none does.
/// With `h1 = 0` the threshold is infinite and the boundary is 0.
pub(super) fn gap_threshold_boundary(gaps: &[f64], h0: f64, h1: f64) -> usize {
    let n = gaps.len() - 1;
    let threshold = if h1 > 0.0 { h0 / (3.0 * h1) } else { f64::INFINITY };
    gaps[..n].iter().position(|&g| g < threshold).unwrap_or(n)
}

/// Warm-up GD non-convex envelope over the logged gaps (length N + 1).
fn gd_nonconvex_bound(gaps: &[f64], theta: f64, h0: f64, h1: f64) -> f64 {
    let n = gaps.len() - 1;
    let f0 = gaps[0];
    let m = gap_threshold_boundary(gaps, h0, h1);
    let slow =
        |count: usize, sum: f64| (6.0 * h1 * f0 * sum / (theta * (count * count) as f64)).sqrt();
    let fast = |count: usize| (2.0 * h0 * f0 / (theta * count as f64)).sqrt();
    if m == 0 {
        fast(n)
    } else if m == n {
        slow(n, gaps[..n].iter().sum())
    } else {
        slow(m, gaps[..m].iter().sum()).min(fast(n - m))
    }
}

/// Warm-up GD convex envelope over the logged gaps (length N + 1).
fn gd_convex_bound(gaps: &[f64], theta: f64, h0: f64, h1: f64, r: f64) -> f64 {
    let n = gaps.len() - 1;
    let f0 = gaps[0];
    let t = gap_threshold_boundary(gaps, h0, h1);
    let base = (1.0 - theta / (6.0 * h1 * r * r)).max(0.0);
    let linear = base.powi(t as i32) * f0;
    if t < n {
        linear.min(2.0 * h0 * r * r / (theta * (n - t) as f64))
    } else {
        linear
    }
}

/// Iterations sufficient for warm-up GD to halve the gap once on a
/// `mu`-strongly-convex `(h0, h1)`-smooth problem:
/// `ceil(8 h0 / (theta mu) + 12 h1 F log 2 / (theta mu))`.
pub fn gd_halving_budget(theta: f64, h0: f64, h1: f64, gap: f64, mu: f64) -> Result<usize> {
    if !(theta > 0.0 && mu > 0.0 && h0 >= 0.0 && h1 >= 0.0 && gap >= 0.0) {
        return Err(Error::contract(
            "halving budget needs theta, mu > 0 and nonnegative h0, h1, gap",
        ));
    }
    let raw = 8.0 * h0 / (theta * mu) + 12.0 * h1 * gap * std::f64::consts::LN_2 / (theta * mu);
    Ok(raw.ceil() as usize)
}

/// Iterations sufficient for normalized SGD with `lambda = eps / (12 r0)`
/// and the matching maximal step size to reach an expected gap of `eps`:
/// `ceil((48 cl0 r0^2 / eps + 4 sqrt(rho) cl1 r0) ln(2 F0 / eps))`.
pub fn nsgd_convex_complexity(
    cl0: f64,
    cl1: f64,
    rho: f64,
    r0: f64,
    f0: f64,
    eps: f64,
) -> Result<usize> {
    if !(eps > 0.0 && r0 > 0.0 && rho >= 1.0 && cl0 >= 0.0 && cl1 >= 0.0 && f0 >= 0.0) {
        return Err(Error::contract(
            "complexity needs eps, r0 > 0, rho >= 1 and nonnegative constants",
        ));
    }
    let log_term = (2.0 * f0 / eps).ln();
    if log_term <= 0.0 {
        return Ok(0);
    }
    let raw = (48.0 * cl0 * r0 * r0 / eps + 4.0 * rho.sqrt() * cl1 * r0) * log_term;
    Ok(raw.ceil() as usize)
}

/// Everything an envelope check needs beyond the traces themselves.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeSetup {
    pub theorem: TheoremId,
    /// Initial distance to the optimum; defaults to the traces' recorded
    /// distance when available.
    pub r0: Option<f64>,
    /// Function-value smoothness constants (GD statements only).
    pub h0: Option<f64>,
    pub h1: Option<f64>,
    /// Strong-convexity constant (halving statement only).
    pub mu: Option<f64>,
    /// Consecutive halvings demanded of one trace (halving statement only).
    pub halving_rounds: usize,
    /// Largest admissible step size; traces stepping faster are skipped.
    pub step_cap: Option<f64>,
    /// Smallest admissible batch; smaller-batch traces are skipped.
    pub batch_floor: Option<usize>,
    /// Multiplicative slack on the bound (default 0.05).
    pub slack_frac: f64,
    /// Standard-error multiplier for mean statistics (default 3.0).
    pub se_multiplier: f64,
}

impl EnvelopeSetup {
    pub fn new(theorem: TheoremId) -> Self {
        EnvelopeSetup {
            theorem,
            r0: None,
            h0: None,
            h1: None,
            mu: None,
            halving_rounds: 10,
            step_cap: None,
            batch_floor: None,
            slack_frac: 0.05,
            se_multiplier: 3.0,
        }
    }
}

/// Smallest full-gradient norm over the stepped iterates (the terminal row
/// is the returned point, not a stepped one, and the guarantees quantify
/// over the stepped ones only).
fn min_grad_over_steps(trace: &RunTrace) -> f64 {
    let rows = &trace.rows;
    let upto = if rows.len() > 1 { rows.len() - 1 } else { rows.len() };
    rows[..upto]
        .iter()
        .map(|r| r.grad_norm)
        .fold(f64::INFINITY, f64::min)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Check one envelope against a family of traces that differ only in seed.
///
/// Skips (never fails) when the traces do not match the statement: wrong
/// method, step size above `step_cap`, batch below `batch_floor`, or
/// differing starting gaps. A diverged trace fails the check outright.
pub fn check_theorem_envelope(traces: &[RunTrace], setup: &EnvelopeSetup) -> Result<LemmaReport> {
    let lemma = LemmaId::TheoremEnvelope {
        theorem: setup.theorem,
    };
    if traces.is_empty() {
        return Err(Error::contract("envelope check needs at least one trace"));
    }
    let skip = |reason: String| Ok(LemmaReport::skipped(lemma, reason));

    // All traces must share the configuration up to the seed.
    let head = &traces[0].config;
    if traces.iter().any(|t| {
        t.config.method != head.method
            || t.config.batch_size != head.batch_size
            || t.config.max_iters != head.max_iters
    }) {
        return skip("traces mix configurations".into());
    }

    // Method/statement compatibility, and the statement's own knob.
    let (eta, knob) = match (setup.theorem, head.method) {
        (
            TheoremId::ClipNonconvex | TheoremId::ClipConvex,
            Method::ClipSgd { eta, clip_radius },
        ) => (eta, clip_radius),
        (
            TheoremId::NsgdNonconvex | TheoremId::NsgdConvex | TheoremId::NsgdHeavy,
            Method::Nsgd { eta, lambda },
        ) => (eta, lambda),
        (
            TheoremId::GdNonconvex | TheoremId::GdConvex | TheoremId::GdStronglyConvex,
            Method::GdWarmup { theta },
        ) => (theta, 0.0),
        (theorem, method) => {
            return skip(format!(
                "statement {} does not cover method {}",
                theorem.name(),
                method.name()
            ))
        }
    };

    if let Some(cap) = setup.step_cap {
        if eta > cap * (1.0 + 1e-9) {
            return skip(format!("inadmissible step size {eta:.3e} > cap {cap:.3e}"));
        }
    }
    if let Some(floor) = setup.batch_floor {
        if head.batch_size < floor && !matches!(head.method, Method::GdWarmup { .. }) {
            return skip(format!(
                "inadmissible batch size {} < floor {floor}",
                head.batch_size
            ));
        }
    }

    let f0 = traces[0].initial_gap();
    if traces
        .iter()
        .any(|t| (t.initial_gap() - f0).abs() > 1e-9 * f0.max(1.0))
    {
        return skip("traces start from different gaps; no common F0".into());
    }

    if let Some((i, t)) = traces
        .iter()
        .enumerate()
        .find(|(_, t)| t.divergence.is_some())
    {
        let event = t.divergence.as_ref().expect("found a divergent trace");
        return Ok(LemmaReport::fail(
            lemma,
            Witness::Case {
                label: format!("trace {i} (seed {}) diverged", t.config.seed),
            },
            f64::NEG_INFINITY,
            0.0,
            format!(
                "divergence at iteration {} under a supposedly admissible configuration",
                event.iteration
            ),
        ));
    }

    let r0 = setup
        .r0
        .or_else(|| traces[0].rows.first().and_then(|r| r.dist_to_opt));

    match setup.theorem {
        TheoremId::ClipNonconvex | TheoremId::NsgdNonconvex => {
            let stats: Vec<f64> = traces.iter().map(min_grad_over_steps).collect();
            let (mean, se) = mean_and_se(&stats);
            let bound = envelope_bound(setup.theorem, f0, eta, knob, r0, head.max_iters)?;
            scalar_report(
                lemma,
                mean,
                bound,
                bound * (1.0 + setup.slack_frac) + setup.se_multiplier * se,
                format!("mean over {} seeds of min_k |g_k|", traces.len()),
            )
        }
        TheoremId::NsgdHeavy => {
            let stats: Vec<f64> = traces.iter().map(min_grad_over_steps).collect();
            let stat = median(&stats);
            let bound = envelope_bound(setup.theorem, f0, eta, knob, r0, head.max_iters)?;
            scalar_report(
                lemma,
                stat,
                bound,
                bound * (1.0 + setup.slack_frac),
                format!("median over {} seeds of min_k |g_k|", traces.len()),
            )
        }
        TheoremId::ClipConvex | TheoremId::NsgdConvex => {
            let stats: Vec<f64> = traces.iter().map(RunTrace::final_gap).collect();
            let (mean, se) = mean_and_se(&stats);
            let bound = envelope_bound(setup.theorem, f0, eta, knob, r0, head.max_iters)?;
            scalar_report(
                lemma,
                mean,
                bound,
                bound * (1.0 + setup.slack_frac) + setup.se_multiplier * se,
                format!("mean over {} seeds of the final gap", traces.len()),
            )
        }
        TheoremId::GdNonconvex | TheoremId::GdConvex => {
            let (h0, h1) = require_h(setup)?;
            let trace = &traces[0];
            let gaps: Vec<f64> = trace.rows.iter().map(|r| r.gap).collect();
            if gaps.len() < 2 {
                return skip("trace has no completed steps".into());
            }
            let (stat, bound, label) = if setup.theorem == TheoremId::GdNonconvex {
                (
                    min_grad_over_steps(trace),
                    gd_nonconvex_bound(&gaps, eta, h0, h1),
                    "min_k |g_k| (single deterministic trace)",
                )
            } else {
                let r = r0.ok_or_else(|| {
                    Error::contract("gd convex envelope needs the initial distance r0")
                })?;
                (
                    trace.final_gap(),
                    gd_convex_bound(&gaps, eta, h0, h1, r),
                    "final gap (single deterministic trace)",
                )
            };
            scalar_report(
                lemma,
                stat,
                bound,
                bound * (1.0 + setup.slack_frac),
                label.to_string(),
            )
        }
        TheoremId::GdStronglyConvex => {
            let (h0, h1) = require_h(setup)?;
            let mu = setup
                .mu
                .ok_or_else(|| Error::contract("halving envelope needs mu"))?;
            check_halving(lemma, &traces[0], eta, h0, h1, mu, setup.halving_rounds)
        }
    }
}

fn require_h(setup: &EnvelopeSetup) -> Result<(f64, f64)> {
    match (setup.h0, setup.h1) {
        (Some(h0), Some(h1)) => Ok((h0, h1)),
        _ => Err(Error::contract("gd envelope needs the (h0, h1) constants")),
    }
}

fn scalar_report(
    lemma: LemmaId,
    stat: f64,
    bound: f64,
    allowance: f64,
    label: String,
) -> Result<LemmaReport> {
    let margin = allowance - stat;
    let detail = format!("{label}: {stat:.6e} vs bound {bound:.6e} (allowance {allowance:.6e})");
    Ok(if margin >= 0.0 {
        LemmaReport::pass(lemma, margin, 0.0, detail)
    } else {
        LemmaReport::fail(
            lemma,
            Witness::Case {
                label: format!("statistic {stat:.6e} above allowance {allowance:.6e}"),
            },
            margin,
            0.0,
            detail,
        )
    })
}

/// Walk `rounds` consecutive halvings along one trace, each of which must
/// complete within its own budget; the margin is the worst leftover budget
/// in iterations.
fn check_halving(
    lemma: LemmaId,
    trace: &RunTrace,
    theta: f64,
    h0: f64,
    h1: f64,
    mu: f64,
    rounds: usize,
) -> Result<LemmaReport> {
    let gaps: Vec<f64> = trace.rows.iter().map(|r| r.gap).collect();
    let mut start = 0usize;
    let mut margin = f64::MAX;
    for round in 0..rounds {
        let here = gaps[start];
        let budget = gd_halving_budget(theta, h0, h1, here, mu)?;
        let target = 0.5 * here;
        let hit = gaps[start + 1..].iter().position(|&g| g <= target);
        match hit {
            Some(offset) if offset + 1 <= budget => {
                margin = margin.min((budget - (offset + 1)) as f64);
                start += offset + 1;
            }
            Some(offset) => {
                return Ok(LemmaReport::fail(
                    lemma,
                    Witness::Iteration {
                        k: trace.rows[start].k,
                    },
                    (budget as f64) - (offset + 1) as f64,
                    0.0,
                    format!(
                        "round {round} took {} iterations against a budget of {budget}",
                        offset + 1
                    ),
                ));
            }
            None => {
                return Ok(LemmaReport::fail(
                    lemma,
                    Witness::Iteration {
                        k: trace.rows[start].k,
                    },
                    f64::NEG_INFINITY,
                    0.0,
                    format!("round {round} never halved within the trace"),
                ));
            }
        }
    }
    Ok(LemmaReport::pass(
        lemma,
        if margin == f64::MAX { 0.0 } else { margin },
        0.0,
        format!("{rounds} halvings completed; margin = leftover budget in iterations"),
    ))
}

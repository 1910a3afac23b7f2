//! Two-phase rate fitting on logged gap series.
//!
//! The warm-up analysis predicts a slow phase while the gap sits above
//! `h0 / (3 h1)` and a fast phase below it; stochastic runs show the same
//! texture without a closed-form boundary. This module fits a log-linear
//! model to the early phase and a reciprocal model to the late phase,
//! locating the boundary either from the known threshold or by
//! least-squares changepoint search. The changepoint is a descriptive
//! surrogate, not a certified quantity: it reports where the two-piece fit
//! is best, nothing more.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{IterRow, RunTrace};

use super::envelope::gap_threshold_boundary;

/// How the phase boundary is located.
#[derive(Clone, Copy, Debug)]
pub enum PhaseMode {
    /// Deterministic warm-up traces: boundary at the first gap below
    /// `h0 / (3 h1)` (never, with `h1 = 0` meaning an infinite threshold
    /// and a boundary of zero).
    GdThreshold { h0: f64, h1: f64 },
    /// Stochastic traces: grid search over at most 128 candidate
    /// boundaries, minimizing the total log-space residual.
    Changepoint,
}

/// A fitted two-phase description of a gap series.
///
/// Phase one covers iterations `k < phase_boundary` with
/// `gap ~ linear_scale * linear_ratio^k`; phase two covers the rest with
/// `gap ~ 1 / (sublinear_c0 + sublinear_c1 k)`. A phase shorter than three
/// points is not fitted and leaves its fields `None`. A boundary equal to
/// the last stepped index means no second phase was identified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub phase_boundary: usize,
    pub linear_ratio: Option<f64>,
    pub linear_scale: Option<f64>,
    pub sublinear_c0: Option<f64>,
    pub sublinear_c1: Option<f64>,
    /// Sum of squared log-space residuals over both fitted phases.
    pub residual: f64,
}

/// Fit the two-phase model to a trace's gap series.
///
/// Gaps are used up to (excluding) the first nonpositive one; fewer than
/// ten usable samples is an error, since no rate can be read off.
pub fn fit_phases(trace: &RunTrace, mode: PhaseMode) -> Result<RateFit> {
    fit_phase_rows(&trace.rows, mode)
}

/// Same fit, straight from trace rows — the form file readers have.
pub fn fit_phase_rows(rows: &[IterRow], mode: PhaseMode) -> Result<RateFit> {
    let gaps: Vec<f64> = rows
        .iter()
        .map(|r| r.gap)
        .take_while(|&g| g > 0.0 && g.is_finite())
        .collect();
    fit_gap_series(&gaps, mode)
}

pub(crate) fn fit_gap_series(gaps: &[f64], mode: PhaseMode) -> Result<RateFit> {
    if gaps.len() < 10 {
        return Err(Error::contract(format!(
            "rate fit needs at least 10 positive gap samples, got {}",
            gaps.len()
        )));
    }
    let m = gaps.len() - 1;
    match mode {
        PhaseMode::GdThreshold { h0, h1 } => {
            if !(h0 >= 0.0 && h1 >= 0.0 && h0.is_finite() && h1.is_finite()) {
                return Err(Error::contract(format!(
                    "threshold fit needs finite nonnegative constants, got h0={h0}, h1={h1}"
                )));
            }
            Ok(fit_at(gaps, gap_threshold_boundary(gaps, h0, h1)))
        }
        PhaseMode::Changepoint => {
            // Candidate boundaries: no first phase, no second phase, or both
            // phases at least three points long; the interior grid is thinned
            // to keep the total candidate count at 128 or below.
            let mut candidates = vec![0usize, m + 1];
            if m >= 5 {
                let lo = 3usize;
                let hi = m - 2;
                let count = hi - lo + 1;
                let stride = count.div_ceil(126);
                candidates.extend((lo..=hi).step_by(stride));
            }
            let best = candidates
                .into_iter()
                .map(|tau| fit_at(gaps, tau))
                .min_by(|a, b| {
                    a.residual
                        .partial_cmp(&b.residual)
                        .expect("residuals are never NaN")
                })
                .expect("candidate list is never empty");
            Ok(best)
        }
    }
}

/// Fit both phases for a fixed boundary `tau` (phase one is `[0, tau)`,
/// phase two `[tau, m]`) and total the log-space residual.
fn fit_at(gaps: &[f64], tau: usize) -> RateFit {
    let m = gaps.len() - 1;
    let boundary = tau.min(m);
    let mut fit = RateFit {
        phase_boundary: boundary,
        linear_ratio: None,
        linear_scale: None,
        sublinear_c0: None,
        sublinear_c1: None,
        residual: 0.0,
    };
    let head = &gaps[..tau.min(gaps.len())];
    if head.len() >= 3 {
        let pts: Vec<(f64, f64)> = head
            .iter()
            .enumerate()
            .map(|(k, &g)| (k as f64, g.ln()))
            .collect();
        let (a, b) = linfit(&pts);
        fit.linear_scale = Some(a.exp());
        fit.linear_ratio = Some(b.exp());
        fit.residual += pts
            .iter()
            .map(|&(k, y)| {
                let e = y - (a + b * k);
                e * e
            })
            .sum::<f64>();
    }
    if tau <= m {
        let tail = &gaps[tau..];
        if tail.len() >= 3 {
            let pts: Vec<(f64, f64)> = tail
                .iter()
                .enumerate()
                .map(|(i, &g)| ((tau + i) as f64, 1.0 / g))
                .collect();
            let (c0, c1) = linfit(&pts);
            fit.sublinear_c0 = Some(c0);
            fit.sublinear_c1 = Some(c1);
            // Residual in log space; a nonpositive predicted reciprocal
            // cannot be logged and disqualifies the candidate outright.
            for (i, &g) in tail.iter().enumerate() {
                let pred = c0 + c1 * (tau + i) as f64;
                if pred <= 0.0 {
                    fit.residual = f64::INFINITY;
                    return fit;
                }
                let e = g.ln() + pred.ln();
                fit.residual += e * e;
            }
        }
    }
    fit
}

/// Ordinary least squares `y = a + b x`; callers guarantee at least two
/// points with distinct abscissae.
fn linfit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

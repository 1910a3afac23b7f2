//! Mechanical checks for the identities, lemmas, and convergence envelopes
//! the optimizers are supposed to satisfy.
//!
//! Every check is pure: the same trace and constants always produce the same
//! [`LemmaReport`]. Checks that sample do so from an explicit seed. A report
//! never panics on bad data — impossible preconditions surface as
//! `Status::Skipped` with a reason, hard contract violations as errors.

mod checks;
mod envelope;
mod ratefit;

pub use checks::{
    check_descent_gd, check_mds_bound, check_monotone_distance, check_rho_floor,
    check_self_bounding, check_variance_batch, IncrementModel,
};
pub use envelope::{
    check_theorem_envelope, envelope_bound, gd_halving_budget, nsgd_convex_complexity,
    EnvelopeSetup, TheoremId,
};
pub use ratefit::{fit_phase_rows, fit_phases, PhaseMode, RateFit};

use serde::{Deserialize, Serialize};

/// Which lemma or identity a report is about.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum LemmaId {
    SelfBounding,
    MonotoneDistance,
    DescentGd,
    TheoremEnvelope { theorem: TheoremId },
    MdsBound,
    VarianceBatch,
    RhoFloor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// Where a violation was observed; present exactly when the status is
/// `Fail`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Trace iteration index.
    Iteration { k: usize },
    /// Index into a list of probe points or estimates.
    Sample { index: usize },
    /// Offending batch size.
    Batch { b: usize },
    /// Offending probe point.
    Point { coords: Vec<f64> },
    /// Anything without a natural index.
    Case { label: String },
}

/// Outcome of one check.
///
/// `margin` is the worst (smallest) slack observed across everything the
/// check inspected, in the units stated by `detail`; the check passes iff
/// `margin >= -tolerance`. Skipped reports carry a zero margin and the
/// reason in `detail`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    #[serde(flatten)]
    pub lemma: LemmaId,
    pub status: Status,
    pub witness: Option<Witness>,
    pub margin: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl LemmaReport {
    pub fn pass(lemma: LemmaId, margin: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        LemmaReport {
            lemma,
            status: Status::Pass,
            witness: None,
            margin,
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn fail(
        lemma: LemmaId,
        witness: Witness,
        margin: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        LemmaReport {
            lemma,
            status: Status::Fail,
            witness: Some(witness),
            margin,
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn skipped(lemma: LemmaId, reason: impl Into<String>) -> Self {
        LemmaReport {
            lemma,
            status: Status::Skipped,
            witness: None,
            margin: 0.0,
            tolerance: 0.0,
            detail: reason.into(),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }

    /// One human-readable line: `id  status  margin  detail`.
    pub fn summary_line(&self) -> String {
        let id = match self.lemma {
            LemmaId::SelfBounding => "self_bounding".to_string(),
            LemmaId::MonotoneDistance => "monotone_distance".to_string(),
            LemmaId::DescentGd => "descent_gd".to_string(),
            LemmaId::TheoremEnvelope { theorem } => format!("envelope[{}]", theorem.name()),
            LemmaId::MdsBound => "mds_bound".to_string(),
            LemmaId::VarianceBatch => "variance_batch".to_string(),
            LemmaId::RhoFloor => "rho_floor".to_string(),
        };
        let status = match self.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skipped",
        };
        let witness = match &self.witness {
            Some(Witness::Iteration { k }) => format!(" at k={k}"),
            Some(Witness::Sample { index }) => format!(" at sample {index}"),
            Some(Witness::Batch { b }) => format!(" at B={b}"),
            Some(Witness::Point { coords }) => format!(" at point {coords:?}"),
            Some(Witness::Case { label }) => format!(" [{label}]"),
            None => String::new(),
        };
        format!(
            "{id:<28} {status:<7} margin={:+.3e}{witness}  {}",
            self.margin, self.detail
        )
    }
}

/// Build-step helper shared by the checks: keep the running worst slack and
/// the place it occurred.
#[derive(Clone, Debug)]
pub(crate) struct WorstSlack {
    pub margin: f64,
    pub witness: Option<Witness>,
}

impl WorstSlack {
    pub(crate) fn new() -> Self {
        WorstSlack {
            margin: f64::MAX,
            witness: None,
        }
    }

    pub(crate) fn observe(&mut self, slack: f64, witness: impl FnOnce() -> Witness) {
        if slack < self.margin {
            self.margin = slack;
            self.witness = Some(witness());
        }
    }

    /// Convert into a report with `pass iff margin >= -tolerance`.
    pub(crate) fn into_report(
        self,
        lemma: LemmaId,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> LemmaReport {
        let margin = if self.margin == f64::MAX {
            0.0
        } else {
            self.margin
        };
        if margin >= -tolerance {
            LemmaReport::pass(lemma, margin, tolerance, detail)
        } else {
            LemmaReport::fail(
                lemma,
                self.witness.expect("worst slack below -tolerance has a witness"),
                margin,
                tolerance,
                detail,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_invariants_hold_for_constructors() {
        let pass = LemmaReport::pass(LemmaId::RhoFloor, 0.25, 1e-9, "ok");
        assert!(pass.is_pass());
        assert!(pass.witness.is_none());
        assert!(pass.margin >= -pass.tolerance);

        let fail = LemmaReport::fail(
            LemmaId::MonotoneDistance,
            Witness::Iteration { k: 7 },
            -0.5,
            1e-12,
            "grew",
        );
        assert!(fail.is_fail());
        assert!(fail.witness.is_some());

        let skip = LemmaReport::skipped(LemmaId::SelfBounding, "no optimum");
        assert_eq!(skip.status, Status::Skipped);
        assert_eq!(skip.margin, 0.0);
    }

    #[test]
    fn worst_slack_tracks_minimum_and_witness() {
        let mut w = WorstSlack::new();
        w.observe(3.0, || Witness::Iteration { k: 0 });
        w.observe(-1.0, || Witness::Iteration { k: 4 });
        w.observe(2.0, || Witness::Iteration { k: 9 });
        let report = w.into_report(LemmaId::DescentGd, 1e-10, "test");
        assert!(report.is_fail());
        assert_eq!(report.margin, -1.0);
        assert_eq!(report.witness, Some(Witness::Iteration { k: 4 }));
    }

    #[test]
    fn empty_slack_passes_with_zero_margin() {
        let report = WorstSlack::new().into_report(LemmaId::RhoFloor, 1e-9, "nothing observed");
        assert!(report.is_pass());
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn report_serialization_is_flat_and_tagged() {
        let report = LemmaReport::pass(
            LemmaId::TheoremEnvelope {
                theorem: TheoremId::NsgdConvex,
            },
            1.0,
            0.0,
            "d",
        );
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"check\":\"theorem_envelope\""));
        assert!(json.contains("\"theorem\":\"nsgd_convex\""));
        let back: LemmaReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}

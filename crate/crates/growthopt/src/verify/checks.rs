//! Per-lemma checks over objectives, oracles, and run traces.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::linalg::Point;
use crate::objectives::ObjectiveSpec;
use crate::optimizers::{Method, RunTrace};
use crate::oracles::{
    minibatch_variance, minibatch_variance_exact, sample_symmetric_pareto, NoiseStats,
};
use crate::rng::{streams, SeedStream};

use super::{LemmaId, LemmaReport, Witness, WorstSlack};

/// Batch sizes sampled (beyond the exhaustive B = 1 sweep) by
/// [`check_self_bounding`], and how many batches are drawn per point.
const SELF_BOUNDING_BATCHES: [usize; 2] = [2, 8];
const SELF_BOUNDING_DRAWS: usize = 16;

/// Self-bounding of stochastic gradients on convex interpolating problems:
/// `||g||^2 <= 2 (cl0 + cl1 ||g||) <g, x - x*>` for every realization `g`
/// of the (mini-batch) gradient at `x`.
///
/// B = 1 is swept exhaustively over all components at every probe point;
/// B in {2, 8} are sampled with replacement from `seed`. Skips when the
/// objective is not finite-sum, has no known optimum, or carries no
/// per-realization constants.
pub fn check_self_bounding(
    obj: &ObjectiveSpec,
    points: &[Point],
    seed: u64,
) -> Result<LemmaReport> {
    let lemma = LemmaId::SelfBounding;
    if !obj.is_finite_sum() {
        return Ok(LemmaReport::skipped(lemma, "objective is not finite-sum"));
    }
    let Some(x_star) = obj.optimum() else {
        return Ok(LemmaReport::skipped(
            lemma,
            "objective is not interpolating (no known optimum)",
        ));
    };
    let profile = obj.smoothness_constants();
    let (Some(cl0), Some(cl1)) = (profile.cl0, profile.cl1) else {
        return Ok(LemmaReport::skipped(
            lemma,
            "per-realization smoothness constants unavailable",
        ));
    };
    let (cl0, cl1) = (cl0.value, cl1.value);
    let n = obj.n_components();
    let mut rng = SeedStream::substream(seed, streams::FUZZ);
    let mut worst = WorstSlack::new();
    let slack_of = |g: &Point, d: &Point| {
        let norm = g.norm();
        2.0 * (cl0 + cl1 * norm) * g.dot(d) - norm * norm
    };
    let mut draws = 0usize;
    for (pi, x) in points.iter().enumerate() {
        let d = x.sub(x_star);
        for i in 0..n {
            let g = obj.grad_component(x, i)?;
            worst.observe(slack_of(&g, &d), || Witness::Case {
                label: format!("point {pi}, component {i}"),
            });
            draws += 1;
        }
        for &b in &SELF_BOUNDING_BATCHES {
            for t in 0..SELF_BOUNDING_DRAWS {
                let mut g = Point::zeros(x.dim());
                for _ in 0..b {
                    let i = rng.gen_range(0..n);
                    g.add_scaled(1.0 / b as f64, &obj.grad_component(x, i)?);
                }
                worst.observe(slack_of(&g, &d), || Witness::Case {
                    label: format!("point {pi}, batch B={b} draw {t}"),
                });
                draws += 1;
            }
        }
    }
    Ok(worst.into_report(
        lemma,
        1e-9,
        format!(
            "min over {draws} draws of 2(cl0+cl1|g|)<g,x-x*> - |g|^2 at {} points",
            points.len()
        ),
    ))
}

/// Monotone distance to the optimum: `d_{k+1}^2 <= d_k^2 + 1e-12` along the
/// trace, where `d_k = ||x^k - x*||`. Skips when the trace has no recorded
/// distances (unknown optimum).
pub fn check_monotone_distance(trace: &RunTrace) -> LemmaReport {
    let lemma = LemmaId::MonotoneDistance;
    let dists: Option<Vec<f64>> = trace.rows.iter().map(|r| r.dist_to_opt).collect();
    let Some(dists) = dists else {
        return LemmaReport::skipped(lemma, "optimum unknown: trace has no distance column");
    };
    if dists.len() < 2 {
        return LemmaReport::pass(lemma, 0.0, 1e-12, "trace too short to violate");
    }
    let mut worst = WorstSlack::new();
    for (k, pair) in dists.windows(2).enumerate() {
        let slack = pair[0] * pair[0] - pair[1] * pair[1];
        worst.observe(slack, || Witness::Iteration { k: trace.rows[k].k });
    }
    worst.into_report(
        lemma,
        1e-12,
        format!(
            "min over {} steps of d_k^2 - d_{{k+1}}^2 (witness = index of the growing step)",
            dists.len() - 1
        ),
    )
}

/// Basic descent of the warm-up schedule: `F_{k+1} <= F_k - (eta_k/2)
/// ||grad f(x^k)||^2` with slack `1e-10 * max(1, F_0)`, plus the locality
/// bound `eta_k ||grad f(x^k)|| <= 1 / sqrt(h1)` whenever `h1 > 0`.
pub fn check_descent_gd(trace: &RunTrace, h0: f64, h1: f64) -> Result<LemmaReport> {
    let lemma = LemmaId::DescentGd;
    if !(h0.is_finite() && h0 >= 0.0 && h1.is_finite() && h1 >= 0.0) {
        return Err(Error::contract(format!(
            "descent check needs finite nonnegative constants, got h0={h0}, h1={h1}"
        )));
    }
    if !matches!(trace.config.method, Method::GdWarmup { .. }) {
        return Ok(LemmaReport::skipped(
            lemma,
            format!("not a warm-up trace (method {})", trace.config.method.name()),
        ));
    }
    let f0 = trace.initial_gap();
    let tolerance = 1e-10 * f0.max(1.0);
    let locality_cap = if h1 > 0.0 { 1.0 / h1.sqrt() } else { f64::INFINITY };
    let mut worst = WorstSlack::new();
    for (row, next) in trace.rows.iter().zip(trace.rows.iter().skip(1)) {
        let descent = row.gap - 0.5 * row.step_size * row.grad_norm * row.grad_norm - next.gap;
        worst.observe(descent, || Witness::Iteration { k: row.k });
        if h1 > 0.0 {
            let locality = locality_cap - row.step_size * row.grad_norm;
            worst.observe(locality, || Witness::Iteration { k: row.k });
        }
    }
    Ok(worst.into_report(
        lemma,
        tolerance,
        format!(
            "min slack of F_k - (eta_k/2)|g_k|^2 - F_{{k+1}} and of 1/sqrt(h1) - eta_k|g_k| \
             over {} steps",
            trace.rows.len().saturating_sub(1)
        ),
    ))
}

/// One batch size's measured deviation from the scaling identity.
#[derive(Clone, Copy, Debug)]
pub(crate) struct VarianceEntry {
    pub b: usize,
    pub var_b: f64,
    /// Absolute allowance on `|var_b * b - var_1|`.
    pub allowance: f64,
}

/// Turn measured variances into the identity report `Var_B * B = Var_1`.
pub(crate) fn assemble_variance_report(
    var1: f64,
    entries: &[VarianceEntry],
    detail: String,
) -> LemmaReport {
    let mut worst = WorstSlack::new();
    for e in entries {
        let deviation = (e.var_b * e.b as f64 - var1).abs();
        worst.observe(e.allowance - deviation, || Witness::Batch { b: e.b });
    }
    worst.into_report(LemmaId::VarianceBatch, 0.0, detail)
}

/// Mini-batch variance scaling `Var_B * B = Var_1`: exact enumeration for
/// `B <= 2` on noiseless finite sums (tolerance `1e-10 * max(1, Var_1)`),
/// Monte Carlo otherwise (5% of `Var_1`, `num_samples` batches per size).
pub fn check_variance_batch(
    obj: &ObjectiveSpec,
    x: &Point,
    b_list: &[usize],
    num_samples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if !obj.is_finite_sum() {
        return Err(Error::contract(
            "variance identity check needs a finite-sum family",
        ));
    }
    if b_list.is_empty() {
        return Err(Error::contract("variance identity check needs batch sizes"));
    }
    let exact_ok = obj.oracle_noise_sigma == 0.0;
    let mut rng = SeedStream::substream(seed, streams::MONTE_CARLO);
    let var1 = if exact_ok {
        minibatch_variance_exact(obj, x, 1)?
    } else {
        minibatch_variance(obj, x, 1, num_samples, &mut rng)?
    };
    let mut entries = Vec::with_capacity(b_list.len());
    let mut exact_count = 0usize;
    for &b in b_list {
        let exact_here = exact_ok && b <= 2;
        let (var_b, allowance) = if exact_here {
            exact_count += 1;
            (minibatch_variance_exact(obj, x, b)?, 1e-10 * var1.max(1.0))
        } else {
            (
                minibatch_variance(obj, x, b, num_samples, &mut rng)?,
                0.05 * var1,
            )
        };
        entries.push(VarianceEntry { b, var_b, allowance });
    }
    Ok(assemble_variance_report(
        var1,
        &entries,
        format!(
            "allowance - |Var_B * B - Var_1| over B={b_list:?} ({exact_count} exact, {} MC with \
             {num_samples} samples)",
            b_list.len() - exact_count
        ),
    ))
}

/// Growth-ratio floor: every estimate in `stats` satisfies
/// `rho >= 1 - 1e-9` (both the defining ratio and the p-th-moment variant).
pub fn check_rho_floor(stats: &[NoiseStats]) -> LemmaReport {
    let lemma = LemmaId::RhoFloor;
    if stats.is_empty() {
        return LemmaReport::skipped(lemma, "no growth-ratio estimates to check");
    }
    let mut worst = WorstSlack::new();
    for (index, s) in stats.iter().enumerate() {
        worst.observe(s.rho_hat.min(s.rho_p_hat) - 1.0, || Witness::Sample { index });
    }
    worst.into_report(
        lemma,
        1e-9,
        format!("min of rho_hat - 1 over {} estimates", stats.len()),
    )
}

/// Increment distributions for the martingale-difference bound check.
/// `Persistent` repeats one draw `n` times — not a martingale difference
/// sequence — so the check has a case it must fail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum IncrementModel {
    SignFlip,
    Gaussian,
    CenteredPareto { alpha: f64 },
    Persistent,
}

impl IncrementModel {
    fn label(&self) -> String {
        match self {
            IncrementModel::SignFlip => "sign_flip".to_string(),
            IncrementModel::Gaussian => "gaussian".to_string(),
            IncrementModel::CenteredPareto { alpha } => format!("centered_pareto(alpha={alpha})"),
            IncrementModel::Persistent => "persistent".to_string(),
        }
    }
}

const MDS_BLOCKS: usize = 16;

/// Martingale-difference moment bound `E|S_n|^p <= 2 sum_j E|X_j|^p` for
/// scalar increments, estimated by median-of-means over 16 blocks. Passes
/// iff `LHS <= 2 RHS (1 + 0.05) + 3 (se_lhs + 2 se_rhs)` where the standard
/// errors come from the block spread.
pub fn check_mds_bound(
    p: f64,
    n: usize,
    model: IncrementModel,
    num_samples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::contract(format!(
            "moment order must lie in [1, 2], got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::contract("martingale length must be >= 1"));
    }
    if num_samples < MDS_BLOCKS {
        return Err(Error::contract(format!(
            "need at least {MDS_BLOCKS} samples for median-of-means, got {num_samples}"
        )));
    }
    if let IncrementModel::CenteredPareto { alpha } = model {
        if !(alpha > 1.0) {
            return Err(Error::contract(format!(
                "pareto tail index must exceed 1, got {alpha}"
            )));
        }
        if p >= alpha {
            return Err(Error::contract(format!(
                "moment order {p} is not finite for tail index {alpha}"
            )));
        }
    }

    let base = SeedStream::substream(seed, streams::MONTE_CARLO).block_base();
    let per_block = num_samples / MDS_BLOCKS;
    let remainder = num_samples % MDS_BLOCKS;
    // Per block: mean of |S_n|^p and of sum_j |X_j|^p over the block's draws.
    let block_stats: Vec<(f64, f64)> = map_indexed(MDS_BLOCKS, |i| {
        let mut rng = SeedStream::substream(base, i as u64);
        let count = per_block + usize::from(i < remainder);
        let mut lhs_sum = 0.0;
        let mut rhs_sum = 0.0;
        for _ in 0..count {
            let mut s = 0.0;
            let mut pth_sum = 0.0;
            let persistent_draw = match model {
                IncrementModel::Persistent => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => 0.0,
            };
            for _ in 0..n {
                let x: f64 = match model {
                    IncrementModel::SignFlip => {
                        if rng.gen::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    IncrementModel::Gaussian => rng.sample(StandardNormal),
                    IncrementModel::CenteredPareto { alpha } => {
                        sample_symmetric_pareto(alpha, &mut rng)
                    }
                    IncrementModel::Persistent => persistent_draw,
                };
                s += x;
                pth_sum += x.abs().powf(p);
            }
            lhs_sum += s.abs().powf(p);
            rhs_sum += pth_sum;
        }
        (lhs_sum / count as f64, rhs_sum / count as f64)
    });

    let lhs = median_and_se(block_stats.iter().map(|b| b.0));
    let rhs = median_and_se(block_stats.iter().map(|b| b.1));
    let allowance = 2.0 * rhs.0 * 1.05 + 3.0 * (lhs.1 + 2.0 * rhs.1);
    let margin = allowance - lhs.0;
    let detail = format!(
        "{} n={n} p={p}: lhs {:.6e} vs 2*rhs {:.6e} ({num_samples} samples, {MDS_BLOCKS} blocks)",
        model.label(),
        lhs.0,
        2.0 * rhs.0
    );
    Ok(if margin >= 0.0 {
        LemmaReport::pass(LemmaId::MdsBound, margin, 0.0, detail)
    } else {
        LemmaReport::fail(
            LemmaId::MdsBound,
            Witness::Case { label: model.label() },
            margin,
            0.0,
            detail,
        )
    })
}

/// Median of the block means plus their spread-based standard error.
fn median_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("block means are finite"));
    let mid = v.len() / 2;
    let median = if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    };
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1).max(1) as f64;
    (median, (var / v.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{
        build_interp_least_squares, build_separable_logistic, Family, LeastSquaresData,
    };
    use crate::optimizers::{
        run, theorem_stepsize, DivergenceEvent, ExtTrace, IterRow, Method, OptimizerConfig,
        RuleInputs, StepRule,
    };
    use crate::oracles::estimate_rho;
    use crate::verify::Status;

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

    #[test]
    fn self_bounding_is_tight_at_the_optimum() {
        let obj = ls_from_rows(vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.5, -1.5]);
        let report = check_self_bounding(&obj, &[obj.optimum().unwrap().clone()], 3).unwrap();
        assert!(report.is_pass(), "{report:?}");
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn self_bounding_hand_margin_on_two_scalar_components() {
        // Rows 1 and 2 in d = 1, probe at x* + 1: component gradients are
        // a_i^2, cl0 = 4, cl1 = 0, so the B = 1 slacks are 2*4*1 - 1 = 7 and
        // 2*4*4 - 16 = 16. Any with-replacement batch mean g lies in [1, 4]
        // where the slack 8g - g^2 is increasing, so 7 is the global margin.
        let obj = ls_from_rows(vec![vec![1.0], vec![2.0]], vec![3.0]);
        let probe = Point::new(vec![4.0]).unwrap();
        let report = check_self_bounding(&obj, &[probe], 11).unwrap();
        assert!(report.is_pass(), "{report:?}");
        assert_eq!(report.margin, 7.0);
    }

    #[test]
    fn self_bounding_reduces_to_co_coercivity_on_quadratics() {
        // With cl1 = 0 the inequality is the co-coercivity-at-optimum form
        // ||g||^2 <= 2 cl0 <g, x - x*>: per component it reads
        // ||a_i||^2 (a_i . d)^2 <= 2 max_j ||a_j||^2 (a_i . d)^2, so the
        // exhaustive B = 1 sweep bounds the margin from above by the best
        // component slack (2 max_j ||a_j||^2 - ||a_i||^2) (a_i . d)^2.
        let rows = vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 1.0]];
        let obj = ls_from_rows(rows.clone(), vec![1.0, -1.0]);
        let probe = Point::new(vec![2.5, 0.5]).unwrap();
        let d = probe.sub(obj.optimum().unwrap());
        let max_sq = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        let single_draw_min = rows
            .iter()
            .map(|r| {
                let a = Point::new(r.clone()).unwrap();
                let proj = a.dot(&d);
                (2.0 * max_sq - a.norm_sq()) * proj * proj
            })
            .fold(f64::INFINITY, f64::min);
        let report = check_self_bounding(&obj, &[probe], 5).unwrap();
        assert!(report.is_pass(), "{report:?}");
        assert!(report.margin >= 0.0);
        assert!(report.margin <= single_draw_min + 1e-12);
    }

    #[test]
    fn self_bounding_skips_without_an_optimum() {
        let obj = build_separable_logistic(4, 6, 3, 0.5).unwrap();
        let probe = Point::zeros(3);
        let report = check_self_bounding(&obj, &[probe], 1).unwrap();
        assert_eq!(report.status, Status::Skipped);
    }

    #[test]
    fn self_bounding_flags_a_mislabeled_optimum() {
        // True minimizer is x = 1 (row 1, target 1), but the objective
        // declares 0:
        // at x = 0.5 the gradient points away from the claimed optimum and
        // the right-hand side goes negative: slack = -0.5 - 0.25 = -0.75.
        let mut obj = ls_from_rows(vec![vec![1.0]], vec![0.0]);
        match &mut obj.family {
            Family::InterpLeastSquares(data) => data.targets = vec![1.0],
            _ => unreachable!(),
        }
        let probe = Point::new(vec![0.5]).unwrap();
        let report = check_self_bounding(&obj, &[probe], 1).unwrap();
        assert!(report.is_fail(), "{report:?}");
        assert_eq!(report.margin, -0.75);
        assert!(report.witness.is_some());
    }

    fn nsgd_trace(obj: &ObjectiveSpec, x0: &Point, eta: f64, lambda: f64, seed: u64) -> RunTrace {
        let cfg = OptimizerConfig {
            method: Method::Nsgd { eta, lambda },
            batch_size: 4,
            max_iters: 400,
            seed,
        };
        run(obj, x0, &cfg).unwrap()
    }

    #[test]
    fn monotone_distance_holds_at_admissible_steps_and_breaks_at_100x() {
        let obj = build_interp_least_squares(21, 8, 4, 4.0).unwrap();
        let x0 = Point::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let rho = estimate_rho(&obj, &x0).unwrap().rho_hat;
        let profile = obj.smoothness_constants();
        let inputs = RuleInputs {
            cl0: Some(profile.cl0.unwrap().value),
            cl1: Some(profile.cl1.unwrap().value),
            rho,
            ..RuleInputs::default()
        };
        let lambda = 0.05;
        let eta = theorem_stepsize(StepRule::NsgdCvx, &inputs, lambda).unwrap();

        for seed in [1, 2, 3] {
            let trace = nsgd_trace(&obj, &x0, eta, lambda, seed);
            let report = check_monotone_distance(&trace);
            assert!(report.is_pass(), "seed {seed}: {report:?}");
        }

        let wild = nsgd_trace(&obj, &x0, 100.0 * eta, lambda, 1);
        let report = check_monotone_distance(&wild);
        assert!(report.is_fail(), "{report:?}");
        assert!(matches!(report.witness, Some(Witness::Iteration { .. })));
    }

    #[test]
    fn monotone_distance_is_trivial_at_the_optimum() {
        let obj = ls_from_rows(vec![vec![1.0, 1.0], vec![1.0, -1.0]], vec![0.25, 0.75]);
        let trace = nsgd_trace(&obj, obj.optimum().unwrap(), 0.1, 0.01, 9);
        let report = check_monotone_distance(&trace);
        assert!(report.is_pass());
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn monotone_distance_skips_without_distances() {
        let obj = build_separable_logistic(4, 6, 3, 0.5).unwrap();
        let cfg = OptimizerConfig {
            method: Method::Nsgd {
                eta: 0.01,
                lambda: 0.1,
            },
            batch_size: 2,
            max_iters: 5,
            seed: 0,
        };
        let trace = run(&obj, &Point::zeros(3), &cfg).unwrap();
        let report = check_monotone_distance(&trace);
        assert_eq!(report.status, Status::Skipped);
    }

    #[test]
    fn descent_gd_margin_matches_the_quadratic_recursion() {
        // Pareto quadratic, deterministic: h0 = 1, h1 = 0, so eta_k = theta
        // and F_{k+1} = (1 - theta)^2 F_k exactly. The per-step slack is
        // F_k (1 - theta - (1 - theta)^2) = theta (1 - theta) F_k, minimized
        // at the last compared step.
        let obj = crate::objectives::build_pareto_quadratic(3.0, 2).unwrap();
        let theta = crate::optimizers::default_warmup_theta();
        let cfg = OptimizerConfig {
            method: Method::GdWarmup { theta },
            batch_size: 0,
            max_iters: 50,
            seed: 0,
        };
        let x0 = Point::new(vec![3.0, 4.0]).unwrap();
        let trace = run(&obj, &x0, &cfg).unwrap();
        let report = check_descent_gd(&trace, 1.0, 0.0).unwrap();
        assert!(report.is_pass(), "{report:?}");
        let last_gap = trace.rows[trace.rows.len() - 2].gap;
        let expected = theta * (1.0 - theta) * last_gap;
        assert!(
            (report.margin - expected).abs() <= 1e-9 * expected,
            "margin {} vs expected {expected}",
            report.margin
        );
    }

    #[test]
    fn descent_gd_passes_with_locality_on_the_exponential() {
        let a = Point::new(vec![0.8, -0.6]).unwrap();
        let obj = crate::objectives::build_exp_inner_product(a).unwrap();
        let profile = obj.smoothness_constants();
        let cfg = OptimizerConfig {
            method: Method::GdWarmup {
                theta: crate::optimizers::default_warmup_theta(),
            },
            batch_size: 0,
            max_iters: 200,
            seed: 0,
        };
        let x0 = Point::new(vec![2.0, 1.0]).unwrap();
        let trace = run(&obj, &x0, &cfg).unwrap();
        let report =
            check_descent_gd(&trace, profile.h0.value, profile.h1.value).unwrap();
        assert!(report.is_pass(), "{report:?}");
    }

    #[test]
    fn descent_gd_fails_on_a_rising_gap() {
        let cfg = OptimizerConfig {
            method: Method::GdWarmup { theta: 0.25 },
            batch_size: 0,
            max_iters: 1,
            seed: 0,
        };
        let row = |k: usize, gap: f64, step: f64| IterRow {
            k,
            grad_norm: 1.0,
            gap,
            step_size: step,
            dist_to_opt: None,
            step_len: step,
        };
        let trace = RunTrace {
            config: cfg,
            rows: vec![row(0, 1.0, 0.1), row(1, 1.1, 0.0)],
            snapshots: Vec::new(),
            divergence: None::<DivergenceEvent>,
            ext: ExtTrace::default(),
            final_x: Point::zeros(1),
        };
        let report = check_descent_gd(&trace, 1.0, 0.0).unwrap();
        assert!(report.is_fail());
        assert_eq!(report.witness, Some(Witness::Iteration { k: 0 }));
        let expected = 1.0 - 0.05 - 1.1;
        assert!((report.margin - expected).abs() < 1e-15);
    }

    #[test]
    fn descent_gd_skips_non_warmup_traces() {
        let obj = ls_from_rows(vec![vec![1.0]], vec![2.0]);
        let trace = nsgd_trace(&obj, &Point::zeros(1), 0.1, 0.1, 0);
        let report = check_descent_gd(&trace, 1.0, 0.0).unwrap();
        assert_eq!(report.status, Status::Skipped);
    }

    #[test]
    fn variance_identity_passes_exact_and_monte_carlo_tiers() {
        let obj = ls_from_rows(
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, -1.0]],
            vec![0.0, 0.0],
        );
        let x = Point::new(vec![1.0, -1.0]).unwrap();
        let report = check_variance_batch(&obj, &x, &[1, 2, 8], 40_000, 17).unwrap();
        assert!(report.is_pass(), "{report:?}");
    }

    #[test]
    fn variance_identity_is_zero_for_identical_components() {
        let obj = ls_from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]);
        let x = Point::new(vec![3.0, 0.0]).unwrap();
        let report = check_variance_batch(&obj, &x, &[1, 2], 100, 0).unwrap();
        assert!(report.is_pass(), "{report:?}");
    }

    #[test]
    fn variance_identity_rejects_a_without_replacement_sampler() {
        // Sampling B = 2 *distinct* components scales the variance by
        // (n - B) / (n - 1) instead of 1, i.e. Var_2 = (Var_1 / 2)(3 / 4)
        // at n = 5 — a 25% violation of the identity, far past the 5% MC
        // allowance.
        let var1 = 1.6;
        let entries = [VarianceEntry {
            b: 2,
            var_b: (var1 / 2.0) * 0.75,
            allowance: 0.05 * var1,
        }];
        let report = assemble_variance_report(var1, &entries, "negative".into());
        assert!(report.is_fail());
        assert_eq!(report.witness, Some(Witness::Batch { b: 2 }));
        let expected = 0.05 * var1 - 0.25 * var1;
        assert!((report.margin - expected).abs() < 1e-12);
    }

    #[test]
    fn variance_identity_needs_a_finite_sum() {
        let obj = crate::objectives::build_pareto_quadratic(1.5, 2).unwrap();
        let x = Point::new(vec![1.0, 0.0]).unwrap();
        assert!(check_variance_batch(&obj, &x, &[1], 100, 0).is_err());
    }

    #[test]
    fn rho_floor_spans_exact_estimates_and_adversarial_instances() {
        let mut stats = Vec::new();
        // Identical components sit exactly on the floor.
        let flat = ls_from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, -2.0]);
        stats.push(estimate_rho(&flat, &Point::new(vec![4.0, 1.0]).unwrap()).unwrap());
        // Fuzzed problems: the exact finite-sum ratio can never dip below 1.
        let mut rng = SeedStream::substream(99, streams::FUZZ);
        for i in 0..1000 {
            let n = 2 + (i % 5);
            let d = 1 + (i % 4);
            let obj = build_interp_least_squares(1000 + i as u64, n, d, 3.0).unwrap();
            let coords: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x = Point::new(coords).unwrap();
            match estimate_rho(&obj, &x) {
                Ok(s) => stats.push(s),
                Err(Error::DegenerateGradient { .. }) => continue,
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
        assert!(stats.len() > 900);
        let report = check_rho_floor(&stats);
        assert!(report.is_pass(), "{report:?}");
        assert!(report.margin.abs() < 1e-9 || report.margin > 0.0);
    }

    #[test]
    fn rho_floor_flags_a_sub_unit_estimate() {
        let good = NoiseStats {
            rho_hat: 2.0,
            sigma_hat: 0.0,
            p: 2.0,
            rho_p_hat: 2.0,
            sample_count: 4,
            estimator_variant: crate::oracles::EstimatorVariant::ExactFiniteSum,
        };
        let bad = NoiseStats {
            rho_hat: 0.5,
            ..good
        };
        let report = check_rho_floor(&[good, bad]);
        assert!(report.is_fail());
        assert_eq!(report.witness, Some(Witness::Sample { index: 1 }));
        assert!((report.margin + 0.5).abs() < 1e-15);
    }

    #[test]
    fn rho_floor_skips_on_empty_input() {
        assert_eq!(check_rho_floor(&[]).status, Status::Skipped);
    }

    #[test]
    fn mds_bound_sign_flips_leave_the_classical_factor_two() {
        // E|S_n|^2 = n for independent signs, so the margin is close to
        // 2n * 1.05 - n.
        let report = check_mds_bound(2.0, 8, IncrementModel::SignFlip, 4096, 7).unwrap();
        assert!(report.is_pass(), "{report:?}");
        assert!(report.margin > 7.0 && report.margin < 11.0, "{report:?}");
    }

    #[test]
    fn mds_bound_is_trivial_at_length_one() {
        let report = check_mds_bound(1.0, 1, IncrementModel::Gaussian, 2048, 3).unwrap();
        assert!(report.is_pass(), "{report:?}");
    }

    #[test]
    fn mds_bound_holds_for_heavy_tailed_increments() {
        let report = check_mds_bound(
            1.2,
            64,
            IncrementModel::CenteredPareto { alpha: 1.5 },
            8192,
            13,
        )
        .unwrap();
        assert!(report.is_pass(), "{report:?}");
    }

    #[test]
    fn mds_bound_fails_for_persistent_increments() {
        // S_n = n X_1 exactly, so both sides are deterministic:
        // LHS = 64, allowance = 2 * 8 * 1.05 = 16.8.
        let report = check_mds_bound(2.0, 8, IncrementModel::Persistent, 1024, 5).unwrap();
        assert!(report.is_fail(), "{report:?}");
        assert!((report.margin - (16.8 - 64.0)).abs() < 1e-9, "{report:?}");
    }

    #[test]
    fn mds_bound_rejects_bad_orders() {
        assert!(check_mds_bound(0.5, 4, IncrementModel::SignFlip, 1024, 0).is_err());
        assert!(check_mds_bound(2.5, 4, IncrementModel::SignFlip, 1024, 0).is_err());
        assert!(
            check_mds_bound(1.8, 4, IncrementModel::CenteredPareto { alpha: 1.5 }, 1024, 0)
                .is_err()
        );
    }

    #[test]
    fn mds_bound_is_pure() {
        let a = check_mds_bound(1.5, 16, IncrementModel::Gaussian, 2048, 42).unwrap();
        let b = check_mds_bound(1.5, 16, IncrementModel::Gaussian, 2048, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}

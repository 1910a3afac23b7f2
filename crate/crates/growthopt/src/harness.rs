//! Declarative experiment runner.
//!
//! A config (JSON or TOML) names an objective, a starting point, an
//! optimizer grid (method kinds, step multipliers relative to the
//! theorem-maximal step, knobs, batch sizes), a seed list, and the checks to
//! attach. [`expand_grid`] resolves the grid into concrete optimizer
//! configurations, [`execute`] runs every cell across every seed
//! (in parallel when the `parallel` feature is on — results are
//! bit-identical either way because each run's randomness derives from its
//! seed alone), and [`write_outputs`] lays the results down as one CSV per
//! trace plus a summary and a report JSON. Reruns of the same config are
//! byte-identical; no output embeds timestamps, paths, or thread ids.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::linalg::Point;
use crate::objectives::{
    self, build_exp_inner_product, build_interp_least_squares, build_pareto_quadratic,
    build_separable_logistic, ObjectiveSpec,
};
use crate::optimizers::{
    batch_floor, default_warmup_theta, run, theorem_stepsize, BatchRegime, Method,
    OptimizerConfig, RuleInputs, RunTrace, StepRule,
};
use crate::oracles::{estimate_rho, NoiseStats};
use crate::rng::{streams, SeedStream};
use crate::trace_io;
use crate::verify::{
    check_descent_gd, check_mds_bound, check_monotone_distance, check_self_bounding,
    check_theorem_envelope, check_variance_batch, EnvelopeSetup, IncrementModel, LemmaId,
    LemmaReport, TheoremId,
};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "GROWTHOPT_OUT";

/// Fixed seed for the sampling any attached check performs; keeps sweep
/// outputs a pure function of the config.
const CHECK_SEED: u64 = 2026;

/// Which objective a config refers to, by family and constructor arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    InterpLeastSquares {
        seed: u64,
        n: usize,
        d: usize,
        conditioning: f64,
        #[serde(default)]
        oracle_noise: f64,
    },
    SeparableLogistic {
        seed: u64,
        n: usize,
        d: usize,
        margin: f64,
    },
    ExpInnerProduct {
        direction: Vec<f64>,
    },
    ParetoQuadratic {
        alpha: f64,
        dim: usize,
    },
}

impl ObjectiveConfig {
    pub fn family_name(&self) -> &'static str {
        match self {
            ObjectiveConfig::InterpLeastSquares { .. } => "interp_least_squares",
            ObjectiveConfig::SeparableLogistic { .. } => "separable_logistic",
            ObjectiveConfig::ExpInnerProduct { .. } => "exp_inner_product",
            ObjectiveConfig::ParetoQuadratic { .. } => "pareto_quadratic",
        }
    }

    pub fn build(&self) -> Result<ObjectiveSpec> {
        match self {
            ObjectiveConfig::InterpLeastSquares {
                seed,
                n,
                d,
                conditioning,
                oracle_noise,
            } => {
                let obj = build_interp_least_squares(*seed, *n, *d, *conditioning)?;
                if *oracle_noise > 0.0 {
                    obj.with_oracle_noise(*oracle_noise)
                } else {
                    Ok(obj)
                }
            }
            ObjectiveConfig::SeparableLogistic { seed, n, d, margin } => {
                build_separable_logistic(*seed, *n, *d, *margin)
            }
            ObjectiveConfig::ExpInnerProduct { direction } => {
                build_exp_inner_product(Point::new(direction.clone())?)
            }
            ObjectiveConfig::ParetoQuadratic { alpha, dim } => {
                build_pareto_quadratic(*alpha, *dim)
            }
        }
    }
}

/// Where a run starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// The origin.
    Origin,
    /// `x* + offset`; requires a known optimum.
    OptimumOffset { offset: Vec<f64> },
    /// Uniform in the ball of `radius` around the optimum (or the origin
    /// when no optimum is known), drawn from `seed`.
    RandomBall { radius: f64, seed: u64 },
    /// Exactly these coordinates.
    Explicit { coords: Vec<f64> },
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Origin
    }
}

impl InitConfig {
    pub fn resolve(&self, obj: &ObjectiveSpec) -> Result<Point> {
        let dim = obj.dim();
        match self {
            InitConfig::Origin => Ok(Point::zeros(dim)),
            InitConfig::OptimumOffset { offset } => {
                let opt = obj.optimum().ok_or_else(|| {
                    Error::config(format!(
                        "init optimum_offset needs a known optimum; {} has none",
                        obj.family_name()
                    ))
                })?;
                if offset.len() != dim {
                    return Err(Error::config(format!(
                        "init offset has dimension {}, objective has {dim}",
                        offset.len()
                    )));
                }
                let mut x = opt.clone();
                x.add_scaled(1.0, &Point::new(offset.clone())?);
                Ok(x)
            }
            InitConfig::RandomBall { radius, seed } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config(format!(
                        "init ball radius must be > 0, got {radius}"
                    )));
                }
                let mut rng = SeedStream::substream(*seed, streams::INIT);
                let dir = Point::new(objectives::gaussian_vec(&mut rng, dim))?;
                let norm = dir.norm();
                let mut x = match obj.optimum() {
                    Some(opt) => opt.clone(),
                    None => Point::zeros(dim),
                };
                if norm > 0.0 {
                    use rand::Rng;
                    let u: f64 = rng.gen();
                    let scale = radius * u.powf(1.0 / dim as f64) / norm;
                    x.add_scaled(scale, &dir);
                }
                Ok(x)
            }
            InitConfig::Explicit { coords } => {
                if coords.len() != dim {
                    return Err(Error::config(format!(
                        "init point has dimension {}, objective has {dim}",
                        coords.len()
                    )));
                }
                Point::new(coords.clone())
            }
        }
    }
}

/// Method kinds a grid can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Sgd,
    ClipSgd,
    Nsgd,
    GdWarmup,
}

impl MethodKind {
    fn name(&self) -> &'static str {
        match self {
            MethodKind::Sgd => "sgd",
            MethodKind::ClipSgd => "clip_sgd",
            MethodKind::Nsgd => "nsgd",
            MethodKind::GdWarmup => "gd_warmup",
        }
    }
}

/// The optimizer grid: the Cartesian product of methods, step multipliers,
/// the method's knob list (clip radii / lambdas), and batch sizes.
///
/// Step multipliers are relative to the non-convex theorem-maximal step:
/// the clip rule for `clip_sgd`, the nsgd rule for `nsgd`, the reference
/// `1 / (rho * l0)` for `sgd`, and the default warm-up `theta` for
/// `gd_warmup`. A batch size of 0 asks for the theorem floor of the
/// method's regime (and is left as "full batch" for `gd_warmup`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub methods: Vec<MethodKind>,
    pub eta_multipliers: Vec<f64>,
    #[serde(default)]
    pub clip_radii: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

/// A full experiment: objective, start, grid, seeds, horizon, checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub init: InitConfig,
    pub grid: GridConfig,
    pub seeds: Vec<u64>,
    pub max_iters: usize,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seed list must be nonempty"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds must be pairwise distinct"));
        }
        if self.grid.methods.is_empty() {
            return Err(Error::config("method list must be nonempty"));
        }
        if self.grid.eta_multipliers.is_empty() {
            return Err(Error::config("step-multiplier list must be nonempty"));
        }
        if self.grid.batch_sizes.is_empty() {
            return Err(Error::config("batch-size list must be nonempty"));
        }
        for &m in &self.grid.eta_multipliers {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::config(format!(
                    "step multipliers must be finite and > 0, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Problem constants resolved once per sweep.
struct Resolved {
    obj: ObjectiveSpec,
    x0: Point,
    inputs: RuleInputs,
    /// Exact finite-sum growth ratio at `x0`, when the family supports it.
    rho: Option<f64>,
}

fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    config.validate()?;
    let obj = config.objective.build()?;
    let x0 = config.init.resolve(&obj)?;
    let profile = obj.smoothness_constants();
    let rho = match estimate_rho(&obj, &x0) {
        Ok(stats) => Some(stats.rho_hat),
        Err(Error::Unsupported { .. }) | Err(Error::DegenerateGradient { .. }) => None,
        Err(e) => return Err(e),
    };
    let r0 = obj.optimum().map(|opt| x0.dist(opt));
    let inputs = RuleInputs {
        l0: profile.l0.value,
        l1: profile.l1.value,
        cl0: profile.cl0.map(|c| c.value),
        cl1: profile.cl1.map(|c| c.value),
        h0: profile.h0.value,
        h1: profile.h1.value,
        rho: rho.unwrap_or(1.0),
        r0,
    };
    Ok(Resolved { obj, x0, inputs, rho })
}

fn require_rho(rho: Option<f64>, what: &str) -> Result<f64> {
    rho.ok_or_else(|| {
        Error::config(format!(
            "{what} needs the growth ratio, which is unavailable for this \
             objective/start (no exact finite-sum ratio)"
        ))
    })
}

/// Theorem-maximal step (or warm-up theta) for one method kind at one knob.
fn reference_step(kind: MethodKind, res: &Resolved, knob: Option<f64>) -> Result<f64> {
    match kind {
        MethodKind::Sgd => {
            let rho = require_rho(res.rho, "the sgd reference step 1/(rho l0)")?;
            if res.inputs.l0 <= 0.0 {
                return Err(Error::config(
                    "sgd reference step undefined: l0 = 0 for this objective",
                ));
            }
            Ok(1.0 / (rho * res.inputs.l0))
        }
        MethodKind::ClipSgd => theorem_stepsize(
            StepRule::ClipNc,
            &res.inputs,
            knob.expect("clip cell grid always carries a radius"),
        ),
        MethodKind::Nsgd => theorem_stepsize(
            StepRule::NsgdNc,
            &res.inputs,
            knob.expect("nsgd cell grid always carries a lambda"),
        ),
        MethodKind::GdWarmup => Ok(default_warmup_theta()),
    }
}

fn resolve_batch(kind: MethodKind, res: &Resolved, b: usize) -> Result<usize> {
    if b > 0 {
        return Ok(b);
    }
    match kind {
        MethodKind::ClipSgd => {
            batch_floor(BatchRegime::ClipNc, require_rho(res.rho, "the clip batch floor")?)
        }
        MethodKind::Nsgd => {
            batch_floor(BatchRegime::NsgdNc, require_rho(res.rho, "the nsgd batch floor")?)
        }
        MethodKind::GdWarmup => Ok(0), // deterministic full gradient
        MethodKind::Sgd => Err(Error::config(
            "batch size 0 (theorem floor) is undefined for sgd",
        )),
    }
}

fn knob_list(kind: MethodKind, grid: &GridConfig) -> Result<Vec<Option<f64>>> {
    match kind {
        MethodKind::ClipSgd => {
            if grid.clip_radii.is_empty() {
                return Err(Error::config("clip_sgd requested with empty clip_radii"));
            }
            Ok(grid.clip_radii.iter().map(|&c| Some(c)).collect())
        }
        MethodKind::Nsgd => {
            if grid.lambdas.is_empty() {
                return Err(Error::config("nsgd requested with empty lambdas"));
            }
            Ok(grid.lambdas.iter().map(|&l| Some(l)).collect())
        }
        MethodKind::Sgd | MethodKind::GdWarmup => Ok(vec![None]),
    }
}

fn build_method(kind: MethodKind, eta: f64, knob: Option<f64>) -> Method {
    match kind {
        MethodKind::Sgd => Method::Sgd { eta },
        MethodKind::ClipSgd => Method::ClipSgd {
            eta,
            clip_radius: knob.expect("clip cell grid always carries a radius"),
        },
        MethodKind::Nsgd => Method::Nsgd {
            eta,
            lambda: knob.expect("nsgd cell grid always carries a lambda"),
        },
        MethodKind::GdWarmup => Method::GdWarmup { theta: eta },
    }
}

/// Expand the grid into one `OptimizerConfig` per cell (seed left at 0;
/// [`execute`] stamps the actual seeds). Order: methods, then step
/// multipliers, then knobs, then batch sizes.
pub fn expand_grid(config: &ExperimentConfig) -> Result<Vec<OptimizerConfig>> {
    let res = resolve(config)?;
    expand_grid_resolved(config, &res)
}

fn expand_grid_resolved(
    config: &ExperimentConfig,
    res: &Resolved,
) -> Result<Vec<OptimizerConfig>> {
    let mut cells = Vec::new();
    for &kind in &config.grid.methods {
        for &mult in &config.grid.eta_multipliers {
            for &knob in &knob_list(kind, &config.grid)?.clone() {
                let eta = mult * reference_step(kind, res, knob)?;
                for &b in &config.grid.batch_sizes {
                    let cell = OptimizerConfig {
                        method: build_method(kind, eta, knob),
                        batch_size: resolve_batch(kind, res, b)?,
                        max_iters: config.max_iters,
                        seed: 0,
                    };
                    cell.validate().map_err(|e| {
                        Error::config(format!(
                            "cell {}(x{mult}) resolves to an invalid run: {e}",
                            kind.name()
                        ))
                    })?;
                    cells.push(cell);
                }
            }
        }
    }
    Ok(cells)
}

/// Per-cell aggregate over seeds. Means, standard errors and medians are
/// taken over the non-diverged seeds and absent when every seed diverged;
/// medians are reported alongside means because heavy-tailed cells have
/// unstable means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub method: String,
    /// Resolved step size (theta for warm-up cells).
    pub eta: f64,
    /// Clip radius or lambda, when the method has one.
    pub knob: Option<f64>,
    pub batch_size: usize,
    pub seeds: usize,
    pub divergences: usize,
    pub mean_min_grad: Option<f64>,
    pub se_min_grad: Option<f64>,
    pub median_min_grad: Option<f64>,
    pub mean_final_gap: Option<f64>,
    pub se_final_gap: Option<f64>,
    pub median_final_gap: Option<f64>,
}

fn mean_se_median(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("run statistics are finite"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    (Some(mean), Some(se), Some(median))
}

fn summarize_cell(cell: usize, cfg: &OptimizerConfig, traces: &[RunTrace]) -> CellSummary {
    let alive: Vec<&RunTrace> = traces.iter().filter(|t| t.divergence.is_none()).collect();
    let min_grads: Vec<f64> = alive.iter().map(|t| t.min_grad_norm()).collect();
    let final_gaps: Vec<f64> = alive.iter().map(|t| t.final_gap()).collect();
    let (mean_min_grad, se_min_grad, median_min_grad) = mean_se_median(&min_grads);
    let (mean_final_gap, se_final_gap, median_final_gap) = mean_se_median(&final_gaps);
    let (eta, knob) = match cfg.method {
        Method::Sgd { eta } => (eta, None),
        Method::ClipSgd { eta, clip_radius } => (eta, Some(clip_radius)),
        Method::Nsgd { eta, lambda } => (eta, Some(lambda)),
        Method::GdWarmup { theta } => (theta, None),
    };
    CellSummary {
        cell,
        method: cfg.method.name().to_string(),
        eta,
        knob,
        batch_size: cfg.batch_size,
        seeds: traces.len(),
        divergences: traces.len() - alive.len(),
        mean_min_grad,
        se_min_grad,
        median_min_grad,
        mean_final_gap,
        se_final_gap,
        median_final_gap,
    }
}

/// Everything a sweep produced. Traces are kept for output writing but
/// excluded from the serialized summary.
#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub reports: Vec<LemmaReport>,
    #[serde(skip)]
    pub traces: Vec<Vec<RunTrace>>,
}

/// Run every cell across every seed and aggregate.
///
/// Individual divergences are recorded on their traces and in the cell
/// summaries; they never abort the sweep. Requested checks run afterwards
/// on the collected traces.
pub fn execute(config: &ExperimentConfig) -> Result<SweepResult> {
    let res = resolve(config)?;
    let cells = expand_grid_resolved(config, &res)?;
    let seeds = &config.seeds;
    let tasks = cells.len() * seeds.len();
    let outcomes: Vec<Result<RunTrace>> = map_indexed(tasks, |t| {
        let cell = &cells[t / seeds.len()];
        let cfg = OptimizerConfig {
            seed: seeds[t % seeds.len()],
            ..*cell
        };
        run(&res.obj, &res.x0, &cfg)
    });
    let mut traces: Vec<Vec<RunTrace>> = Vec::with_capacity(cells.len());
    let mut iter = outcomes.into_iter();
    for _ in 0..cells.len() {
        let group: Result<Vec<RunTrace>> = iter.by_ref().take(seeds.len()).collect();
        traces.push(group?);
    }
    let summaries: Vec<CellSummary> = cells
        .iter()
        .zip(traces.iter())
        .enumerate()
        .map(|(i, (cfg, group))| summarize_cell(i, cfg, group))
        .collect();
    let reports = run_checks(config, &res, &cells, &traces)?;
    Ok(SweepResult {
        config: config.clone(),
        cells: summaries,
        reports,
        traces,
    })
}

fn envelope_theorem(method: &Method) -> Option<TheoremId> {
    match method {
        Method::ClipSgd { .. } => Some(TheoremId::ClipNonconvex),
        Method::Nsgd { .. } => Some(TheoremId::NsgdNonconvex),
        Method::GdWarmup { .. } => Some(TheoremId::GdNonconvex),
        Method::Sgd { .. } => None,
    }
}

fn run_checks(
    config: &ExperimentConfig,
    res: &Resolved,
    cells: &[OptimizerConfig],
    traces: &[Vec<RunTrace>],
) -> Result<Vec<LemmaReport>> {
    let mut reports = Vec::new();
    let profile = res.obj.smoothness_constants();
    for name in &config.checks {
        match name.as_str() {
            "self_bounding" => {
                let mut rng = SeedStream::substream(CHECK_SEED, streams::FUZZ);
                let mut points = vec![res.x0.clone()];
                for _ in 0..2 {
                    points.push(Point::new(objectives::gaussian_vec(
                        &mut rng,
                        res.obj.dim(),
                    ))?);
                }
                reports.push(check_self_bounding(&res.obj, &points, CHECK_SEED)?);
            }
            "monotone_distance" => {
                for (i, group) in traces.iter().enumerate() {
                    for trace in group {
                        let mut report = check_monotone_distance(trace);
                        report.detail =
                            format!("cell {i} seed {}: {}", trace.config.seed, report.detail);
                        reports.push(report);
                    }
                }
            }
            "descent_gd" => {
                for (i, group) in traces.iter().enumerate() {
                    for trace in group {
                        let mut report =
                            check_descent_gd(trace, profile.h0.value, profile.h1.value)?;
                        report.detail =
                            format!("cell {i} seed {}: {}", trace.config.seed, report.detail);
                        reports.push(report);
                    }
                }
            }
            "variance_batch" => {
                if !res.obj.is_finite_sum() {
                    reports.push(LemmaReport::skipped(
                        LemmaId::VarianceBatch,
                        "objective is not finite-sum",
                    ));
                    continue;
                }
                // Cap the sampled batch sizes; theorem floors can be large
                // and the identity is exact in b, so small b suffices.
                let mut b_list: Vec<usize> = cells
                    .iter()
                    .map(|c| c.batch_size)
                    .filter(|&b| (1..=64).contains(&b))
                    .collect();
                b_list.extend([1, 2]);
                b_list.sort_unstable();
                b_list.dedup();
                reports.push(check_variance_batch(
                    &res.obj, &res.x0, &b_list, 20_000, CHECK_SEED,
                )?);
            }
            "rho_floor" => {
                let mut rng = SeedStream::substream(CHECK_SEED, streams::FUZZ);
                let mut stats: Vec<NoiseStats> = Vec::new();
                let mut points = vec![res.x0.clone()];
                for _ in 0..4 {
                    points.push(Point::new(objectives::gaussian_vec(
                        &mut rng,
                        res.obj.dim(),
                    ))?);
                }
                for p in &points {
                    match estimate_rho(&res.obj, p) {
                        Ok(s) => stats.push(s),
                        Err(Error::Unsupported { .. })
                        | Err(Error::DegenerateGradient { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                reports.push(crate::verify::check_rho_floor(&stats));
            }
            "mds_bound" => {
                for model in [
                    IncrementModel::SignFlip,
                    IncrementModel::Gaussian,
                    IncrementModel::CenteredPareto { alpha: 1.5 },
                ] {
                    let p = match model {
                        IncrementModel::CenteredPareto { .. } => 1.2,
                        _ => 2.0,
                    };
                    reports.push(check_mds_bound(p, 8, model, 4096, CHECK_SEED)?);
                }
            }
            "theorem_envelope" => {
                for (i, (cell, group)) in cells.iter().zip(traces.iter()).enumerate() {
                    let Some(theorem) = envelope_theorem(&cell.method) else {
                        continue;
                    };
                    let mut setup = EnvelopeSetup::new(theorem);
                    setup.h0 = Some(profile.h0.value);
                    setup.h1 = Some(profile.h1.value);
                    // Mark cells outside the admissible regime so they
                    // skip instead of failing an inapplicable bound.
                    setup.step_cap = match cell.method {
                        Method::ClipSgd { clip_radius, .. } => {
                            theorem_stepsize(StepRule::ClipNc, &res.inputs, clip_radius).ok()
                        }
                        Method::Nsgd { lambda, .. } => {
                            theorem_stepsize(StepRule::NsgdNc, &res.inputs, lambda).ok()
                        }
                        Method::GdWarmup { .. } => Some(default_warmup_theta()),
                        Method::Sgd { .. } => None,
                    };
                    setup.batch_floor = res.rho.and_then(|rho| match cell.method {
                        Method::ClipSgd { .. } => batch_floor(BatchRegime::ClipNc, rho).ok(),
                        Method::Nsgd { .. } => batch_floor(BatchRegime::NsgdNc, rho).ok(),
                        _ => None,
                    });
                    let mut report = check_theorem_envelope(group, &setup)?;
                    report.detail = format!("cell {i}: {}", report.detail);
                    reports.push(report);
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown check {other:?}; known checks: self_bounding, \
                     monotone_distance, descent_gd, variance_batch, rho_floor, \
                     mds_bound, theorem_envelope"
                )))
            }
        }
    }
    Ok(reports)
}

/// Write one CSV per trace plus `summary.json` and `lemma_reports.json`
/// under `dir`, overwriting existing files. Returns the written paths.
pub fn write_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir)?;
    let mut paths = Vec::new();
    for (i, group) in result.traces.iter().enumerate() {
        for trace in group {
            let path = traces_dir.join(format!("cell{i:03}_seed{}.csv", trace.config.seed));
            trace_io::write_trace_file(&path, &trace_meta(result, i, trace), &trace.rows)?;
            paths.push(path);
        }
    }
    let summary = dir.join("summary.json");
    fs::write(&summary, pretty_json(&serde_json::to_value(result).map_err(json_err)?)?)?;
    paths.push(summary);
    let reports = dir.join("lemma_reports.json");
    fs::write(
        &reports,
        pretty_json(&serde_json::to_value(&result.reports).map_err(json_err)?)?,
    )?;
    paths.push(reports);
    Ok(paths)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

fn pretty_json(value: &serde_json::Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(json_err)?;
    s.push('\n');
    Ok(s)
}

fn trace_meta(result: &SweepResult, cell: usize, trace: &RunTrace) -> Vec<(String, String)> {
    let mut meta = vec![
        (
            "family".to_string(),
            result.config.objective.family_name().to_string(),
        ),
        ("cell".to_string(), cell.to_string()),
        ("method".to_string(), trace.config.method.name().to_string()),
    ];
    let (eta, knob_key, knob) = match trace.config.method {
        Method::Sgd { eta } => (eta, None, 0.0),
        Method::ClipSgd { eta, clip_radius } => (eta, Some("clip_radius"), clip_radius),
        Method::Nsgd { eta, lambda } => (eta, Some("lambda"), lambda),
        Method::GdWarmup { theta } => (theta, None, 0.0),
    };
    meta.push(("eta".to_string(), trace_io::format_f64(eta)));
    if let Some(key) = knob_key {
        meta.push((key.to_string(), trace_io::format_f64(knob)));
    }
    meta.push((
        "batch_size".to_string(),
        trace.config.batch_size.to_string(),
    ));
    meta.push(("max_iters".to_string(), trace.config.max_iters.to_string()));
    meta.push(("seed".to_string(), trace.config.seed.to_string()));
    if let Some(event) = &trace.divergence {
        meta.push((
            "divergence".to_string(),
            format!("{:?}@{}", event.reason, event.iteration),
        ));
    }
    meta
}

/// Supported config file formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

pub fn parse_config(text: &str, format: ConfigFormat) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = match format {
        ConfigFormat::Json => serde_json::from_str(text)
            .map_err(|e| Error::config(format!("invalid JSON config: {e}")))?,
        ConfigFormat::Toml => toml::from_str(text)
            .map_err(|e| Error::config(format!("invalid TOML config: {e}")))?,
    };
    config.validate()?;
    Ok(config)
}

/// Load a config file, picking the format from the extension
/// (`.json` / `.toml`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ConfigFormat::Json,
        Some("toml") => ConfigFormat::Toml,
        other => {
            return Err(Error::config(format!(
                "config must end in .json or .toml, got {other:?}"
            )))
        }
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, format)
}

/// Apply one `key=value` override. Documented keys only; anything else is
/// a config error.
pub fn apply_override(config: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| Error::config(format!("override {key}={value}: invalid {what}"));
    match key {
        "max_iters" => {
            config.max_iters = value.parse().map_err(|_| bad("iteration count"))?;
        }
        "eta_mult" => {
            let v: f64 = value.parse().map_err(|_| bad("multiplier"))?;
            config.grid.eta_multipliers = vec![v];
        }
        "batch" => {
            let v: usize = value.parse().map_err(|_| bad("batch size"))?;
            config.grid.batch_sizes = vec![v];
        }
        "clip_radius" => {
            let v: f64 = value.parse().map_err(|_| bad("clip radius"))?;
            config.grid.clip_radii = vec![v];
        }
        "lambda" => {
            let v: f64 = value.parse().map_err(|_| bad("lambda"))?;
            config.grid.lambdas = vec![v];
        }
        "seeds" => {
            let seeds: std::result::Result<Vec<u64>, _> =
                value.split(',').map(|s| s.trim().parse()).collect();
            config.seeds = seeds.map_err(|_| bad("seed list"))?;
        }
        other => {
            return Err(Error::config(format!(
                "unknown override key {other:?}; known keys: max_iters, eta_mult, \
                 batch, clip_radius, lambda, seeds"
            )))
        }
    }
    config.validate()
}

/// Output directory resolution: explicit config value, then the
/// `GROWTHOPT_OUT` environment variable, then `./growthopt-out`.
pub fn resolve_out_dir(config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &config.out_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("growthopt-out")
}

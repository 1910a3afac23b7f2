//! Command-line surface for the growthopt laboratory.
//!
//! Subcommands: `run` (one configured run), `sweep` (a full grid),
//! `verify` (the lemma-check suite), `estimate-rho` (growth-ratio probe
//! with batch floors), `report` (pretty-print a sweep output directory).
//!
//! Exit codes: 0 success (a diverged run is a reported outcome, not an
//! error), 1 verification failure, 2 config or usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use growthopt::harness::{
    self, apply_override, load_config, resolve_out_dir, write_outputs, ExperimentConfig,
    GridConfig, InitConfig, MethodKind, ObjectiveConfig, SweepResult,
};
use growthopt::linalg::Point;
use growthopt::optimizers::{batch_floor, BatchRegime, Method};
use growthopt::oracles::{estimate_p_moment, estimate_rho, EstimatorVariant, NoiseStats};
use growthopt::rng::{streams, SeedStream};
use growthopt::trace_io::{format_f64, format_f64_exact, read_trace_file};
use growthopt::verify::{fit_phase_rows, LemmaReport, PhaseMode, Witness};
use growthopt::Error;

#[derive(Parser)]
#[command(
    name = "growthopt",
    version,
    about = "Clipped/normalized stochastic gradient laboratory",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured run and write its trace CSV.
    Run(CommonArgs),
    /// Execute the full optimizer grid and write traces, summary, reports.
    Sweep(CommonArgs),
    /// Run lemma checks; exit 0 iff every non-skipped check passes.
    Verify(VerifyArgs),
    /// Estimate the growth ratio at a point and print batch floors.
    EstimateRho(EstimateRhoArgs),
    /// Pretty-print a sweep output directory, with rate fits per trace.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (.json or .toml).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config, then $GROWTHOPT_OUT, then
    /// ./growthopt-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override, KEY=VALUE (repeatable; documented keys only).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated check list replacing the config's checks.
    #[arg(long)]
    checks: Option<String>,
    /// Print every number with 17 significant digits.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment config file; omit to verify the bundled default problem.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override, KEY=VALUE (repeatable; documented keys only).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated check list (empty string runs nothing).
    #[arg(long)]
    checks: Option<String>,
    /// Print every number with 17 significant digits.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct EstimateRhoArgs {
    /// Experiment config naming the objective (and default probe point).
    #[arg(long)]
    config: PathBuf,
    /// Probe point, comma-separated coordinates (default: the config's
    /// init point).
    #[arg(long, value_name = "X1,X2,...")]
    at: Option<String>,
    /// Also estimate the centered p-th moment ratio, p in (1, 2).
    #[arg(long)]
    p: Option<f64>,
    /// Monte Carlo sample count for the p-th moment estimate.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Seed for the Monte Carlo estimate.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print every number with 17 significant digits.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep output directory (default: $GROWTHOPT_OUT, then
    /// ./growthopt-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print every number with 17 significant digits.
    #[arg(long)]
    exact: bool,
}

/// Rust ignores SIGPIPE by default, turning `growthopt report | head` into
/// a broken-pipe panic; restore the conventional kill-on-pipe-close.
#[cfg(unix)]
fn reset_sigpipe() {
    // SAFETY: signal(2) with SIG_DFL is async-signal-safe and has no
    // preconditions; called once before any output.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
        Command::EstimateRho(args) => cmd_estimate_rho(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn fmt(v: f64, exact: bool) -> String {
    if exact {
        format_f64_exact(v)
    } else {
        format_f64(v)
    }
}

fn parse_checks(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn load_common(
    config: &PathBuf,
    seed: Option<u64>,
    overrides: &[String],
    checks: &Option<String>,
) -> Result<ExperimentConfig> {
    let mut cfg = load_config(config)?;
    finish_config(&mut cfg, seed, overrides, checks)?;
    Ok(cfg)
}

fn finish_config(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    overrides: &[String],
    checks: &Option<String>,
) -> Result<()> {
    for pair in overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override {pair:?} is not of the form KEY=VALUE"))?;
        apply_override(cfg, key, value)?;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(list) = checks {
        cfg.checks = parse_checks(list);
    }
    Ok(())
}

fn print_reports(reports: &[LemmaReport], exact: bool) -> usize {
    let mut failures = 0;
    for report in reports {
        println!("{}", report.summary_line());
        if report.is_fail() {
            failures += 1;
            if let Some(witness) = &report.witness {
                println!("  witness: {}", describe_witness(witness, exact));
            }
        }
    }
    failures
}

fn describe_witness(witness: &Witness, exact: bool) -> String {
    match witness {
        Witness::Iteration { k } => format!("iteration k={k}"),
        Witness::Sample { index } => format!("sample index {index}"),
        Witness::Batch { b } => format!("batch size {b}"),
        Witness::Point { coords } => {
            let coords: Vec<String> = coords.iter().map(|&c| fmt(c, exact)).collect();
            format!("point ({})", coords.join(", "))
        }
        Witness::Case { label } => label.clone(),
    }
}

fn method_label(method: &Method, exact: bool) -> String {
    match *method {
        Method::Sgd { eta } => format!("sgd eta={}", fmt(eta, exact)),
        Method::ClipSgd { eta, clip_radius } => format!(
            "clip_sgd eta={} c={}",
            fmt(eta, exact),
            fmt(clip_radius, exact)
        ),
        Method::Nsgd { eta, lambda } => {
            format!("nsgd eta={} lambda={}", fmt(eta, exact), fmt(lambda, exact))
        }
        Method::GdWarmup { theta } => format!("gd_warmup theta={}", fmt(theta, exact)),
    }
}

fn print_cells(result: &SweepResult, exact: bool) {
    let opt = |v: Option<f64>| match v {
        Some(v) => fmt(v, exact),
        None => "-".to_string(),
    };
    for cell in &result.cells {
        let knob = match cell.knob {
            Some(k) => format!(" knob={}", fmt(k, exact)),
            None => String::new(),
        };
        println!(
            "cell {:>3}  {:<9} eta={}{} B={} seeds={} diverged={}  \
             min|grad| mean={} se={}  gap mean={} median={}",
            cell.cell,
            cell.method,
            fmt(cell.eta, exact),
            knob,
            cell.batch_size,
            cell.seeds,
            cell.divergences,
            opt(cell.mean_min_grad),
            opt(cell.se_min_grad),
            opt(cell.mean_final_gap),
            opt(cell.median_final_gap),
        );
    }
}

fn cmd_run(args: CommonArgs) -> Result<u8> {
    let config = load_common(&args.config, args.seed, &args.overrides, &args.checks)?;
    if config.seeds.len() != 1 {
        bail!(
            "run needs exactly one seed (config has {}); pass --seed",
            config.seeds.len()
        );
    }
    let cells = harness::expand_grid(&config)?;
    if cells.len() != 1 {
        bail!(
            "run needs a single-cell config (grid expands to {} cells); use sweep",
            cells.len()
        );
    }
    let result = harness::execute(&config)?;
    let dir = args.out.unwrap_or_else(|| resolve_out_dir(&config));
    let paths = write_outputs(&result, &dir)?;

    let trace = &result.traces[0][0];
    let first = trace.rows.first().expect("traces always have a row");
    let last = trace.rows.last().expect("traces always have a row");
    println!(
        "run: {} / {}",
        result.config.objective.family_name(),
        method_label(&trace.config.method, args.exact)
    );
    println!(
        "  B={} seed={} iters={}",
        trace.config.batch_size,
        trace.config.seed,
        trace.rows.len() - 1
    );
    println!(
        "  gap {} -> {}   min |grad| {}",
        fmt(first.gap, args.exact),
        fmt(last.gap, args.exact),
        fmt(trace.min_grad_norm(), args.exact)
    );
    match &trace.divergence {
        Some(event) => println!("  diverged at k={}: {:?}", event.iteration, event.reason),
        None => println!("  diverged: no"),
    }
    for path in &paths {
        println!("  wrote {}", path.display());
    }
    let failures = print_reports(&result.reports, args.exact);
    Ok(if failures > 0 { 1 } else { 0 })
}

fn cmd_sweep(args: CommonArgs) -> Result<u8> {
    let config = load_common(&args.config, args.seed, &args.overrides, &args.checks)?;
    let result = harness::execute(&config)?;
    let dir = args.out.unwrap_or_else(|| resolve_out_dir(&config));
    let paths = write_outputs(&result, &dir)?;
    print_cells(&result, args.exact);
    let failures = print_reports(&result.reports, args.exact);
    println!(
        "wrote {} files under {} ({} cells, {} checks, {} failed)",
        paths.len(),
        dir.display(),
        result.cells.len(),
        result.reports.len(),
        failures
    );
    Ok(if failures > 0 { 1 } else { 0 })
}

/// The problem `verify` exercises when no config is supplied: a modest
/// interpolating least-squares instance covering the clipped, normalized
/// and warm-up methods at their theorem-maximal steps and batch floors.
fn bundled_verify_config() -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveConfig::InterpLeastSquares {
            seed: 11,
            n: 12,
            d: 4,
            conditioning: 5.0,
            oracle_noise: 0.0,
        },
        init: InitConfig::Explicit {
            coords: vec![1.5, -0.5, 1.0, 0.5],
        },
        grid: GridConfig {
            methods: vec![MethodKind::ClipSgd, MethodKind::Nsgd, MethodKind::GdWarmup],
            eta_multipliers: vec![1.0],
            clip_radii: vec![1.0],
            lambdas: vec![0.05],
            batch_sizes: vec![0],
        },
        seeds: vec![1, 2, 3],
        max_iters: 200,
        checks: full_check_list(),
        out_dir: None,
    }
}

fn full_check_list() -> Vec<String> {
    [
        "self_bounding",
        "monotone_distance",
        "descent_gd",
        "variance_batch",
        "rho_floor",
        "mds_bound",
        "theorem_envelope",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => bundled_verify_config(),
    };
    finish_config(&mut config, args.seed, &args.overrides, &args.checks)?;
    if args.checks.is_none() && config.checks.is_empty() {
        config.checks = full_check_list();
    }
    if config.checks.is_empty() {
        println!("0 checks requested; nothing to verify");
        return Ok(0);
    }
    let result = harness::execute(&config)?;
    let failures = print_reports(&result.reports, args.exact);
    let (passed, skipped) = result.reports.iter().fold((0, 0), |(p, s), r| {
        if r.is_pass() {
            (p + 1, s)
        } else if r.is_fail() {
            (p, s)
        } else {
            (p, s + 1)
        }
    });
    println!(
        "{} checks: {} passed, {} failed, {} skipped",
        result.reports.len(),
        passed,
        failures,
        skipped
    );
    Ok(if failures > 0 { 1 } else { 0 })
}

fn parse_point(text: &str) -> Result<Point> {
    let coords: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|s| s.trim().parse()).collect();
    let coords = coords.with_context(|| format!("cannot parse point {text:?}"))?;
    Ok(Point::new(coords)?)
}

fn print_floor(label: &str, regime: BatchRegime, rho: f64) {
    match batch_floor(regime, rho) {
        Ok(b) => println!("  {label:<16} {b}"),
        Err(e) => println!("  {label:<16} unavailable ({e})"),
    }
}

fn cmd_estimate_rho(args: EstimateRhoArgs) -> Result<u8> {
    let config = load_config(&args.config)?;
    let obj = config.objective.build()?;
    let x = match &args.at {
        Some(text) => parse_point(text)?,
        None => config.init.resolve(&obj)?,
    };

    let exact_stats: Option<NoiseStats> = match estimate_rho(&obj, &x) {
        Ok(stats) => Some(stats),
        Err(Error::DegenerateGradient { norm, threshold }) => {
            eprintln!(
                "degenerate gradient at the probe point: |grad| = {} <= {}; \
                 the growth ratio is undefined here",
                fmt(norm, args.exact),
                fmt(threshold, args.exact)
            );
            return Ok(1);
        }
        Err(Error::Unsupported { .. }) if args.p.is_some() => None,
        Err(Error::Unsupported { family, operation }) => {
            bail!("{operation} is unsupported for {family}; pass --p for the heavy-tail moment")
        }
        Err(e) => return Err(e.into()),
    };

    if let Some(stats) = &exact_stats {
        let variant = match stats.estimator_variant {
            EstimatorVariant::ExactFiniteSum => "exact finite-sum",
            EstimatorVariant::MonteCarlo => "monte carlo",
        };
        println!(
            "rho_hat = {} ({variant}, {} components)",
            fmt(stats.rho_hat, args.exact),
            stats.sample_count
        );
    }

    let p_stats: Option<NoiseStats> = match args.p {
        Some(p) => {
            let mut rng = SeedStream::substream(args.seed, streams::MONTE_CARLO);
            match estimate_p_moment(&obj, &x, p, args.samples, &mut rng) {
                Ok(stats) => {
                    println!(
                        "rho_p_hat(p={}) = {} (monte carlo, {} samples)",
                        fmt(p, args.exact),
                        fmt(stats.rho_p_hat, args.exact),
                        stats.sample_count
                    );
                    Some(stats)
                }
                Err(Error::DegenerateGradient { norm, threshold }) => {
                    eprintln!(
                        "degenerate gradient at the probe point: |grad| = {} <= {}; \
                         the growth ratio is undefined here",
                        fmt(norm, args.exact),
                        fmt(threshold, args.exact)
                    );
                    return Ok(1);
                }
                Err(e) => return Err(e.into()),
            }
        }
        None => None,
    };

    println!("batch floors:");
    if let Some(stats) = &exact_stats {
        let rho = stats.rho_hat;
        print_floor("clip_nonconvex", BatchRegime::ClipNc, rho);
        print_floor("clip_convex", BatchRegime::ClipCvx, rho);
        print_floor("clip_h", BatchRegime::ClipH, rho);
        print_floor("nsgd_nonconvex", BatchRegime::NsgdNc, rho);
        print_floor("nsgd_convex", BatchRegime::NsgdCvx, rho);
        print_floor("nsgd_h", BatchRegime::NsgdH, rho);
    }
    if let (Some(p), Some(stats)) = (args.p, &p_stats) {
        print_floor(
            &format!("heavy(p={p})"),
            BatchRegime::Heavy { p },
            stats.rho_p_hat,
        );
    }
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let dir = match args.out {
        Some(dir) => dir,
        None => match std::env::var(harness::OUT_DIR_ENV) {
            Ok(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from("growthopt-out"),
        },
    };
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path)
        .with_context(|| format!("cannot read {}", summary_path.display()))?;
    let summary: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", summary_path.display()))?;
    let cells: Vec<harness::CellSummary> = serde_json::from_value(
        summary
            .get("cells")
            .cloned()
            .ok_or_else(|| anyhow!("{} has no \"cells\" field", summary_path.display()))?,
    )?;
    println!("{} cells in {}", cells.len(), dir.display());
    let opt = |v: Option<f64>| match v {
        Some(v) => fmt(v, args.exact),
        None => "-".to_string(),
    };
    for cell in &cells {
        println!(
            "cell {:>3}  {:<9} eta={} B={} diverged={}/{}  gap mean={} median={}",
            cell.cell,
            cell.method,
            fmt(cell.eta, args.exact),
            cell.batch_size,
            cell.divergences,
            cell.seeds,
            opt(cell.mean_final_gap),
            opt(cell.median_final_gap),
        );
    }

    let reports_path = dir.join("lemma_reports.json");
    if let Ok(text) = std::fs::read_to_string(&reports_path) {
        let reports: Vec<LemmaReport> = serde_json::from_str(&text)
            .with_context(|| format!("{} is not valid JSON", reports_path.display()))?;
        print_reports(&reports, args.exact);
    }

    let traces_dir = dir.join("traces");
    if traces_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&traces_dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        paths.sort();
        for path in paths {
            let (_, rows) = read_trace_file(&path)?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            match fit_phase_rows(&rows, PhaseMode::Changepoint) {
                Ok(fit) => {
                    let ratio = opt(fit.linear_ratio);
                    let c1 = opt(fit.sublinear_c1);
                    println!(
                        "{name}: phase boundary k={}; linear ratio {}; tail 1/(c0+c1 k) \
                         c1={}; residual {}",
                        fit.phase_boundary,
                        ratio,
                        c1,
                        fmt(fit.residual, args.exact)
                    );
                }
                Err(e) => println!("{name}: no rate fit ({e})"),
            }
        }
    }
    Ok(0)
}

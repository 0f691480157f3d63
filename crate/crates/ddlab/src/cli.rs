//! Command-line surface: single runs, sweeps, aggregation, phase reports,
//! plots, and gradient checks.
//!
//! Exit codes: 0 success, 1 run/check failure, 2 usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentConfig, EntropyAveraging};
use crate::analysis::{aggregate, segment_phases, AggregateSeries};
use crate::csvio;
use crate::error::{Error, Result};
use crate::gridworld::{Action, EnvConfig, GridMap};
use crate::neural::{gradcheck, save_params, Architecture};
use crate::plot::{render_svg, PlotSpec};
use crate::sweep::{
    default_architectures, derive_seed, discover_completed_runs, run_into_dir, run_sweep,
    write_atomic, ResolvedRun, RunStatus, SweepConfig, CI_LEVEL,
};

/// Largest tolerated analytic-vs-numeric gradient disagreement.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "ddlab",
    version,
    about = "Capacity-sweep laboratory for actor-critic agents on FrozenLake"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its metrics and manifest into a directory.
    Run(RunArgs),
    /// Run the full architectures x seeds grid and aggregate the results.
    Sweep(SweepArgs),
    /// Aggregate completed runs into per-episode mean and confidence bands.
    Aggregate(AggregateArgs),
    /// Segment aggregate entropy curves into descent/ascent phases.
    Phases(PhasesArgs),
    /// Render aggregate curves into a self-contained SVG.
    Plot(PlotArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

fn parse_widths(text: &str) -> Result<Vec<usize>> {
    let widths: Vec<usize> = text
        .split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| Error::usage(format!("bad width {w:?} in --arch")))
        })
        .collect::<Result<_>>()?;
    Ok(widths)
}

fn parse_entropy_mode(text: &str) -> std::result::Result<EntropyAveraging, String> {
    match text {
        "visited" => Ok(EntropyAveraging::Visited),
        "all-states" => Ok(EntropyAveraging::AllStates),
        other => Err(format!(
            "bad entropy mode {other:?}, expected visited or all-states"
        )),
    }
}

#[derive(Args)]
struct RunArgs {
    /// Hidden layer widths, comma separated (e.g. 64,64).
    #[arg(long, default_value = "64")]
    arch: String,
    /// Rng seed for this run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    episodes: usize,
    /// Slippery transition dynamics (1/3 slip to each perpendicular).
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    slippery: bool,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    entropy_coef: f64,
    #[arg(long, default_value_t = 1.0)]
    value_coef: f64,
    /// Entropy averaging: visited or all-states.
    #[arg(long, default_value = "visited", value_parser = parse_entropy_mode)]
    entropy_mode: EntropyAveraging,
    /// Output directory for manifest.json and metrics.csv.
    #[arg(long)]
    out: PathBuf,
    /// Optional parameter checkpoint written after a completed run.
    #[arg(long)]
    save_params: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration (TOML); bundled defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum concurrent runs.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Skip runs whose manifest already says complete.
    #[arg(long, action = ArgAction::SetTrue)]
    resume: bool,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Args)]
struct AggregateArgs {
    /// Sweep output root containing <arch-label>/seed-<k> run directories.
    #[arg(long)]
    runs: PathBuf,
    /// Per-run smoothing window applied before the cross-run interval.
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Combined aggregate CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhasesArgs {
    /// Aggregate CSV (one or more architectures).
    #[arg(long)]
    agg: PathBuf,
    /// Minimum direction change, in nats, for a phase boundary.
    #[arg(long, default_value_t = 0.1)]
    prominence: f64,
    /// Segments CSV to write (defaults next to the input).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSVs to draw, one curve per architecture.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// SVG file to write.
    #[arg(long, default_value = "entropy.svg")]
    out: PathBuf,
    /// Smoothing window to echo in the title.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random (params, input, upstream) draws per architecture.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 12)]
    seed: u64,
}

/// Parses and dispatches; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reserves 2 for usage errors and 0 for --help/--version.
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Phases(args) => cmd_phases(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let widths = parse_widths(&args.arch)?;
    let map = GridMap::default_4x4();
    let arch = Architecture::new(map.n_states(), widths, Action::COUNT)?;
    let env = EnvConfig {
        slippery: args.slippery,
        max_steps: args.max_steps,
        map,
    };
    let agent = AgentConfig {
        gamma: args.gamma,
        value_coef: args.value_coef,
        entropy_coef: args.entropy_coef,
        learning_rate: args.lr,
        episodes: args.episodes,
        entropy_averaging: args.entropy_mode,
    };
    env.validate()?;
    agent.validate()?;
    let run = ResolvedRun {
        arch_label: arch.label(),
        arch,
        arch_index: 0,
        seed_index: 0,
        derived_seed: args.seed,
        master_seed: args.seed,
        env,
        agent,
        smoothing_window: 50,
    };
    let artifacts = run_into_dir(&run, &args.out)?;

    let rows = &artifacts.series.rows;
    let tail = rows.len().min(100);
    let window = &rows[rows.len() - tail..];
    let mean_entropy = window.iter().map(|r| r.entropy).sum::<f64>() / tail.max(1) as f64;
    let success_rate = window.iter().filter(|r| r.success).count() as f64 / tail.max(1) as f64;
    println!(
        "run {} seed {}: {} episodes | entropy(last {tail}) {mean_entropy:.4} | success(last {tail}) {success_rate:.3}",
        run.arch_label,
        args.seed,
        rows.len()
    );
    if artifacts.manifest.status == RunStatus::Aborted {
        eprintln!(
            "run aborted: {}",
            artifacts.manifest.abort_reason.as_deref().unwrap_or("?")
        );
        return Ok(1);
    }
    if let Some(path) = args.save_params {
        save_params(&path, &artifacts.params)?;
        println!("parameters written to {}", path.display());
    }
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            SweepConfig::from_toml(&text, &path.display().to_string())?
        }
        None => SweepConfig::default(),
    };
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if args.jobs == 0 {
        return Err(Error::usage("--jobs must be >= 1"));
    }
    let summary = run_sweep(&config, args.jobs, args.resume)?;
    println!(
        "sweep: {} completed ({} skipped), {} aborted",
        summary.completed.len(),
        summary.skipped.len(),
        summary.aborted.len()
    );
    for (id, reason) in &summary.aborted {
        println!("  aborted {id}: {reason}");
    }
    for (label, path) in &summary.aggregates {
        println!("  aggregate {label}: {}", path.display());
    }
    for warning in &summary.aggregate_warnings {
        println!("  warning: {warning}");
    }
    Ok(if summary.all_complete() { 0 } else { 1 })
}

fn cmd_aggregate(args: AggregateArgs) -> Result<i32> {
    if args.window == 0 {
        return Err(Error::usage("--window must be >= 1"));
    }
    let discovered = discover_completed_runs(&args.runs)?;
    let mut series: Vec<AggregateSeries> = Vec::new();
    for arch in &discovered {
        if arch.entropy_runs.len() < 2 {
            eprintln!(
                "warning: {} has only {} completed runs, skipping",
                arch.label,
                arch.entropy_runs.len()
            );
            continue;
        }
        series.push(aggregate(
            &arch.label,
            &arch.entropy_runs,
            args.window,
            CI_LEVEL,
        )?);
    }
    if series.is_empty() {
        eprintln!("error: no architecture has two completed runs");
        return Ok(1);
    }
    write_atomic(&args.out, csvio::write_aggregates(&series).as_bytes())?;
    println!(
        "aggregated {} architectures into {}",
        series.len(),
        args.out.display()
    );
    Ok(0)
}

fn default_segments_path(agg: &std::path::Path) -> PathBuf {
    let stem = agg
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "segments".to_string());
    agg.with_file_name(format!("{stem}-segments.csv"))
}

fn cmd_phases(args: PhasesArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.agg)?;
    let series = csvio::parse_aggregates(&text, &args.agg.display().to_string())?;
    let mut reports = Vec::new();
    for agg in &series {
        let means: Vec<f64> = agg.points.iter().map(|p| p.mean).collect();
        let report = segment_phases(&means, args.prominence)?;
        println!(
            "{} ({} runs): {} segment{}, {} re-ascent{}",
            agg.label,
            agg.n_runs,
            report.segments.len(),
            if report.segments.len() == 1 { "" } else { "s" },
            report.re_ascents,
            if report.re_ascents == 1 { "" } else { "s" }
        );
        for s in &report.segments {
            println!(
                "  {:<7} episodes {:>6} .. {:<6} {:>8.4} -> {:.4}",
                s.kind.label(),
                s.start + 1,
                s.end + 1,
                s.start_value,
                s.end_value
            );
        }
        reports.push((agg.label.clone(), report));
    }
    let out = args.out.unwrap_or_else(|| default_segments_path(&args.agg));
    write_atomic(&out, csvio::write_segments(&reports).as_bytes())?;
    println!("segments written to {}", out.display());
    Ok(0)
}

fn cmd_plot(args: PlotArgs) -> Result<i32> {
    let spec = PlotSpec::new(args.inputs, args.out, args.window);
    let mut series: Vec<AggregateSeries> = Vec::new();
    for path in &spec.inputs {
        let text = std::fs::read_to_string(path)?;
        for agg in csvio::parse_aggregates(&text, &path.display().to_string())? {
            if series.iter().any(|s| s.label == agg.label) {
                return Err(Error::usage(format!(
                    "architecture {} appears in more than one input",
                    agg.label
                )));
            }
            series.push(agg);
        }
    }
    let svg = render_svg(&series, &spec.x_label, &spec.y_label, spec.smoothing_window)?;
    write_atomic(&spec.output, svg.as_bytes())?;
    println!(
        "plotted {} architectures into {}",
        series.len(),
        spec.output.display()
    );
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    let map = GridMap::default_4x4();
    let mut worst: Option<(String, crate::neural::GradcheckReport)> = None;
    for (index, widths) in default_architectures().into_iter().enumerate() {
        let arch = Architecture::new(map.n_states(), widths, Action::COUNT)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, index, 0));
        let report = gradcheck(&arch, args.trials, &mut rng)?;
        println!(
            "{:<12} {} trials, {} coordinates, max relative error {:.3e}",
            arch.label(),
            report.trials,
            report.coordinates_checked,
            report.max_rel_error
        );
        let is_worse = worst
            .as_ref()
            .map_or(true, |(_, w)| report.max_rel_error > w.max_rel_error);
        if is_worse {
            worst = Some((arch.label(), report));
        }
    }
    let (label, report) = worst.expect("at least one architecture");
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        println!(
            "gradcheck passed: worst {:.3e} < {GRADCHECK_TOLERANCE:.1e}",
            report.max_rel_error
        );
        Ok(0)
    } else {
        let w = report.worst.expect("worst location recorded");
        eprintln!(
            "gradcheck FAILED: {label} {}[{}] analytic {} vs numeric {} (rel {:.3e})",
            w.block, w.index, w.analytic, w.numeric, report.max_rel_error
        );
        Ok(1)
    }
}

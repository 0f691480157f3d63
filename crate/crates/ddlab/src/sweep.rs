//! Sweep orchestration: the full architectures-by-seeds experimental matrix
//! with deterministic seed derivation, a worker pool of independent jobs,
//! and crash-safe on-disk artifacts.
//!
//! Directory layout:
//!
//! ```text
//! <out>/<arch-label>/seed-<k>/manifest.json
//! <out>/<arch-label>/seed-<k>/metrics.csv
//! <out>/aggregate/<arch-label>.csv
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! manifest can only say `complete` once its metrics file is fully on disk.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{collect_episode, train_episode, AgentConfig, EntropyAveraging};
use crate::analysis::{aggregate, episode_entropy};
use crate::csvio;
use crate::error::{Error, Result};
use crate::gridworld::{Action, EnvConfig};
use crate::neural::{init_params, AdamConfig, Architecture, OptimizerState};

/// Confidence level used for all aggregate bands.
pub const CI_LEVEL: f64 = 0.95;

/// The five hidden-layer configurations swept by default, ordered by
/// parameter count.
pub fn default_architectures() -> Vec<Vec<usize>> {
    vec![
        vec![64],
        vec![64, 64],
        vec![64, 64, 64],
        vec![128, 128],
        vec![128, 128, 128],
    ]
}

fn default_seeds_per_arch() -> usize {
    15
}

fn default_master_seed() -> u64 {
    2024
}

fn default_smoothing_window() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Full description of one sweep: the experimental grid plus everything a
/// run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Vec<usize>>,
    #[serde(default = "default_seeds_per_arch")]
    pub seeds_per_arch: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "default_smoothing_window")]
    pub smoothing_window: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            architectures: default_architectures(),
            seeds_per_arch: default_seeds_per_arch(),
            master_seed: default_master_seed(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            smoothing_window: default_smoothing_window(),
            output_dir: default_output_dir(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty() {
            return Err(Error::usage("sweep needs at least one architecture"));
        }
        if self.seeds_per_arch < 2 {
            return Err(Error::usage(
                "seeds_per_arch must be >= 2 (confidence intervals need it)",
            ));
        }
        if self.smoothing_window == 0 {
            return Err(Error::usage("smoothing_window must be >= 1"));
        }
        self.env.validate()?;
        self.agent.validate()?;
        for widths in &self.architectures {
            Architecture::new(self.env.map.n_states(), widths.clone(), Action::COUNT)?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str, path: &str) -> Result<SweepConfig> {
        let config: SweepConfig =
            toml::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("sweep config serializes")
    }
}

/// Derives the rng seed of one (architecture, seed) cell from the master
/// seed with a splitmix64-style avalanche over `master XOR (arch_index <<
/// 32 | seed_index)`. The finalizer is a bijection, so distinct grid cells
/// get distinct seeds for any master.
pub fn derive_seed(master: u64, arch_index: usize, seed_index: usize) -> u64 {
    let packed = ((arch_index as u64) << 32) | (seed_index as u64 & 0xFFFF_FFFF);
    let mut z = master ^ packed;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Completion state recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

/// The fully resolved configuration of one run, written before training
/// starts and finalized afterwards. Serialization round-trips losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub arch: Vec<usize>,
    pub arch_label: String,
    pub arch_index: usize,
    pub seed_index: usize,
    pub derived_seed: u64,
    pub master_seed: u64,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub smoothing_window: usize,
    pub code_version: String,
    pub status: RunStatus,
    pub episodes_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

/// One per-episode telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// 1-based episode index.
    pub episode: usize,
    /// Mean policy entropy of the episode, nats.
    pub entropy: f64,
    /// Undiscounted episode return.
    pub ret: f64,
    /// True iff the episode ended on the goal.
    pub success: bool,
    pub steps: usize,
    pub value_loss: f64,
    pub policy_loss: f64,
    pub total_loss: f64,
}

/// Per-episode scalar stream of one (architecture, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

/// One cell of the sweep grid with everything resolved.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub arch: Architecture,
    pub arch_label: String,
    pub arch_index: usize,
    pub seed_index: usize,
    pub derived_seed: u64,
    pub master_seed: u64,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub smoothing_window: usize,
}

impl ResolvedRun {
    pub fn id(&self) -> String {
        format!("{}/seed-{:02}", self.arch_label, self.seed_index)
    }

    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(&self.arch_label)
            .join(format!("seed-{:02}", self.seed_index))
    }

    fn manifest(&self, status: RunStatus, episodes_completed: usize) -> RunManifest {
        RunManifest {
            arch: self.arch.hidden_widths.clone(),
            arch_label: self.arch_label.clone(),
            arch_index: self.arch_index,
            seed_index: self.seed_index,
            derived_seed: self.derived_seed,
            master_seed: self.master_seed,
            env: self.env.clone(),
            agent: self.agent.clone(),
            smoothing_window: self.smoothing_window,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            status,
            episodes_completed,
            abort_reason: None,
        }
    }
}

/// Expands a sweep config into its grid of runs. Architectures are
/// canonically ordered by parameter count (ties broken by the width list),
/// so permuting the configured list never changes any run's seed or output.
pub fn resolved_runs(config: &SweepConfig) -> Result<Vec<ResolvedRun>> {
    config.validate()?;
    let input_dim = config.env.map.n_states();
    let mut archs: Vec<Architecture> = config
        .architectures
        .iter()
        .map(|w| Architecture::new(input_dim, w.clone(), Action::COUNT))
        .collect::<Result<_>>()?;
    archs.sort_by(|a, b| {
        a.param_count()
            .cmp(&b.param_count())
            .then_with(|| a.hidden_widths.cmp(&b.hidden_widths))
    });
    for pair in archs.windows(2) {
        if pair[0].hidden_widths == pair[1].hidden_widths {
            return Err(Error::usage(format!(
                "duplicate architecture {:?}",
                pair[0].hidden_widths
            )));
        }
    }
    let mut runs = Vec::with_capacity(archs.len() * config.seeds_per_arch);
    for (arch_index, arch) in archs.iter().enumerate() {
        for seed_index in 0..config.seeds_per_arch {
            runs.push(ResolvedRun {
                arch: arch.clone(),
                arch_label: arch.label(),
                arch_index,
                seed_index,
                derived_seed: derive_seed(config.master_seed, arch_index, seed_index),
                master_seed: config.master_seed,
                env: config.env.clone(),
                agent: config.agent.clone(),
                smoothing_window: config.smoothing_window,
            });
        }
    }
    Ok(runs)
}

/// In-memory result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub series: MetricSeries,
    /// `Some` when a numeric failure stopped the run early; the rows
    /// produced so far are kept.
    pub abort_reason: Option<String>,
    /// Final network parameters.
    pub params: crate::neural::NetworkParams,
}

/// Trains one run in memory.
pub fn train_run(run: &ResolvedRun) -> TrainOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(run.derived_seed);
    let mut params = init_params(&run.arch, &mut rng);
    let mut opt = OptimizerState::new(
        &run.arch,
        AdamConfig {
            learning_rate: run.agent.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut rows = Vec::with_capacity(run.agent.episodes);
    let abort = |rows: Vec<MetricRow>, reason: String, params| TrainOutput {
        series: MetricSeries { rows },
        abort_reason: Some(reason),
        params,
    };
    for episode in 1..=run.agent.episodes {
        let record = match collect_episode(&params, &run.env, &mut rng) {
            Ok(r) => r,
            Err(e) => return abort(rows, e.to_string(), params),
        };
        let entropy = match run.agent.entropy_averaging {
            EntropyAveraging::Visited => episode_entropy(&record),
            EntropyAveraging::AllStates => crate::agent::all_states_entropy(&params, &run.env),
        };
        let entropy = match entropy {
            Ok(h) => h,
            Err(e) => return abort(rows, e.to_string(), params),
        };
        let losses = match train_episode(&mut params, &mut opt, &record, &run.agent) {
            Ok(l) => l,
            Err(e) => return abort(rows, e.to_string(), params),
        };
        rows.push(MetricRow {
            episode,
            entropy,
            ret: record.total_reward(),
            success: record.success(),
            steps: record.len(),
            value_loss: losses.value_loss,
            policy_loss: losses.policy_loss,
            total_loss: losses.total,
        });
    }
    TrainOutput {
        series: MetricSeries { rows },
        abort_reason: None,
        params,
    }
}

/// Writes `bytes` to `path` via a temporary sibling plus rename, so readers
/// only ever observe complete files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::usage(format!("manifest serialization: {e}")))?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Everything one persisted run leaves behind, plus the in-memory extras.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: RunManifest,
    pub series: MetricSeries,
    pub params: crate::neural::NetworkParams,
}

/// Executes one run and persists its artifacts into `dir`: manifest first
/// (running), then metrics, then the finalized manifest.
pub fn run_into_dir(run: &ResolvedRun, dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(dir)?;
    let manifest_path = dir.join("manifest.json");
    write_manifest(&manifest_path, &run.manifest(RunStatus::Running, 0))?;

    let output = train_run(run);
    write_atomic(
        &dir.join("metrics.csv"),
        csvio::write_metrics(&output.series).as_bytes(),
    )?;
    let mut manifest = run.manifest(
        if output.abort_reason.is_none() {
            RunStatus::Complete
        } else {
            RunStatus::Aborted
        },
        output.series.rows.len(),
    );
    manifest.abort_reason = output.abort_reason;
    write_manifest(&manifest_path, &manifest)?;
    Ok(RunArtifacts {
        manifest,
        series: output.series,
        params: output.params,
    })
}

/// Executes one run into its standard `<out>/<label>/seed-<k>` directory.
pub fn run_one(run: &ResolvedRun, out: &Path) -> Result<RunManifest> {
    run_into_dir(run, &run.dir(out)).map(|a| a.manifest)
}

/// What a sweep did, per run and in aggregate.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub aborted: Vec<(String, String)>,
    /// (arch label, aggregate CSV path); architectures with fewer than two
    /// completed runs are skipped with a note instead.
    pub aggregates: Vec<(String, PathBuf)>,
    pub aggregate_warnings: Vec<String>,
}

impl SweepSummary {
    pub fn all_complete(&self) -> bool {
        self.aborted.is_empty()
    }
}

/// Runs the whole grid across at most `parallelism` workers, then aggregates
/// per architecture. Jobs share no state, so the artifacts are a pure
/// function of the config regardless of scheduling. With `resume`, runs
/// whose manifest already says `complete` are skipped.
pub fn run_sweep(config: &SweepConfig, parallelism: usize, resume: bool) -> Result<SweepSummary> {
    if parallelism == 0 {
        return Err(Error::usage("parallelism must be >= 1"));
    }
    let runs = resolved_runs(config)?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out)?;

    let mut pending = Vec::new();
    let mut skipped = Vec::new();
    for run in runs {
        let manifest_path = run.dir(&out).join("manifest.json");
        if resume && manifest_path.exists() {
            if let Ok(manifest) = read_manifest(&manifest_path) {
                if manifest.status == RunStatus::Complete {
                    skipped.push(run.id());
                    continue;
                }
            }
        }
        pending.push(run);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::usage(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunManifest>> =
        pool.install(|| pending.par_iter().map(|run| run_one(run, &out)).collect());

    let mut completed = skipped.clone();
    let mut aborted = Vec::new();
    for (run, result) in pending.iter().zip(results) {
        let manifest = result?;
        match manifest.status {
            RunStatus::Complete => completed.push(run.id()),
            _ => aborted.push((
                run.id(),
                manifest
                    .abort_reason
                    .unwrap_or_else(|| "unknown".to_string()),
            )),
        }
    }
    completed.sort();

    let (aggregates, aggregate_warnings) = aggregate_sweep(config)?;
    Ok(SweepSummary {
        completed,
        skipped,
        aborted,
        aggregates,
        aggregate_warnings,
    })
}

/// Aggregates completed runs per architecture into
/// `<out>/aggregate/<label>.csv`. Architectures with fewer than two
/// completed runs are reported in the warning list.
pub fn aggregate_sweep(config: &SweepConfig) -> Result<(Vec<(String, PathBuf)>, Vec<String>)> {
    let runs = resolved_runs(config)?;
    let out = &config.output_dir;
    let agg_dir = out.join("aggregate");
    fs::create_dir_all(&agg_dir)?;
    let mut labels: Vec<String> = Vec::new();
    for run in &runs {
        if !labels.contains(&run.arch_label) {
            labels.push(run.arch_label.clone());
        }
    }
    let mut written = Vec::new();
    let mut warnings = Vec::new();
    for label in labels {
        let series = collect_completed_entropy(config, &label)?;
        if series.len() < 2 {
            warnings.push(format!(
                "{label}: only {} completed runs, skipping aggregate",
                series.len()
            ));
            continue;
        }
        let agg = aggregate(&label, &series, config.smoothing_window, CI_LEVEL)?;
        let path = agg_dir.join(format!("{label}.csv"));
        write_atomic(&path, csvio::write_aggregates(&[agg]).as_bytes())?;
        written.push((label, path));
    }
    Ok((written, warnings))
}

/// Entropy series of every completed run of one architecture, in seed order.
pub fn collect_completed_entropy(config: &SweepConfig, label: &str) -> Result<Vec<Vec<f64>>> {
    let out = &config.output_dir;
    let mut series = Vec::new();
    for seed_index in 0..config.seeds_per_arch {
        let dir = out.join(label).join(format!("seed-{seed_index:02}"));
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            continue;
        }
        let manifest = read_manifest(&manifest_path)?;
        if manifest.status != RunStatus::Complete {
            continue;
        }
        let metrics_path = dir.join("metrics.csv");
        let text = fs::read_to_string(&metrics_path)?;
        let metrics = csvio::parse_metrics(&text, &metrics_path.display().to_string())?;
        series.push(metrics.rows.iter().map(|r| r.entropy).collect());
    }
    Ok(series)
}

/// Reads one run's metrics back from disk.
pub fn read_metrics(dir: &Path) -> Result<MetricSeries> {
    let path = dir.join("metrics.csv");
    let text = fs::read_to_string(&path)?;
    csvio::parse_metrics(&text, &path.display().to_string())
}

/// One architecture found under a sweep output root.
#[derive(Debug, Clone)]
pub struct DiscoveredArch {
    pub label: String,
    pub widths: Vec<usize>,
    pub param_count: usize,
    /// Entropy series of the completed runs, in seed-directory order.
    pub entropy_runs: Vec<Vec<f64>>,
}

/// Scans a sweep output root for completed runs, grouped by architecture and
/// ordered canonically (parameter count, then width list).
pub fn discover_completed_runs(root: &Path) -> Result<Vec<DiscoveredArch>> {
    if !root.is_dir() {
        return Err(Error::usage(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let mut archs: Vec<DiscoveredArch> = Vec::new();
    let mut label_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "aggregate"))
        .collect();
    label_dirs.sort();
    for label_dir in label_dirs {
        let mut seed_dirs: Vec<PathBuf> = fs::read_dir(&label_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        seed_dirs.sort();
        let mut entry: Option<DiscoveredArch> = None;
        for seed_dir in seed_dirs {
            let manifest_path = seed_dir.join("manifest.json");
            if !manifest_path.exists() {
                continue;
            }
            let manifest = read_manifest(&manifest_path)?;
            if manifest.status != RunStatus::Complete {
                continue;
            }
            let metrics = read_metrics(&seed_dir)?;
            let entropy: Vec<f64> = metrics.rows.iter().map(|r| r.entropy).collect();
            match &mut entry {
                Some(e) => e.entropy_runs.push(entropy),
                None => {
                    let arch = Architecture::new(
                        manifest.env.map.n_states(),
                        manifest.arch.clone(),
                        Action::COUNT,
                    )?;
                    entry = Some(DiscoveredArch {
                        label: manifest.arch_label.clone(),
                        widths: manifest.arch.clone(),
                        param_count: arch.param_count(),
                        entropy_runs: vec![entropy],
                    });
                }
            }
        }
        if let Some(e) = entry {
            archs.push(e);
        }
    }
    archs.sort_by(|a, b| {
        a.param_count
            .cmp(&b.param_count)
            .then_with(|| a.widths.cmp(&b.widths))
    });
    Ok(archs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tiny_config(dir: &Path) -> SweepConfig {
        SweepConfig {
            architectures: vec![vec![8], vec![4, 4]],
            seeds_per_arch: 2,
            master_seed: 7,
            env: EnvConfig {
                slippery: false,
                ..EnvConfig::default()
            },
            agent: AgentConfig {
                episodes: 5,
                ..AgentConfig::default()
            },
            smoothing_window: 1,
            output_dir: dir.to_path_buf(),
        }
    }

    fn read_all_metric_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.file_name().unwrap() == "metrics.csv" {
                    out.push((
                        path.strip_prefix(root).unwrap().display().to_string(),
                        fs::read(&path).unwrap(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn derive_seed_is_deterministic_and_collision_free() {
        assert_eq!(derive_seed(42, 1, 3), derive_seed(42, 1, 3));
        let mut master = 0x1234_5678_9ABC_DEF0u64;
        for _ in 0..10_000 {
            master = master
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            assert_ne!(derive_seed(master, 0, 0), derive_seed(master, 0, 1));
            let mut seen = HashSet::new();
            for a in 0..5 {
                for s in 0..15 {
                    assert!(
                        seen.insert(derive_seed(master, a, s)),
                        "collision at {a},{s}"
                    );
                }
            }
        }
    }

    #[test]
    fn resolved_runs_are_canonically_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.architectures = vec![vec![128, 128], vec![64]];
        let runs = resolved_runs(&config).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].arch_label, "64");
        assert_eq!(runs[0].arch_index, 0);
        assert_eq!(runs[2].arch_label, "128-128");
        assert_eq!(runs[2].arch_index, 1);
    }

    #[test]
    fn duplicate_architectures_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.architectures = vec![vec![8], vec![8]];
        assert!(resolved_runs(&config).is_err());
    }

    #[test]
    fn run_one_produces_expected_rows_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let runs = resolved_runs(&config).unwrap();
        let manifest = run_one(&runs[0], dir.path()).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(manifest.episodes_completed, 5);
        let run_dir = runs[0].dir(dir.path());
        let metrics = read_metrics(&run_dir).unwrap();
        assert_eq!(metrics.rows.len(), 5);
        let first = fs::read(run_dir.join("metrics.csv")).unwrap();

        run_one(&runs[0], dir.path()).unwrap();
        let second = fs::read(run_dir.join("metrics.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let runs = resolved_runs(&config).unwrap();
        let manifest = run_one(&runs[1], dir.path()).unwrap();
        let read = read_manifest(&runs[1].dir(dir.path()).join("manifest.json")).unwrap();
        assert_eq!(manifest, read);
    }

    #[test]
    fn absurd_learning_rate_aborts_with_partial_series() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        // Every episode ends on the goal, so the first update sees a nonzero
        // TD error and the huge step blows the parameters up.
        config.env.map = crate::gridworld::GridMap::parse(&["SG"]).unwrap();
        config.agent.learning_rate = 1e300;
        let runs = resolved_runs(&config).unwrap();
        let manifest = run_one(&runs[0], dir.path()).unwrap();
        assert_eq!(manifest.status, RunStatus::Aborted);
        assert!(manifest.abort_reason.is_some());
        let metrics = read_metrics(&runs[0].dir(dir.path())).unwrap();
        assert!(metrics.rows.len() < config.agent.episodes);
        assert!(!metrics.rows.is_empty());
    }

    #[test]
    fn sweep_output_is_independent_of_parallelism() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let summary1 = run_sweep(&tiny_config(dir1.path()), 1, false).unwrap();
        let summary2 = run_sweep(&tiny_config(dir2.path()), 2, false).unwrap();
        assert!(summary1.all_complete());
        assert!(summary2.all_complete());
        let a = read_all_metric_bytes(dir1.path());
        let b = read_all_metric_bytes(dir2.path());
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn sweep_output_is_independent_of_architecture_order() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let config1 = tiny_config(dir1.path());
        let mut config2 = tiny_config(dir2.path());
        config2.architectures.reverse();
        run_sweep(&config1, 2, false).unwrap();
        run_sweep(&config2, 2, false).unwrap();
        assert_eq!(
            read_all_metric_bytes(dir1.path()),
            read_all_metric_bytes(dir2.path())
        );
    }

    #[test]
    fn resume_skips_completed_runs() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let first = run_sweep(&config, 2, false).unwrap();
        assert_eq!(first.completed.len(), 4);
        assert!(first.skipped.is_empty());

        let resumed = run_sweep(&config, 2, true).unwrap();
        assert_eq!(resumed.skipped.len(), 4);
        assert_eq!(resumed.completed.len(), 4);

        // Invalidate one run; only that one should re-execute.
        let runs = resolved_runs(&config).unwrap();
        fs::remove_file(runs[0].dir(dir.path()).join("manifest.json")).unwrap();
        let partial = run_sweep(&config, 2, true).unwrap();
        assert_eq!(partial.skipped.len(), 3);
        assert_eq!(partial.completed.len(), 4);
    }

    #[test]
    fn sweep_writes_aggregates_per_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let summary = run_sweep(&config, 2, false).unwrap();
        assert_eq!(summary.aggregates.len(), 2);
        for (label, path) in &summary.aggregates {
            let text = fs::read_to_string(path).unwrap();
            let parsed = csvio::parse_aggregates(&text, "agg").unwrap();
            assert_eq!(parsed.len(), 1);
            assert_eq!(&parsed[0].label, label);
            assert_eq!(parsed[0].points.len(), 5);
            assert_eq!(parsed[0].n_runs, 2);
        }
    }

    #[test]
    fn write_atomic_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"hello");
        write_atomic(&path, b"world").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"world");
        let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn config_toml_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let text = config.to_toml();
        let parsed = SweepConfig::from_toml(&text, "test").unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn bundled_config_file_matches_builtin_defaults() {
        let text = include_str!("../../../configs/sweep-default.toml");
        let parsed = SweepConfig::from_toml(text, "configs/sweep-default.toml").unwrap();
        assert_eq!(parsed, SweepConfig::default());
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let config = SweepConfig::from_toml("", "test").unwrap();
        assert_eq!(config.architectures.len(), 5);
        assert_eq!(config.seeds_per_arch, 15);
        assert_eq!(config.agent.episodes, 5000);
        assert!(config.env.slippery);

        let config = SweepConfig::from_toml("seeds_per_arch = 3\n", "test").unwrap();
        assert_eq!(config.seeds_per_arch, 3);
        assert!(SweepConfig::from_toml("seeds_per_arch = 1\n", "test").is_err());
        assert!(SweepConfig::from_toml("nonsense = true\n", "test").is_err());
    }
}

//! End-to-end tests of the command-line surface, run in-process.

use std::fs;
use std::path::Path;

use ddlab::agent::AgentConfig;
use ddlab::analysis::{AggregatePoint, AggregateSeries};
use ddlab::cli::main_with_args;
use ddlab::csvio;
use ddlab::gridworld::EnvConfig;
use ddlab::neural::load_params;
use ddlab::sweep::{MetricRow, MetricSeries, RunManifest, RunStatus};

fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["ddlab".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    main_with_args(argv)
}

#[test]
fn run_writes_manifest_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let code = run_cli(&[
        "run",
        "--arch",
        "64",
        "--seed",
        "1",
        "--episodes",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let manifest = ddlab::sweep::read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);
    assert_eq!(manifest.arch, vec![64]);
    let metrics = ddlab::sweep::read_metrics(&out).unwrap();
    assert_eq!(metrics.rows.len(), 10);
}

#[test]
fn run_rejects_zero_width_and_bad_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let base = ["run", "--episodes", "5", "--out", out.to_str().unwrap()];
    let mut zero = base.to_vec();
    zero.extend(["--arch", "0"]);
    assert_eq!(run_cli(&zero), 2);
    let mut gamma = base.to_vec();
    gamma.extend(["--gamma", "1.5"]);
    assert_eq!(run_cli(&gamma), 2);
    let mut episodes = ["run", "--episodes", "0", "--out", out.to_str().unwrap()].to_vec();
    assert_eq!(run_cli(&mut episodes), 2);
}

#[test]
fn run_saves_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let ckpt = dir.path().join("net.ckpt");
    let code = run_cli(&[
        "run",
        "--arch",
        "8,8",
        "--seed",
        "3",
        "--episodes",
        "20",
        "--slippery",
        "false",
        "--out",
        out.to_str().unwrap(),
        "--save-params",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let params = load_params(&ckpt).unwrap();
    assert_eq!(params.architecture().hidden_widths, vec![8, 8]);
    assert_eq!(params.architecture().input_dim, 16);
}

fn small_sweep_toml(out: &Path) -> String {
    format!(
        r#"
architectures = [[8], [4, 4]]
seeds_per_arch = 2
master_seed = 11
smoothing_window = 1
output_dir = "{}"

[env]
slippery = false
max_steps = 50
map = ["SFFF", "FHFH", "FFFH", "HFFG"]

[agent]
gamma = 0.95
value_coef = 1.0
entropy_coef = 0.01
learning_rate = 0.003
episodes = 6
entropy_averaging = "visited"
"#,
        out.display()
    )
}

#[test]
fn sweep_runs_aggregates_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let config_path = dir.path().join("sweep.toml");
    fs::write(&config_path, small_sweep_toml(&out)).unwrap();

    let code = run_cli(&[
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(code, 0);
    assert!(out.join("8").join("seed-00").join("metrics.csv").exists());
    assert!(out
        .join("4-4")
        .join("seed-01")
        .join("manifest.json")
        .exists());
    assert!(out.join("aggregate").join("8.csv").exists());
    assert!(out.join("aggregate").join("4-4.csv").exists());

    // Resume over a completed sweep is a no-op with exit 0.
    let code = run_cli(&[
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--jobs",
        "2",
        "--resume",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn sweep_artifacts_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    for (out, jobs) in [(&out1, "1"), (&out2, "2")] {
        let config_path = dir.path().join(format!("sweep-{jobs}.toml"));
        fs::write(&config_path, small_sweep_toml(out)).unwrap();
        assert_eq!(
            run_cli(&[
                "sweep",
                "--config",
                config_path.to_str().unwrap(),
                "--jobs",
                jobs
            ]),
            0
        );
    }
    for rel in ["8/seed-00", "8/seed-01", "4-4/seed-00", "4-4/seed-01"] {
        let a = fs::read(out1.join(rel).join("metrics.csv")).unwrap();
        let b = fs::read(out2.join(rel).join("metrics.csv")).unwrap();
        assert_eq!(a, b, "{rel} differs between --jobs 1 and --jobs 2");
    }
}

/// Builds a synthetic sweep directory: 15 completed runs whose entropy is
/// the constant k for seed k-1, so the cross-run interval matches the
/// 1..15 fixture.
fn synthetic_runs(root: &Path, episodes: usize) {
    for k in 1..=15usize {
        let run_dir = root.join("64").join(format!("seed-{:02}", k - 1));
        fs::create_dir_all(&run_dir).unwrap();
        let rows: Vec<MetricRow> = (1..=episodes)
            .map(|episode| MetricRow {
                episode,
                entropy: k as f64,
                ret: 0.0,
                success: false,
                steps: 3,
                value_loss: 0.0,
                policy_loss: 0.0,
                total_loss: 0.0,
            })
            .collect();
        fs::write(
            run_dir.join("metrics.csv"),
            csvio::write_metrics(&MetricSeries { rows }),
        )
        .unwrap();
        let manifest = RunManifest {
            arch: vec![64],
            arch_label: "64".to_string(),
            arch_index: 0,
            seed_index: k - 1,
            derived_seed: k as u64,
            master_seed: 0,
            env: EnvConfig::default(),
            agent: AgentConfig {
                episodes,
                ..AgentConfig::default()
            },
            smoothing_window: 1,
            code_version: "test".to_string(),
            status: RunStatus::Complete,
            episodes_completed: episodes,
            abort_reason: None,
        };
        fs::write(
            run_dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).unwrap(),
        )
        .unwrap();
    }
}

#[test]
fn aggregate_command_reproduces_interval_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("runs");
    synthetic_runs(&root, 4);
    let out = dir.path().join("agg.csv");
    let code = run_cli(&[
        "aggregate",
        "--runs",
        root.to_str().unwrap(),
        "--window",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let parsed = csvio::parse_aggregates(&fs::read_to_string(&out).unwrap(), "agg").unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(parsed[0].n_runs, 15);
    assert_eq!(parsed[0].points.len(), 4);
    for p in &parsed[0].points {
        assert_eq!(p.mean, 8.0);
        assert!((p.ci_low - 5.5234).abs() < 1e-3);
        assert!((p.ci_high - 10.4766).abs() < 1e-3);
    }
}

#[test]
fn aggregate_command_fails_without_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("agg.csv");
    let code = run_cli(&[
        "aggregate",
        "--runs",
        dir.path().to_str().unwrap(),
        "--window",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

fn write_aggregate_file(path: &Path, label: &str, values: &[f64]) {
    let series = AggregateSeries {
        label: label.to_string(),
        points: values
            .iter()
            .map(|&v| AggregatePoint {
                mean: v,
                ci_low: v - 0.05,
                ci_high: v + 0.05,
            })
            .collect(),
        n_runs: 15,
    };
    fs::write(path, csvio::write_aggregates(&[series])).unwrap();
}

#[test]
fn phases_command_reports_monotone_and_reversal_fixtures() {
    let dir = tempfile::tempdir().unwrap();

    let mono = dir.path().join("mono.csv");
    write_aggregate_file(&mono, "64", &[2.0, 1.8, 1.5, 1.1, 0.6, 0.1]);
    let seg = dir.path().join("mono-seg.csv");
    let code = run_cli(&[
        "phases",
        "--agg",
        mono.to_str().unwrap(),
        "--prominence",
        "0.2",
        "--out",
        seg.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&seg).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("64,descent,1,6,"));

    let vee = dir.path().join("vee.csv");
    write_aggregate_file(&vee, "64", &[2.0, 1.5, 1.0, 0.5, 0.8, 1.1, 0.6, 0.2]);
    let seg = dir.path().join("vee-seg.csv");
    assert_eq!(
        run_cli(&[
            "phases",
            "--agg",
            vee.to_str().unwrap(),
            "--prominence",
            "0.2",
            "--out",
            seg.to_str().unwrap(),
        ]),
        0
    );
    let text = fs::read_to_string(&seg).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("64,descent,1,4,"));
    assert!(lines[2].starts_with("64,ascent,4,6,"));
    assert!(lines[3].starts_with("64,descent,6,8,"));

    // Prominence above the total range collapses to one segment.
    let seg = dir.path().join("flat-seg.csv");
    assert_eq!(
        run_cli(&[
            "phases",
            "--agg",
            vee.to_str().unwrap(),
            "--prominence",
            "10",
            "--out",
            seg.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(fs::read_to_string(&seg).unwrap().lines().count(), 2);
}

#[test]
fn phases_command_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "not,a,real,header\n1,2,3,4\n").unwrap();
    assert_eq!(run_cli(&["phases", "--agg", bad.to_str().unwrap()]), 1);
}

#[test]
fn plot_command_renders_deterministic_svg() {
    let dir = tempfile::tempdir().unwrap();
    let labels = ["64", "64-64", "64-64-64", "128-128", "128-128-128"];
    let mut inputs = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let path = dir.path().join(format!("{label}.csv"));
        let values: Vec<f64> = (0..40)
            .map(|e| 1.3 - 0.02 * e as f64 + 0.01 * i as f64)
            .collect();
        write_aggregate_file(&path, label, &values);
        inputs.push(path);
    }

    let single = dir.path().join("one.svg");
    assert_eq!(
        run_cli(&[
            "plot",
            inputs[0].to_str().unwrap(),
            "--out",
            single.to_str().unwrap()
        ]),
        0
    );
    let svg = fs::read_to_string(&single).unwrap();
    assert_eq!(svg.matches("<path").count(), 2);

    let all = dir.path().join("all.svg");
    let mut args = vec!["plot"];
    let arg_paths: Vec<&str> = inputs.iter().map(|p| p.to_str().unwrap()).collect();
    args.extend(&arg_paths);
    args.extend(["--out", all.to_str().unwrap(), "--window", "50"]);
    assert_eq!(run_cli(&args), 0);
    let svg1 = fs::read(&all).unwrap();
    assert_eq!(
        String::from_utf8(svg1.clone())
            .unwrap()
            .matches("class=\"legend\"")
            .count(),
        5
    );

    // Byte-identical on rerun.
    assert_eq!(run_cli(&args), 0);
    assert_eq!(svg1, fs::read(&all).unwrap());
}

#[test]
fn plot_command_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{}\n", csvio::AGGREGATE_HEADER)).unwrap();
    let out = dir.path().join("x.svg");
    assert_eq!(
        run_cli(&[
            "plot",
            empty.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn gradcheck_command_exit_codes() {
    assert_eq!(run_cli(&["gradcheck", "--trials", "2"]), 0);
    assert_eq!(run_cli(&["gradcheck", "--trials", "0"]), 2);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(run_cli(&["run", "--no-such-flag"]), 2);
    assert_eq!(run_cli(&["frobnicate"]), 2);
}

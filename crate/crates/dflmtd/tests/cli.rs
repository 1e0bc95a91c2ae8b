use std::path::Path;
use std::process::{Command, Output};

use dflmtd::config_file::to_json;
use dflmtd::report::{read_rounds_csv, read_summary_json};
use dflmtd::{parse_config_str, ConfigError};
use dflmtd_core::config::{DatasetConfig, DatasetKind, ExperimentConfig};
use dflmtd_core::federation::{AttackKind, TopologyKind};
use dflmtd_core::mtd::MtdMode;

const SMALL: &str = r#"{
  "dataset": {"kind": "synthetic", "samples_per_node": 50, "test_samples": 100, "n_features": 64},
  "n_nodes": 4,
  "rounds": 2,
  "model": {"hidden": [16]},
  "attack": {"kind": "label_flipping", "pnr": 0.25}
}"#;

fn dflmtd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dflmtd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let loaded = parse_config_str(r#"{"dataset": "synthetic"}"#).unwrap();
    let cfg = loaded.config;
    assert_eq!(cfg, ExperimentConfig::new(DatasetConfig::default()));
    assert_eq!(cfg.n_nodes, 10);
    assert_eq!(cfg.rounds, 10);
    assert_eq!(cfg.partition.alpha, 0.5);
    assert_eq!(cfg.topology, TopologyKind::Fully);
    assert_eq!(cfg.mtd.mode, MtdMode::Off);
    assert_eq!(cfg.mtd.neighbor_floor, 2);
    assert_eq!(cfg.reputation.eps, 0.1);
    assert_eq!(cfg.attack.kind, AttackKind::None);
    assert_eq!(cfg.attack.noise_fraction, 0.5);
    assert_eq!(cfg.dataset.samples_per_node, 600);
    assert_eq!(cfg.model.hidden, vec![256, 128]);

    let mnist = parse_config_str(r#"{"dataset": {"kind": "mnist", "dir": "/data"}}"#).unwrap();
    assert_eq!(mnist.config.dataset.kind, DatasetKind::Mnist);
    assert_eq!(mnist.config.dataset.dir.as_deref(), Some("/data"));
}

#[test]
fn config_round_trips_through_json() {
    let mut cfg = parse_config_str(SMALL).unwrap().config;
    cfg.mtd.mode = MtdMode::Reactive;
    cfg.topology = TopologyKind::Ring;
    let again = parse_config_str(&to_json(&cfg)).unwrap();
    assert_eq!(again.config, cfg);
}

#[test]
fn errors_name_the_offending_key() {
    let cases = [
        (r#"{"dataset": "synthetic", "attack": {"pnr": 1.5}}"#, "attack.pnr"),
        (r#"{"dataset": "synthetic", "mtd": {"bogus": 1}}"#, "mtd.bogus"),
        (r#"{"dataset": "synthetic", "roundz": 3}"#, "roundz"),
        (r#"{"dataset": "synthetic", "rounds": "x"}"#, "rounds"),
        (r#"{"dataset": "cifar"}"#, "dataset"),
        (r#"{"dataset": "synthetic", "n_nodes": 1}"#, "n_nodes"),
        (
            r#"{"dataset": "synthetic", "partition": {"alpha": 0}}"#,
            "partition.alpha",
        ),
        (
            r#"{"dataset": "synthetic", "mtd": {"aggregator_pool": []}}"#,
            "mtd.aggregator_pool",
        ),
        (
            r#"{"dataset": "synthetic", "reputation": {"eps": -1}}"#,
            "reputation.eps",
        ),
    ];
    for (text, key) in cases {
        let err: ConfigError = parse_config_str(text).unwrap_err();
        assert_eq!(err.key(), Some(key), "{text}: {err}");
        assert!(err.to_string().contains(key), "{err}");
    }
    assert!(parse_config_str("{").is_err());
}

#[test]
fn pnr_error_mentions_the_range() {
    let err = parse_config_str(r#"{"dataset": "synthetic", "attack": {"pnr": 1.5}}"#).unwrap_err();
    assert!(err.to_string().contains("[0, 1)"), "{err}");
}

#[test]
fn run_writes_reports_and_echoes_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = dflmtd(&[
        "run",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));

    let records = read_rounds_csv(&out.join("rounds.csv")).unwrap();
    assert_eq!(records.len(), 8);
    let summary = read_summary_json(&out.join("summary.json")).unwrap();
    assert_eq!(summary.seed, 42);
    assert_eq!(summary.resolved_config.seed, 42);
    assert_eq!(summary.config.get(), SMALL);
    assert_eq!(summary.benign_f1_by_round.len(), 2);
    assert_eq!(summary.attackers.len(), 1);
    assert!(summary.wall_clock_seconds >= 0.0);
    let last: Vec<f64> = records
        .iter()
        .filter(|r| r.round == 2 && r.role.is_benign())
        .map(|r| r.f1)
        .collect();
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    assert!((summary.final_f1 - mean).abs() < 1e-6);
}

#[test]
fn identical_invocations_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &SMALL.replace(r#""rounds": 2"#, r#""rounds": 2, "mtd": {"mode": "proactive"}"#),
    );
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let res = dflmtd(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", stderr(&res));
        files.push(std::fs::read(out.join("rounds.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_writes_one_report_pair_per_cell_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let res = dflmtd(&[
        "sweep",
        "--config",
        &config,
        "--pnr",
        "0.1,0.3,0.5,0.7",
        "--strategies",
        "fedavg,reactive_topology",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));

    let mut cells = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            assert!(path.join("rounds.csv").is_file());
            assert!(path.join("summary.json").is_file());
            cells += 1;
        }
    }
    assert_eq!(cells, 8);

    let table = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "pnr,strategy,topology,seed,final_f1,final_asr,cell");
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("0.10,fedavg,fully,0,"));
    assert!(lines[8].starts_with("0.70,reactive_topology,fully,0,"));
}

#[test]
fn sweep_over_topologies() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &SMALL.replace(r#""rounds": 2"#, r#""rounds": 1"#));
    let out = dir.path().join("sweep");
    let res = dflmtd(&[
        "sweep",
        "--config",
        &config,
        "--pnr",
        "0.25",
        "--strategies",
        "median",
        "--topologies",
        "ring,star",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(out.join("pnr0.25_median_ring/rounds.csv").is_file());
    assert!(out.join("pnr0.25_median_star/rounds.csv").is_file());
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let res = dflmtd(&["run", "--config", "/nonexistent/config.json", "--out", out]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("/nonexistent/config.json"));

    let bad = write_config(dir.path(), r#"{"dataset": "synthetic", "attack": {"pnr": 1.5}}"#);
    let res = dflmtd(&["run", "--config", &bad, "--out", out]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("attack.pnr"));

    let mnist = write_config(
        dir.path(),
        r#"{"dataset": {"kind": "mnist", "dir": "/nonexistent/mnist"}}"#,
    );
    let res = dflmtd(&["run", "--config", &mnist, "--out", out]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("train-images-idx3-ubyte"));

    let res = dflmtd(&[
        "sweep",
        "--config",
        &mnist,
        "--pnr",
        "0.1",
        "--strategies",
        "nope",
        "--out",
        out,
    ]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("nope"));

    let clean = write_config(dir.path(), r#"{"dataset": "synthetic"}"#);
    let res = dflmtd(&["sweep", "--config", &clean, "--pnr", "0.1", "--out", out]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("attack.kind"));
}

#[test]
fn idx_dataset_directory_is_loaded() {
    use dflmtd::idx::{load_idx_dir, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
    use dflmtd_core::data::{encode_idx, synth_blobs};

    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("digits");
    std::fs::create_dir(&data_dir).unwrap();
    for (n, seed, images, labels) in [(400, 1, TRAIN_IMAGES, TRAIN_LABELS), (120, 2, TEST_IMAGES, TEST_LABELS)] {
        let (img, lbl) = encode_idx(&synth_blobs(n, 64, 10, 1.0, seed).unwrap()).unwrap();
        std::fs::write(data_dir.join(images), img).unwrap();
        std::fs::write(data_dir.join(labels), lbl).unwrap();
    }
    let (train, test) = load_idx_dir(&data_dir).unwrap();
    assert_eq!((train.len(), test.len()), (400, 120));
    assert_eq!(train.n_features(), 64);

    let config = write_config(
        dir.path(),
        &format!(
            r#"{{"dataset": {{"kind": "mnist", "dir": {:?}, "samples_per_node": 90, "test_samples": 100}},
                "n_nodes": 4, "rounds": 1, "model": {{"hidden": [8]}}}}"#,
            data_dir.to_str().unwrap()
        ),
    );
    let out = dir.path().join("out");
    let res = dflmtd(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(read_rounds_csv(&out.join("rounds.csv")).unwrap().len(), 4);

    let too_many = write_config(
        dir.path(),
        &format!(
            r#"{{"dataset": {{"kind": "mnist", "dir": {:?}, "samples_per_node": 200}}, "n_nodes": 4}}"#,
            data_dir.to_str().unwrap()
        ),
    );
    let res = dflmtd(&["run", "--config", &too_many, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("dataset.samples_per_node"));
}

//! End-to-end runs of the `resoformer` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resoformer::cli::RunConfig;
use resoformer::data::{load_dataset, load_manifest};
use resoformer::model::Checkpoint;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resoformer"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"{
  "dataset": {
    "duration": 2.0,
    "train": {"stiffness": [2662.0], "brake_times": [1.0], "road_friction": [0.6, 1.0], "motor_positions": ["front", "rear"]},
    "test": {"stiffness": [6800.0], "brake_times": [1.0], "road_friction": [0.6], "motor_positions": ["front"]}
  },
  "model_config": {"input_len": 32, "horizon": 16, "width": 8, "heads": 2, "head_hidden": 16, "dilations": [1, 2]},
  "train": {"epochs": 2, "stride": 4},
  "horizons": [16, 8],
  "eval_stride": 4,
  "out": "run"
}"#;

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

#[test]
fn desk_preset_generates_forty_and_twelve_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["--preset", "desk", "--out", "desk", "generate"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = load_manifest(&dir.path().join("desk/data")).unwrap();
    assert_eq!((m.train.len(), m.test.len()), (40, 12));
    let count = |split: &str| {
        fs::read_dir(dir.path().join("desk/data").join(split))
            .unwrap()
            .count()
    };
    assert_eq!((count("train"), count("test")), (40, 12));
}

#[test]
fn generate_is_byte_reproducible_and_guards_the_output() {
    let dir = tiny_dir();
    let gen = |out: &str, extra: &[&str]| {
        let mut args = vec!["--config", "tiny.json", "--out", out];
        args.extend_from_slice(extra);
        args.push("generate");
        run(dir.path(), &args)
    };
    assert_eq!(code(&gen("a", &[])), 0);
    assert_eq!(code(&gen("b", &[])), 0);
    let files = |root: &str| {
        let mut v: Vec<_> = ["train", "test"]
            .iter()
            .flat_map(|s| fs::read_dir(dir.path().join(root).join("data").join(s)).unwrap())
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_owned(), fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(files("a"), files("b"));
    assert_eq!(
        fs::read(dir.path().join("a/data/manifest.json")).unwrap(),
        fs::read(dir.path().join("b/data/manifest.json")).unwrap()
    );

    let again = gen("a", &[]);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("--force"));
    assert_eq!(code(&gen("a", &["--force"])), 0);
    assert_eq!(code(&gen("c", &["--seed", "99"])), 0);
    assert_ne!(files("a"), files("c"));
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tiny_dir();
    fs::write(dir.path().join("typo.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
    let o = run(dir.path(), &["--config", "typo.json", "generate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let o = run(dir.path(), &["--out", "empty", "train"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("empty/data/manifest.json"),
        "{}",
        stderr(&o)
    );

    assert_eq!(code(&run(dir.path(), &["--model", "gpt", "train"])), 2);
    assert_eq!(
        code(&run(dir.path(), &["--config", "missing.json", "train"])),
        2
    );
    assert_eq!(code(&run(dir.path(), &[])), 2);

    fs::write(
        dir.path().join("bad.json"),
        r#"{"model_config": {"width": 6, "heads": 4}}"#,
    )
    .unwrap();
    assert_eq!(
        code(&run(dir.path(), &["--config", "bad.json", "generate"])),
        2
    );
}

#[test]
fn train_predict_and_replay() {
    let dir = tiny_dir();
    assert_eq!(
        code(&run(dir.path(), &["--config", "tiny.json", "generate"])),
        0
    );

    let o = run(
        dir.path(),
        &["--config", "tiny.json", "--model", "zero", "train"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("\"seed\": 7"),
        "resolved config not echoed"
    );
    let ckpt = Checkpoint::load(&dir.path().join("run/checkpoints/zero_T16.ckpt")).unwrap();
    assert!(ckpt.tensors.is_empty());
    let history = fs::read_to_string(dir.path().join("run/history/zero_T16.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,lr,seconds\n"));
    assert_eq!(history.lines().count(), 3);

    let o = run(
        dir.path(),
        &[
            "--config",
            "tiny.json",
            "--model",
            "zero",
            "predict",
            "--offset",
            "3",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv =
        fs::read_to_string(dir.path().join("run/predictions/zero_T16_test_0000_3.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 32 + 16);
    assert!(rows[..32].iter().all(|r| r.ends_with(',')));
    // Zero in normalized units is the training mean of the torque channel.
    let mean = ckpt.stats.ds_torque.denormalize(0.0);
    for r in &rows[32..] {
        let p: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(p, mean);
    }
    let svg =
        fs::read_to_string(dir.path().join("run/predictions/zero_T16_test_0000_3.svg")).unwrap();
    assert!(svg.contains(r#"class="prediction""#) && svg.contains(r#"class="truth""#));

    let o = run(
        dir.path(),
        &[
            "--config",
            "tiny.json",
            "--model",
            "zero",
            "predict",
            "--offset",
            "1000",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("out of range"));

    let o = run(
        dir.path(),
        &["--config", "tiny.json", "--model", "tcn", "train"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(
        dir.path(),
        &[
            "--config",
            "tiny.json",
            "--model",
            "tcn",
            "predict",
            "--series",
            "train_0001",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tcn = Checkpoint::load(&dir.path().join("run/checkpoints/tcn_T16.ckpt")).unwrap();
    let data = load_dataset(&dir.path().join("run/data")).unwrap();
    let series = data
        .train
        .iter()
        .find(|s| s.series_id == "train_0001")
        .unwrap();
    let x: Vec<f32> = series.mg_rpm[..32]
        .iter()
        .map(|&v| tcn.stats.mg_rpm.normalize(v) as f32)
        .collect();
    let z = tcn
        .to_model()
        .unwrap()
        .predict(&resoformer::tensor::Tensor::new(vec![32], x).unwrap())
        .unwrap();
    let csv =
        fs::read_to_string(dir.path().join("run/predictions/tcn_T16_train_0001_0.csv")).unwrap();
    for (row, z) in csv.lines().skip(33).zip(z.data()) {
        let p: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((tcn.stats.ds_torque.normalize(p) - *z as f64).abs() < 1e-6);
    }

    let runs: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/run.json")).unwrap())
            .unwrap();
    // The failed predict is not recorded.
    assert_eq!(runs.len(), 5);
    assert_eq!(runs[3]["command"], "train");
    let last: RunConfig = serde_json::from_value(runs[3]["config"].clone()).unwrap();
    fs::write(
        dir.path().join("replay.json"),
        serde_json::to_string(&last).unwrap(),
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "--config",
            "replay.json",
            "--out",
            "replay",
            "--data",
            "run/data",
            "train",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("replay/checkpoints/tcn_T16.ckpt")).unwrap(),
        fs::read(dir.path().join("run/checkpoints/tcn_T16.ckpt")).unwrap()
    );
}

#[test]
fn benchmark_reports_gaps_then_fills_them() {
    let dir = tiny_dir();
    assert_eq!(
        code(&run(dir.path(), &["--config", "tiny.json", "generate"])),
        0
    );
    let o = run(dir.path(), &["--config", "tiny.json", "benchmark"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("missing"));
    assert!(stderr(&o).contains("missing checkpoint for Resoformer T=8"));
    let csv = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);

    let o = run(
        dir.path(),
        &["--config", "tiny.json", "benchmark", "--train-missing"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "model,horizon,mae,mse,epoch_seconds"
    );
    assert_eq!(csv.lines().count(), 1 + 8);
    let json: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(json.len(), 8);
    let text = fs::read_to_string(dir.path().join("run/benchmark.txt")).unwrap();
    assert!(!text.contains("missing"));
    assert!(text.contains("Seconds per epoch"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn statt(args: &[&str]) -> Output {
    statt_env(args, &[])
}

fn statt_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_statt"));
    cmd.args(args).env_remove("STATT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn statt")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn small_dataset_config() -> Value {
    json!({
        "scene": {"height": 32, "width": 32, "time_steps": 4, "channels": 2, "mean_field_size": 10.0, "seed": 3},
        "grid": [4, 4]
    })
}

fn small_model() -> Value {
    json!({"time_steps": 4, "channels": 2, "classes": 4, "in_size": 16, "out_size": 8,
           "blocks": 2, "base_channels": 4, "lstm_hidden": 8, "attn_hidden": 8})
}

/// A generated dataset plus model and train configs inside a temp dir.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        write_json(&f.path("data.json"), &small_dataset_config());
        write_json(&f.path("model.json"), &small_model());
        write_json(&f.path("train.json"), &json!({"epochs": 2, "batch_size": 8}));
        let out = statt(&["gen", "--config", s(&f.path("data.json")), "--out", s(&f.path("ds"))]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, mode: &str) -> Output {
        statt(&[
            "train",
            "--data",
            s(&self.path("ds")),
            "--model",
            s(&self.path("model.json")),
            "--train",
            s(&self.path("train.json")),
            "--mode",
            mode,
            "--out",
            s(&self.path(out)),
        ])
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let f = Fixture::new();
    let again = statt(&["gen", "--config", s(&f.path("data.json")), "--out", s(&f.path("ds2"))]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    for name in ["manifest.json", "X.bin", "Y.bin", "splits.json"] {
        let a = fs::read(f.path("ds").join(name)).unwrap();
        let b = fs::read(f.path("ds2").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
    let m = read_json(&f.path("ds").join("run_manifest.json"));
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seeds"]["scene"], 3);
    assert_eq!(m["exit_code"], 0);
}

#[test]
fn gen_rejects_a_single_time_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_dataset_config();
    cfg["scene"]["time_steps"] = json!(1);
    let p = write_json(&dir.path().join("c.json"), &cfg);
    let out = statt(&["gen", "--config", s(&p), "--out", s(&dir.path().join("ds"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("time_steps"), "{}", stderr(&out));
    assert!(!dir.path().join("ds").exists());
}

#[test]
fn unknown_config_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_json(&dir.path().join("c.json"), &json!({"scene": {"heigth": 8}}));
    let out = statt(&["gen", "--config", s(&p), "--out", s(&dir.path().join("ds"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("scene"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = statt(&["gen", "--config", s(&dir.path().join("absent.json")), "--out", s(&dir.path().join("ds"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn train_eval_attn_and_replay() {
    let f = Fixture::new();
    let out = f.train("run", "attention");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = f.path("run");
    for name in ["checkpoint/params.json", "checkpoint/params.bin", "history.csv", "metrics.json", "timing.json", "run_manifest.json"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
    let metrics = read_json(&run.join("metrics.json"));
    assert_eq!(metrics["split"], "test");
    let f1 = metrics["mean_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    // eval of the saved checkpoint reproduces the training-time test metrics
    let eval_out = f.path("eval.json");
    let out = statt(&["eval", "--data", s(&f.path("ds")), "--ckpt", s(&run.join("checkpoint")), "--out", s(&eval_out)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&eval_out), metrics);
    assert!(f.path("eval.run_manifest.json").exists());

    let out = statt(&[
        "attn",
        "--data",
        s(&f.path("ds")),
        "--ckpt",
        s(&run.join("checkpoint")),
        "--class",
        "all",
        "--out",
        s(&f.path("attn")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(f.path("attn/attention.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,alpha_mean,alpha_class_cotton,alpha_class_alfalfa,alpha_class_corn,alpha_class_winter_wheat"
    );
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6, "{total}");
    assert!(fs::read_to_string(f.path("attn/attention.svg")).unwrap().starts_with("<svg"));

    let out = statt(&[
        "attn",
        "--data",
        s(&f.path("ds")),
        "--ckpt",
        s(&run.join("checkpoint")),
        "--class",
        "rice",
        "--out",
        s(&f.path("attn2")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("winter_wheat"), "{}", stderr(&out));

    let out = statt(&["replay", "--manifest", s(&run.join("run_manifest.json")), "--out", s(&f.path("replayed"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["checkpoint/params.json", "checkpoint/params.bin", "history.csv", "metrics.json"] {
        let a = fs::read(run.join(name)).unwrap();
        let b = fs::read(f.path("replayed").join(name)).unwrap();
        assert!(a == b, "{name} differs after replay");
    }
}

#[test]
fn corrupt_checkpoint_is_an_io_error() {
    let f = Fixture::new();
    let out = f.train("run", "mean");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bin = f.path("run/checkpoint/params.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
    let out = statt(&[
        "eval",
        "--data",
        s(&f.path("ds")),
        "--ckpt",
        s(&f.path("run/checkpoint")),
        "--out",
        s(&f.path("e.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn attention_dump_of_a_mean_model_is_rejected() {
    let f = Fixture::new();
    let out = f.train("run", "mean");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = statt(&[
        "attn",
        "--data",
        s(&f.path("ds")),
        "--ckpt",
        s(&f.path("run/checkpoint")),
        "--out",
        s(&f.path("attn")),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn mismatched_model_names_the_tensor() {
    let f = Fixture::new();
    let mut model = small_model();
    model["channels"] = json!(3);
    write_json(&f.path("model.json"), &model);
    let out = f.train("run", "attention");
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("enc.0.conv1.weight"), "{}", stderr(&out));
}

#[test]
fn sweep_rejects_an_empty_fraction_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = statt(&["noise-sweep", "--fractions", "", "--out", s(&dir.path().join("sw"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn small_sweep_writes_csv_chart_and_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "dataset": small_dataset_config(),
        "model": small_model(),
        "train": {"epochs": 1, "batch_size": 8},
        "fractions": [0.0, 0.5]
    });
    let p = write_json(&dir.path().join("sweep.json"), &cfg);
    let out_dir = dir.path().join("sw");
    let out = statt(&["noise-sweep", "--config", s(&p), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert!(fs::read_to_string(out_dir.join("sweep.svg")).unwrap().contains("mean_f1="));
    let profiles = read_json(&out_dir.join("profiles.json"));
    let list = profiles.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list[0]["noisy_to_clean_ratio"].is_null());
    assert_eq!(list[1]["noisy_steps"].as_array().unwrap().len(), 2);
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gc");
    let out = statt(&["gradcheck", "--samples", "0", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);

    let out = statt(&["gradcheck", "--samples", "20", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&out_dir.join("gradcheck.json"));
    assert_eq!(report["passed"], true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));

    let out = statt(&["gradcheck", "--samples", "20", "--inject-fault", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(read_json(&out_dir.join("gradcheck.json"))["passed"], false);
}

#[test]
fn gradcheck_guards_large_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = json!({"time_steps": 4, "channels": 4, "classes": 4, "in_size": 32, "out_size": 16,
                       "blocks": 3, "base_channels": 64, "lstm_hidden": 256, "attn_hidden": 64});
    let p = write_json(&dir.path().join("m.json"), &model);
    let out = statt(&["gradcheck", "--model", s(&p), "--out", s(&dir.path().join("gc"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("--allow-large"));
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = statt_env(&["gen", "--out", s(&dir.path().join("ds"))], &[("STATT_THREADS", "zero")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("STATT_THREADS"));
}

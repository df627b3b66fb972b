use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tabsynth::data::{load_csv, CsvOptions};
use tabsynth::demo::planted_table;

const SMALL: &str = r#"{"batch_size": 100, "noise_dim": 16, "generator_hidden": [32, 32],
    "discriminator_hidden": [32], "classifier_hidden": [32]}"#;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Env {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tabsynth"))
            .arg("--workspace")
            .arg(self.path("ws"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn planted(&self, rows: usize) -> String {
        let p = self.path("planted.csv");
        planted_table(rows, 0).save_csv(&p).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn config(&self, json: &str) -> String {
        let p = self.path("config.json");
        fs::write(&p, json).unwrap();
        p.to_string_lossy().into_owned()
    }
}

fn value_after<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no `{key}` line in {stdout}"))
}

fn rows(path: impl AsRef<Path>) -> usize {
    load_csv(path, &CsvOptions::default()).unwrap().n_rows()
}

#[test]
fn schema_writes_file_and_listing() {
    let env = Env::new();
    let csv = env.planted(300);
    let out = env.ok(&["schema", &csv]);
    assert!(out.contains("categorical") && out.contains("mixed"));
    let written = format!("{csv}.schema.json");
    assert!(Path::new(&written).exists());

    let overrides = env.path("over.json");
    fs::write(
        &overrides,
        r#"{"overrides": [{"column": "b", "include": false}, {"column": "y", "target": true}]}"#,
    )
    .unwrap();
    let out = env.ok(&["schema", &csv, "--overrides", overrides.to_str().unwrap()]);
    let b_line = out.lines().find(|l| l.starts_with("b ")).unwrap();
    assert!(b_line.contains(" no "), "{b_line}");
    assert!(out.lines().any(|l| l.starts_with("y ") && l.contains("target")));
}

#[test]
fn schema_bad_path_exits_2() {
    let env = Env::new();
    let out = env.run(&["schema", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_generate_evaluate_report() {
    let env = Env::new();
    let csv = env.planted(400);
    let cfg = env.config(SMALL);
    let out = env.ok(&["train", &csv, "--config", &cfg, "--epochs", "2", "--seed", "3", "--target", "y"]);
    let model = value_after(&out, "model").to_string();
    let bundle = PathBuf::from(value_after(&out, "bundle"));
    let history: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bundle.join("history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 2);
    assert!(history["epochs"][0].get("class").is_some());

    let synth_path = env.path("synth.csv");
    let out = env.ok(&["generate", &model, "--rows", "123", "--out", synth_path.to_str().unwrap()]);
    assert!(value_after(&out, "synthetic").len() == 16);
    assert_eq!(rows(&synth_path), 123);
    // the bundle directory works as well
    env.ok(&["generate", bundle.to_str().unwrap(), "--rows", "5"]);

    let report_path = env.path("report.json");
    let out = env.ok(&[
        "evaluate",
        "--real",
        &csv,
        "--synthetic",
        synth_path.to_str().unwrap(),
        "--target",
        "y",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.contains("avg JSD") && out.contains("DCR") && out.contains("logistic_regression"));
    let id = value_after(&out, "report").to_string();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in ["similarity", "privacy", "utility", "series"] {
        assert!(!doc[key].is_null(), "{key}");
    }
    for key in ["avg_jsd", "avg_wd", "avg_wd_scaled", "diff_corr"] {
        assert!(doc["similarity"][key].is_number(), "{key}");
    }
    for key in ["real_synthetic", "within_real", "within_synthetic"] {
        assert!(doc["privacy"]["dcr"][key].is_number());
        assert!(doc["privacy"]["nndr"][key].is_number());
    }
    let shown = env.ok(&["report", &id]);
    assert!(shown.contains("avg JSD"));
    let json = env.ok(&["report", &id, "--json"]);
    let again: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(again, doc);
}

#[test]
fn ablation_flags_reach_the_bundle() {
    let env = Env::new();
    let csv = env.planted(200);
    let cfg = env.config(SMALL);
    let out = env.ok(&[
        "train",
        &csv,
        "--config",
        &cfg,
        "--epochs",
        "1",
        "--target",
        "y",
        "--no-classifier",
        "--no-info-loss",
        "--no-vgm",
    ]);
    let bundle = PathBuf::from(value_after(&out, "bundle"));
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bundle.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["classifier_on"], false);
    assert_eq!(config["info_loss_on"], false);
    assert_eq!(config["vgm_on"], false);
    assert_eq!(config["epochs"], 1);
    let codecs = fs::read_to_string(bundle.join("codecs.json")).unwrap();
    assert!(codecs.contains("min_max") && !codecs.contains("\"vgm\""));
    assert!(!bundle.join("classifier.json").exists());
}

#[test]
fn default_epochs_is_150() {
    let env = Env::new();
    let out = Command::new(env!("CARGO_BIN_EXE_tabsynth")).args(["train", "--help"]).output().unwrap();
    assert!(out.status.success());
    drop(env);
    assert_eq!(tabsynth::gan::TrainConfig::default().epochs, 150);
}

#[test]
fn divergence_exits_3() {
    let env = Env::new();
    let csv = env.planted(200);
    let cfg = env.config(
        r#"{"batch_size": 100, "noise_dim": 8, "generator_hidden": [16], "discriminator_hidden": [16],
            "classifier_hidden": [16], "generator_opt": {"lr": 1e300}, "discriminator_opt": {"lr": 1e300}}"#,
    );
    let out = env.run(&["train", &csv, "--config", &cfg, "--epochs", "5", "--target", "y"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn input_errors_exit_2() {
    let env = Env::new();
    let csv = env.planted(200);
    let cfg = env.config(SMALL);
    assert_eq!(env.run(&["train", &csv, "--config", &cfg, "--epochs", "0"]).status.code(), Some(2));
    assert_eq!(env.run(&["generate", "nonexistent", "--rows", "5"]).status.code(), Some(2));
    assert_eq!(env.run(&["train", &csv, "--config", &cfg, "--target", "nope"]).status.code(), Some(2));
    assert_eq!(env.run(&["train", &csv, "--config", &cfg, "--target", "a"]).status.code(), Some(2));

    let out = env.ok(&["train", &csv, "--config", &cfg, "--epochs", "1"]);
    let model = value_after(&out, "model").to_string();
    assert_eq!(env.run(&["generate", &model, "--rows", "0"]).status.code(), Some(2));
    assert_eq!(
        env.run(&["generate", &model, "--rows", "5", "--condition", "b=zzz"]).status.code(),
        Some(2)
    );
    assert_eq!(env.run(&["report", "nope"]).status.code(), Some(2));
}

#[test]
fn identical_files_give_zero_divergence() {
    let env = Env::new();
    let csv = env.planted(300);
    let report = env.path("r.json");
    env.ok(&["evaluate", "--real", &csv, "--synthetic", &csv, "--out", report.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["similarity"]["avg_jsd"], 0.0);
    assert_eq!(doc["similarity"]["avg_wd"], 0.0);
    assert!(doc["utility"].is_null());
}

#[test]
fn utility_without_target_exits_2() {
    let env = Env::new();
    let csv = env.planted(200);
    let out = env.run(&["evaluate", "--real", &csv, "--synthetic", &csv, "--utility"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target"));
}

#[test]
fn fixed_condition_is_respected() {
    let env = Env::new();
    let csv = env.path("two.csv");
    let mut text = String::from("k\n");
    for i in 0..1000 {
        text.push_str(if i % 10 < 7 { "p\n" } else { "q\n" });
    }
    fs::write(&csv, text).unwrap();
    let cfg = env.config(SMALL);
    let out = env.ok(&["train", csv.to_str().unwrap(), "--config", &cfg, "--epochs", "100"]);
    let model = value_after(&out, "model").to_string();
    let synth = env.path("q.csv");
    env.ok(&["generate", &model, "--rows", "1000", "--condition", "k=q", "--out", synth.to_str().unwrap()]);
    let t = load_csv(&synth, &CsvOptions::default()).unwrap();
    let hits = t.column("k").unwrap().tokens().iter().filter(|v| v.as_deref() == Some("q")).count();
    assert!(hits >= 950, "{hits}");
}

#[test]
fn same_seed_same_output() {
    let env = Env::new();
    let csv = env.planted(200);
    let cfg = env.config(SMALL);
    let a = env.ok(&["train", &csv, "--config", &cfg, "--epochs", "1", "--seed", "5"]);
    let b = env.ok(&["train", &csv, "--config", &cfg, "--epochs", "1", "--seed", "5"]);
    let (ma, mb) = (value_after(&a, "model").to_string(), value_after(&b, "model").to_string());
    let (pa, pb) = (env.path("a.csv"), env.path("b.csv"));
    env.ok(&["generate", &ma, "--rows", "50", "--seed", "2", "--out", pa.to_str().unwrap()]);
    env.ok(&["generate", &mb, "--rows", "50", "--seed", "2", "--out", pb.to_str().unwrap()]);
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
}

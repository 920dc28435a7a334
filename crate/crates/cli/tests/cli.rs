use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn innerspeech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_innerspeech")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> String {
    let base = dir.join(name).display().to_string();
    let mut args = vec!["synth", "--out", base.as_str()];
    args.extend_from_slice(extra);
    let o = innerspeech(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    base
}

#[test]
fn validate_reports_ok_and_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "s", &[]);
    let o = innerspeech(&["validate", &base]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("OK\n"), "{text}");
    assert!(text.contains("400 epochs, 8 channels, 635 timesteps at 254 Hz"), "{text}");
    assert!(text.contains("class counts: 100/100/100/100 (up/down/right/left)"), "{text}");
    assert!(!text.contains("warning"), "{text}");
}

#[test]
fn validate_names_a_zeroed_channel() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "s", &["--trials", "3"]);
    let tensor = format!("{base}.f32");
    let mut bytes = fs::read(&tensor).unwrap();
    let (n_ch, n_t) = (8, 635);
    for epoch in 0..12 {
        let start = (epoch * n_ch + 2) * n_t * 4;
        bytes[start..start + n_t * 4].fill(0);
    }
    fs::write(&tensor, bytes).unwrap();
    let o = innerspeech(&["validate", &base]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning: dead channel C3"), "{}", stdout(&o));
}

#[test]
fn validate_reports_truncated_tensor_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "s", &["--trials", "2"]);
    let tensor = format!("{base}.f32");
    let bytes = fs::read(&tensor).unwrap();
    fs::write(&tensor, &bytes[..1000]).unwrap();
    let o = innerspeech(&["validate", &base]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains(&format!("holds 1000 bytes, header implies {}", bytes.len())), "{text}");
    assert!(!text.contains("OK"));
}

#[test]
fn eval_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "s", &["--trials", "12", "--seed", "3"]);
    let out = dir.path().join("out").display().to_string();
    let o = innerspeech(&["--jobs", "1", "eval", "--preset", "synth-gbt", "--data", &base, "--gbt-rounds", "10", "-o", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("gbt on psd_features"), "{}", stdout(&o));
    for f in ["subjects.csv", "comparison.csv", "accuracy.svg", "report.json", "config.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let again = dir.path().join("again").display().to_string();
    let o = innerspeech(&["report", "--from", &out, "--out", &again]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["subjects.csv", "comparison.csv", "accuracy.svg", "report.json"] {
        assert_eq!(fs::read(dir.path().join("out").join(f)).unwrap(), fs::read(dir.path().join("again").join(f)).unwrap(), "{f}");
    }

    // the stored configuration reproduces the report
    let cfg = dir.path().join("out/config.json").display().to_string();
    let third = dir.path().join("third").display().to_string();
    let o = innerspeech(&["eval", "--config", &cfg, "-o", &third]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(dir.path().join("out/subjects.csv")).unwrap(), fs::read(dir.path().join("third/subjects.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing").display().to_string();
    let out = dir.path().join("out");
    let o = innerspeech(&["eval", "--preset", "bilstm-raw-all", "--data", &missing, "-o", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config:"));
    assert!(!out.exists());

    assert_eq!(innerspeech(&["eval", "--preset", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(innerspeech(&["eval", "--preset", "synth-svm", "--input", "raw-all"]).status.code(), Some(2));
    assert_eq!(innerspeech(&["eval"]).status.code(), Some(2));
    assert_eq!(innerspeech(&["bogus"]).status.code(), Some(2));
}

#[test]
fn print_config_applies_overrides() {
    let o = innerspeech(&["eval", "--preset", "synth-bilstm", "--seed", "7", "--kfold", "5", "--print-config"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["classifier"], "bilstm");
    assert_eq!(v["eval"]["k"], 5);

    let o = innerspeech(&["eval", "--list-presets"]);
    assert!(stdout(&o).lines().any(|l| l == "bilstm-raw-mif"));
}

#[test]
fn preprocess_featurize_and_train_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "sub01", &["--trials", "6"]);
    let d = |p: &str| dir.path().join(p).display().to_string();

    let o = innerspeech(&["preprocess", "--preset", "svm-left-pca", "--data", &base, "--out", &d("pre")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = innerspeech(&["validate", &d("pre/synth")]);
    assert!(stdout(&o).contains("OK"), "{}", stdout(&o));

    let o = innerspeech(&["featurize", "--preset", "synth-svm", "--data", &base, "--out", &d("feat")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("feat/synth.csv")).unwrap();
    assert!(csv.starts_with("label,F3/alpha,F3/beta,F3/gamma,F4/alpha"), "{}", &csv[..60]);
    assert_eq!(csv.lines().count(), 25);

    let o = innerspeech(&["train", "--preset", "synth-gbt", "--data", &base, "--gbt-rounds", "5", "--out", &d("models")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("models/synth.model.json")).unwrap()).unwrap();
    assert_eq!(model["model"]["kind"], "features");
}

#[test]
fn synth_with_rest_feeds_the_binary_task() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "trials", &["--trials", "6", "--rest-s", "1.5"]);
    let o = innerspeech(&["validate", &base]);
    let text = stdout(&o);
    assert!(text.contains("48 epochs, 8 channels, 381-635 timesteps"), "{text}");
    assert!(text.contains("class counts: 24/24 (rest/action)"), "{text}");
    let out = dir.path().join("out").display().to_string();
    let o = innerspeech(&["eval", "--preset", "binary-gbt-pca", "--data", &base, "--profile", "none", "--gbt-rounds", "5", "-o", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 classes"), "{}", stdout(&o));
}

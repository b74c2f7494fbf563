//! End-to-end runs of the `treelstm` binary on a small generated treebank.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use treelstm::synthetic::{generate_splits, write_splits, SyntheticConfig};

fn treelstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treelstm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_treebank(dir: &Path) {
    let config = SyntheticConfig {
        mean_length: 6.0,
        filler_vocab: 20,
        sentiment_rate: 0.4,
    };
    let (train, dev, test) = generate_splits(config, (40, 10, 10), 7);
    write_splits(dir, &train, &dev, &test).unwrap();
}

fn train_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        data,
        "--out",
        out,
        "--d",
        "4",
        "--embedding-dim",
        "5",
        "--epochs",
        "2",
        "--seed",
        "3",
    ]
}

#[test]
fn train_twice_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_treebank(&data);
    let data = data.to_str().unwrap();
    let outs = [tmp.path().join("a"), tmp.path().join("b")];
    for out in &outs {
        let o = treelstm(&train_args(data, out.to_str().unwrap()));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in [
        "run-0/model.bin",
        "run-0/history.csv",
        "run-0/test.csv",
        "stats.csv",
    ] {
        let a = fs::read(outs[0].join(file)).unwrap();
        let b = fs::read(outs[1].join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
}

#[test]
fn evaluate_reproduces_recorded_dev_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_treebank(&data);
    let out = tmp.path().join("out");
    let o = treelstm(&train_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", stderr(&o));

    let model = out.join("run-0/model.bin");
    let o = treelstm(&[
        "evaluate",
        "--artifact",
        model.to_str().unwrap(),
        "--split",
        data.join("dev.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let root: f64 = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let artifact = treelstm::cli::ModelArtifact::load(&model).unwrap();
    assert!(
        (root - artifact.dev_accuracy).abs() < 1e-3,
        "{root} vs {}",
        artifact.dev_accuracy
    );

    let o = treelstm(&[
        "evaluate",
        "--artifact",
        model.to_str().unwrap(),
        "--split",
        data.join("dev.txt").to_str().unwrap(),
        "--task",
        "binary",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("class-count mismatch"));
}

#[test]
fn several_runs_write_one_artifact_each_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_treebank(&data);
    let out = tmp.path().join("out");
    let mut args = train_args(data.to_str().unwrap(), out.to_str().unwrap());
    args.extend(["--runs", "3", "--model", "rnn"]);
    let o = treelstm(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    for i in 0..3 {
        assert!(out.join(format!("run-{i}/model.bin")).is_file());
    }
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    let runs = stats
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .count();
    assert_eq!(runs, 3, "{stats}");

    let o = treelstm(&["stats", out.join("stats.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("median"));
}

#[test]
fn missing_inputs_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = treelstm(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--epochs",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));

    let o = treelstm(&["prepare", "--data", missing.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_treebank(&data);
    let config = tmp.path().join("run.cfg");
    let out = tmp.path().join("out");
    fs::write(
        &config,
        format!(
            "data={}\nout={}\nd=3\nepochs=1\nembedding_dim=4\nmodel_kind=rnn\n",
            data.display(),
            out.display()
        ),
    )
    .unwrap();
    let o = treelstm(&["train", "--config", config.to_str().unwrap(), "--d", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let has = |line: &str| manifest.lines().any(|l| l == line);
    assert!(
        has("d=2") && has("model_kind=rnn") && has("epochs=1"),
        "{manifest}"
    );

    fs::write(&config, "dd=3\n").unwrap();
    let o = treelstm(&["train", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dd"));
}

#[test]
fn gradcheck_catches_an_injected_fault() {
    let o = treelstm(&["gradcheck", "--inject-fault", "b_f"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("b_f"), "{}", stderr(&o));

    let o = treelstm(&["gradcheck", "--threshold", "1e-12"]);
    assert!(!o.status.success());
}

#[test]
fn prepare_and_complexity_report_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_treebank(&data);
    let o = treelstm(&["prepare", "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let census = String::from_utf8(o.stdout).unwrap();
    assert!(census.contains("sentences,60"), "{census}");

    let o = treelstm(&[
        "complexity",
        "--d",
        "5",
        "--d-w",
        "5",
        data.join("test.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        csv.lines().nth(1).unwrap().rsplit(',').next(),
        Some("0"),
        "{csv}"
    );
}

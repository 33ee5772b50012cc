use std::path::Path;
use std::process::{Command, Output};

use ebm::datasets::{
    write_mnist_images, write_mnist_labels, MNIST_TEST_IMAGES, MNIST_TEST_LABELS,
    MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
use ebm::metrics::parse_fields;
use ebm::pgm::parse_pgm;
use ebm_core::{Matrix, Rng};

fn ebm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebm"))
        .args(args)
        .env_remove("MDL_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn tiny_mnist(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = Rng::new(5);
    for (n, images, labels) in [
        (60, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS),
        (20, MNIST_TEST_IMAGES, MNIST_TEST_LABELS),
    ] {
        let x = rng.uniform_matrix(n, 784);
        let y = Matrix::from_fn(n, 1, |r, _| (r % 10) as f64);
        write_mnist_images(&dir.join(images), &x, 28, 28).unwrap();
        write_mnist_labels(&dir.join(labels), &y).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ebm(&["--help"]).status.code(), Some(0));
    assert_eq!(ebm(&["--version"]).status.code(), Some(0));
    assert_eq!(ebm(&["run-rbm", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(ebm(&["run-rbm", "--lr", "-1"]).status.code(), Some(1));
    let missing = tmp.path().join("nowhere");
    let out = ebm(&[
        "run-rbm",
        "--data-dir",
        s(&missing),
        "--out-dir",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model":"rbm","surprise":1}"#).unwrap();
    assert_eq!(ebm(&["run", "--config", s(&cfg)]).status.code(), Some(1));
    std::fs::write(&cfg, "not json").unwrap();
    assert_ne!(ebm(&["run", "--config", s(&cfg)]).status.code(), Some(0));
}

#[test]
fn zero_epochs_write_the_baseline_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    tiny_mnist(&data);
    let out = tmp.path().join("out");
    let run = ebm(&[
        "run-dnn",
        "--layers",
        "784,12,10",
        "--epochs",
        "0",
        "--batches",
        "3",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    let first = parse_fields(lines[0]);
    assert_eq!(&first[..2], &[("phase", "baseline"), ("epoch", "0")]);
    assert!(first.iter().any(|&(k, _)| k == "wall_ms"));
    assert!(lines[1].starts_with("summary "));
    let summary = parse_fields(lines[1]);
    assert!(summary.contains(&("model", "dnn")));
    assert!(summary.contains(&("test_samples", "20")));

    let pgm = std::fs::read(out.join("weights.pgm")).unwrap();
    let (w, h, px) = parse_pgm(&pgm, &out.join("weights.pgm")).unwrap();
    assert_eq!(px.len(), w * h);
    assert!(std::fs::metadata(out.join("model.mdlr")).unwrap().len() > 12);
    assert!(out.join("config.json").exists());
}

#[test]
fn every_phase_logs_each_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    tiny_mnist(&data);
    let out = tmp.path().join("out");
    let run = ebm(&[
        "run-rbm",
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--batches",
        "2",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    let phases: Vec<String> = text
        .lines()
        .filter(|l| l.starts_with("phase="))
        .map(|l| parse_fields(l)[0].1.to_string())
        .collect();
    assert_eq!(phases[0], "baseline");
    // pretraining, then the classifier head
    assert_eq!(phases[1..], ["rbm", "rbm", "rbm", "head", "head", "head"]);
    let walls: Vec<u128> = text
        .lines()
        .filter_map(|l| parse_fields(l).into_iter().find(|&(k, _)| k == "wall_ms"))
        .map(|(_, v)| v.parse().unwrap())
        .collect();
    assert!(walls.windows(2).all(|w| w[0] <= w[1]));
}

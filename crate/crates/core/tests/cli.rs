use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pointseg::data::{Manifest, Split};

fn pointseg(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointseg"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

const SMALL_SPEC: &str = r#"{"num_images": 80, "width": 32, "height": 32, "cells": [1, 3], "radius": [3.0, 4.0]}"#;

#[test]
fn synth_writes_an_eighty_ten_ten_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let data = dir.path().join("data");
    let out = pointseg(&[&"synth", &"--spec", &spec, &"--out", &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let count = |s| manifest.split(s).count();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (64, 8, 8));
    for entry in &manifest.samples {
        assert!(data.join(&entry.image).is_file());
        assert!(data.join(&entry.points).is_file());
    }
    assert!(data.join("run.json").is_file());
}

#[test]
fn encode_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"num_images": 10, "width": 40, "height": 40, "cells": [2, 4]}"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    assert!(pointseg(&[&"synth", &"--spec", &spec, &"--out", &data])
        .status
        .success());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(pointseg(&[&"encode", &"--data", &data, &"--out", &a]).status.success());
    assert!(pointseg(&[&"encode", &"--data", &data, &"--out", &b]).status.success());
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);
}

#[test]
fn staged_commands_produce_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"train": {"epochs": 1}}"#).unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let predictions = dir.path().join("pred");
    let report = dir.path().join("eval");
    assert!(pointseg(&[&"synth", &"--spec", &spec, &"--out", &data])
        .status
        .success());
    let out = pointseg(&[&"train", &"--data", &data, &"--config", &config, &"--out", &model]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["params.json", "norm_stats.json", "loss_log.csv", "run.json"] {
        assert!(model.join(name).is_file(), "{name}");
    }
    let out = pointseg(&[
        &"predict",
        &"--model",
        &model,
        &"--data",
        &data,
        &"--split",
        &"test",
        &"--out",
        &predictions,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pointseg(&[
        &"eval",
        &"--data",
        &data,
        &"--predictions",
        &predictions,
        &"--split",
        &"test",
        &"--out",
        &report,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(report.join("report.json")).unwrap()).unwrap();
    for key in ["ACC", "F1", "Dice", "AJI", "Precision", "Recall", "CCC"] {
        assert!(value.get(key).is_some(), "{key}");
    }
    assert_eq!(value["images"].as_array().unwrap().len(), 8);
}

#[test]
fn pipeline_report_has_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"synth": {"num_images": 20, "width": 40, "height": 40, "cells": [2, 5]}, "train": {"epochs": 2}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = pointseg(&[&"pipeline", &"--config", &config, &"--out", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    for key in ["ACC", "F1", "Dice", "AJI", "Precision", "Recall", "CCC"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let record: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "pipeline");
    assert_eq!(record["config"]["train"]["epochs"], 2);
}

#[test]
fn config_errors_exit_two_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"train": {"batch_size": 0}}"#).unwrap();
    let out = pointseg(&[&"pipeline", &"--config", &config, &"--out", &dir.path().join("out")]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "train.batch_size");

    std::fs::write(&config, r#"{"encode": {"repel": {"alpha": "x"}}}"#).unwrap();
    let out = pointseg(&[&"pipeline", &"--config", &config, &"--out", &dir.path().join("out")]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["field"], "encode.repel.alpha");
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pointseg(&[
        &"encode",
        &"--data",
        &dir.path().join("missing"),
        &"--out",
        &dir.path().join("out"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "runtime");
    assert!(err["message"].as_str().unwrap().contains("manifest.json"));
}

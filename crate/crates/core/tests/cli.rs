use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codemix-rnnt"))
}

/// A tiny run rooted in `dir`, small enough to train in a few seconds.
fn write_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "dataset_dir": dir.join("data"),
        "checkpoint_dir": dir.join("ckpt"),
        "output_dir": dir.join("out"),
        "seed": 5,
        "corpus": {
            "graphemes_a": 3,
            "graphemes_b": 3,
            "raw_dim": 4,
            "words_per_utterance": [1, 2],
            "graphemes_per_word": [1, 2],
            "splits": {"train": 12, "test_a": 3, "test_b": 3, "test_mixed": 3}
        },
        "model": {
            "encoder_layers": 1,
            "encoder_hidden": 6,
            "prediction_layers": 1,
            "prediction_hidden": 6,
            "joint_hidden": 6,
            "attention": {"key_dim": 4, "ffn_hidden": 4, "look_ahead": 2}
        },
        "stages": [
            {"stage": 1, "steps": 3, "batch_size": 2},
            {"stage": 2, "steps": 3, "batch_size": 2},
            {"stage": 3, "steps": 3, "batch_size": 2}
        ],
        "baseline": {"stage": 0, "steps": 2, "batch_size": 2},
        "beam_width": 2
    });
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--config").arg(config);
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert_eq!(code(&run(&cfg, &["synth"])), 0);
    assert!(tmp.path().join("data/manifest.json").exists());
    assert!(tmp.path().join("data/provenance.json").exists());
    let again = run(&cfg, &["synth"]);
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert_eq!(code(&run(&cfg, &["synth", "--force"])), 0);
}

#[test]
fn later_stage_without_its_predecessor_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert_eq!(code(&run(&cfg, &["synth"])), 0);
    let out = run(&cfg, &["train", "--stages", "3"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("ckpt/stage3.ckpt").exists());
}

#[test]
fn oracle_eval_scores_zero_and_sweeps_look_ahead() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert_eq!(code(&run(&cfg, &["synth"])), 0);
    assert_eq!(code(&run(&cfg, &["eval", "--oracle"])), 0);
    let report = read_json(&tmp.path().join("out/eval/eval.json"));
    let splits = report["splits"].as_array().unwrap();
    assert_eq!(splits.len(), 3);
    for s in splits {
        assert_eq!(s["wer"].as_f64(), Some(0.0), "{s}");
    }
    assert!(tmp.path().join("out/eval/eval.csv").exists());

    let out = run(&cfg, &["eval", "--oracle", "--look-ahead", "0", "--look-ahead", "inf"]);
    assert_eq!(code(&out), 0);
    for stem in ["eval_la0", "eval_lainf"] {
        assert!(tmp.path().join(format!("out/eval/{stem}.json")).exists(), "{stem}");
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let t = tmp.path();
    assert_eq!(code(&run(&cfg, &["synth"])), 0);
    let out = run(&cfg, &["train", "--vanilla"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "vanilla.ckpt", "loss_stage3.csv", "loss_vanilla.csv"] {
        assert!(t.join("ckpt").join(f).exists(), "{f}");
    }
    let losses = fs::read_to_string(t.join("ckpt/loss_stage3.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);

    // Resuming from a saved stage reuses its checkpoint.
    assert_eq!(code(&run(&cfg, &["train", "--stages", "3"])), 0);

    assert_eq!(code(&run(&cfg, &["decode", "--split", "test_mixed", "--stream"])), 0);
    let nbest = fs::read_to_string(t.join("out/decode/nbest.jsonl")).unwrap();
    assert!(!nbest.trim().is_empty());
    for line in nbest.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }

    let vanilla = t.join("ckpt/vanilla.ckpt");
    assert_eq!(code(&run(&cfg, &["eval", "--checkpoint", vanilla.to_str().unwrap()])), 0);
    let base = t.join("out/eval/baseline.json");
    fs::rename(t.join("out/eval/eval.json"), &base).unwrap();
    assert_eq!(code(&run(&cfg, &["eval", "--compare", base.to_str().unwrap()])), 0);
    let report = read_json(&t.join("out/eval/eval.json"));
    assert_eq!(report["label"], "stage3");
    assert_eq!(report["werr"].as_array().map(Vec::len), Some(3));

    assert_eq!(code(&run(&cfg, &["analyze"])), 0);
    let names: Vec<String> = fs::read_dir(t.join("out/analyze"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("trajectory_")).count(), 3, "{names:?}");
    for f in ["population.csv", "density.csv", "gmm.json", "provenance.json"] {
        assert!(names.iter().any(|n| n == f), "{f}");
    }
    let prov = read_json(&t.join("out/analyze/provenance.json"));
    assert_eq!(prov["command"], "analyze");
    assert_eq!(prov["seed"], 5);
    assert_eq!(prov["checkpoint_sha256"].as_str().map(str::len), Some(64));
}

#[test]
fn error_classes_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());

    // No dataset yet.
    assert_eq!(code(&run(&cfg, &["eval", "--oracle"])), 3);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"beam_width": 0}"#).unwrap();
    assert_eq!(code(&run(&bad, &["synth"])), 2);
    fs::write(&bad, r#"{"unknown": 1}"#).unwrap();
    assert_eq!(code(&run(&bad, &["synth"])), 2);

    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);

    assert_eq!(code(&run(&cfg, &["synth"])), 0);
    let missing = tmp.path().join("nope.ckpt");
    assert_eq!(code(&run(&cfg, &["decode", "--checkpoint", missing.to_str().unwrap()])), 3);
    let garbage = tmp.path().join("garbage.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&run(&cfg, &["eval", "--checkpoint", garbage.to_str().unwrap()])), 3);
}

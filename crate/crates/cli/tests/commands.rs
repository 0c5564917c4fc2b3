use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn cuerec(dir: &Path, sets: &[String], args: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cuerec"));
    c.args(args);
    c.arg("--set").arg(format!("data_dir={}", dir.join("data").display()));
    c.arg("--set").arg(format!("output_dir={}", dir.join("out").display()));
    for s in sets {
        c.arg("--set").arg(s);
    }
    c.output().expect("binary runs")
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn tiny() -> Vec<String> {
    [
        "synth.num_users=40",
        "synth.num_items=30",
        "synth.rank=3",
        "synth.density=0.15",
        "synth.clip_seconds=3.5",
        "synth.num_tags=3",
        "wmf.rank=4",
        "wmf.sweeps=3",
        "cue.embed_dim=8",
        "cue.feature_dim=8",
        "cue.negatives=2",
        "cue.channels=[8,8,8,8,8]",
        "cue.batch_size=64",
        "cue.max_epochs=2",
        "cue.share_batch_windows=true",
        "regression.max_epochs=1",
        "tag_mlp.hidden=8",
        "tag_mlp.max_epochs=3",
    ]
    .map(String::from)
    .to_vec()
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn digests(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let h = Sha256::digest(std::fs::read(&p).unwrap()).to_vec();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), h));
            }
        }
    }
    out.sort();
    out
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn synth_census_and_identical_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(cuerec(a.path(), &tiny(), &["synth"]));
    ok(cuerec(b.path(), &tiny(), &["synth"]));
    let data = a.path().join("data");
    for f in ["triplets.tsv", "tags.tsv", "ground_truth.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_dir(data.join("audio")).unwrap().count(), 30);
    assert_eq!(digests(&data), digests(&b.path().join("data")));
}

#[test]
fn unwritable_output_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cuerec"))
        .args(["synth", "--set"])
        .arg(format!("data_dir={}", blocker.join("sub").display()))
        .args(tiny().iter().flat_map(|s| ["--set".to_string(), s.clone()]))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in ["cue.bogus=1", "cue.margin=\"wide\"", "split.train=0.9"] {
        let o = cuerec(tmp.path(), &[bad.to_string()], &["synth"]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn wmf_checkpoint_has_default_shapes_and_oracle_is_strong() {
    let tmp = tempfile::tempdir().unwrap();
    ok(cuerec(tmp.path(), &[], &["synth"]));
    ok(cuerec(tmp.path(), &[], &["train", "wmf"]));
    let ck = cuerec_core::Checkpoint::load(tmp.path().join("out/wmf.ckpt")).unwrap();
    assert_eq!(ck.model_kind, "wmf");
    assert_eq!(ck.get("users").unwrap().shape(), &[500, 50]);
    assert_eq!(ck.get("items").unwrap().shape(), &[300, 50]);

    let out = ok(cuerec(tmp.path(), &[], &["eval", "wmf", "--oracle"]));
    assert!(out.contains("popularity"));
    let r = report(tmp.path(), "wmf_rec_report.json");
    let oracle = r["reports"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["system"] == "oracle")
        .unwrap();
    assert!(oracle["mean_auc"].as_f64().unwrap() >= 0.95, "{}", oracle["mean_auc"]);
}

#[test]
fn zero_epochs_keeps_initial_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with(tiny(), &["cue.max_epochs=0"]);
    ok(cuerec(tmp.path(), &cfg, &["synth"]));
    ok(cuerec(tmp.path(), &cfg, &["train", "cue"]));
    let log = std::fs::read_to_string(tmp.path().join("out/cue_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let ck = cuerec_core::Checkpoint::load(tmp.path().join("out/cue.ckpt")).unwrap();
    let (sys, _) = cuerec_core::TrainedSystem::from_checkpoint(&ck).unwrap();
    let cfg: cuerec_core::RunConfig = serde_json::from_value(ck.config.clone()).unwrap();
    let fresh = cuerec_core::TowerParams::init_audio(&cfg.cue, 40, 128, 128).unwrap();
    let cuerec_core::TrainedSystem::Cue(p) = sys else { panic!("kind") };
    use cuerec_core::Parameterized;
    for ((n, a), (_, b)) in p.named_arrays().into_iter().zip(fresh.named_arrays()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32 as f64, "{n}");
        }
    }
}

#[test]
fn cue_train_eval_reports_and_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with(tiny(), &["cue.patience=10"]);
    ok(cuerec(tmp.path(), &cfg, &["synth"]));
    let out = ok(cuerec(tmp.path(), &cfg, &["train", "cue"]));
    assert_eq!(out.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 2);
    let log = std::fs::read_to_string(tmp.path().join("out/cue_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(tmp.path().join("out/cue_config.json").is_file());

    ok(cuerec(tmp.path(), &cfg, &["eval", "cue", "--task", "rec"]));
    let r = report(tmp.path(), "cue_rec_report.json");
    let systems: Vec<&str> = r["reports"].as_array().unwrap().iter().map(|e| e["system"].as_str().unwrap()).collect();
    assert_eq!(systems, ["cue", "popularity"]);
    for e in r["reports"].as_array().unwrap() {
        let per: Vec<f64> = e["per_unit"].as_array().unwrap().iter().map(|u| u["auc"].as_f64().unwrap()).collect();
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        assert!((mean - e["mean_auc"].as_f64().unwrap()).abs() < 1e-12);
        assert_eq!(per.len() as u64, e["n_evaluated"].as_u64().unwrap());
    }

    ok(cuerec(tmp.path(), &cfg, &["eval", "cue", "--task", "tags", "--oracle"]));
    let r = report(tmp.path(), "cue_tags_report.json");
    let systems: Vec<&str> = r["reports"].as_array().unwrap().iter().map(|e| e["system"].as_str().unwrap()).collect();
    assert_eq!(systems, ["cue", "constant", "oracle"]);
}

#[test]
fn checkpoint_kind_mismatch_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(cuerec(tmp.path(), &tiny(), &["synth"]));
    ok(cuerec(tmp.path(), &tiny(), &["train", "wmf"]));
    let wmf = tmp.path().join("out/wmf.ckpt");
    let o = cuerec(tmp.path(), &tiny(), &["eval", "cue", "--checkpoint", wmf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("validation"));
    let o = cuerec(tmp.path(), &with(tiny(), &["seed=5"]), &["eval", "wmf"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_audio_fails_content_training() {
    let tmp = tempfile::tempdir().unwrap();
    ok(cuerec(tmp.path(), &tiny(), &["synth"]));
    std::fs::remove_dir_all(tmp.path().join("data/audio")).unwrap();
    let o = cuerec(tmp.path(), &tiny(), &["train", "cue"]);
    assert_eq!(o.status.code(), Some(3));
    ok(cuerec(tmp.path(), &tiny(), &["train", "wmf"]));
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let files = ["cue.ckpt", "cue_rec_report.json", "cue_log.tsv"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(cuerec(dir, &tiny(), &["synth", "--deterministic"]));
        ok(cuerec(dir, &tiny(), &["train", "cue", "--deterministic"]));
        ok(cuerec(dir, &tiny(), &["eval", "cue", "--deterministic"]));
        runs.push(files.map(|f| std::fs::read(dir.join("out").join(f)).unwrap()));
        std::fs::remove_dir_all(dir.join("out")).unwrap();
    }
    for (k, f) in files.iter().enumerate() {
        assert!(runs[0][k] == runs[1][k], "{f} differs");
    }
}

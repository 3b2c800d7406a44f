use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cameras_cli::commands::{AttackManifest, EvalReport, ResultRecord, RunManifest, SanityReport};
use cameras_cli::io::read_map;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cameras"))
}

fn run(args: &[&str], cwd: &Path) -> i32 {
    let out = bin().args(args).current_dir(cwd).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().expect("exit code")
}

/// An untrained fixture: the commands only need a working model.
fn fixture(count: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    let n = count.to_string();
    assert_eq!(run(&["fixture", "--out", &out, "--count", &n, "--epochs", "0"], dir.path()), 0);
    dir
}

fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn records(dir: &Path) -> Vec<ResultRecord> {
    fs::read_to_string(dir.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn append_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str(extra);
    let custom = dir.join("custom.toml");
    fs::write(&custom, text).unwrap();
    custom
}

#[test]
fn saliency_writes_three_artifacts() {
    let fx = fixture(1);
    let code = run(&["saliency", "--config", "config.toml", "--images", "manifest.json", "--out", "a"], fx.path());
    assert_eq!(code, 0);
    let out = fx.path().join("a");
    let recs = records(&out);
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert!(out.join(&r.map_file).is_file());
    assert!(out.join(&r.overlay_file).is_file());
    assert!((1..=8).contains(&r.accepted_scales));
    assert_eq!(read_map(&out.join(&r.map_file)).unwrap().dims(), (64, 64));

    let manifest: RunManifest = read_json(out.join("run_manifest.json"));
    assert_eq!(manifest.config.steps, 7);
    assert_eq!(manifest.config.zeta_max, (286, 286));
    assert_eq!(manifest.processed, 1);
}

#[test]
fn zero_steps_and_default_runs_both_valid() {
    let fx = fixture(1);
    let args = ["saliency", "--config", "config.toml", "--images", "manifest.json"];
    assert_eq!(run(&[&args[..], &["--out", "n0", "--steps", "0"]].concat(), fx.path()), 0);
    assert_eq!(run(&[&args[..], &["--out", "n7"]].concat(), fx.path()), 0);
    let (a, b) = (records(&fx.path().join("n0")), records(&fx.path().join("n7")));
    assert_eq!(a[0].accepted_scales, 1);
    let ma = read_map(&fx.path().join("n0").join(&a[0].map_file)).unwrap();
    let mb = read_map(&fx.path().join("n7").join(&b[0].map_file)).unwrap();
    for m in [&ma, &mb] {
        assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn batch_of_one_hundred() {
    let fx = fixture(100);
    let code = run(
        &["saliency", "--config", "config.toml", "--images", "manifest.json", "--out", "b", "--steps", "1", "--zeta-max", "72"],
        fx.path(),
    );
    assert_eq!(code, 0);
    let recs = records(&fx.path().join("b"));
    assert_eq!(recs.len(), 100);
    let ids: Vec<_> = recs.iter().map(|r| r.image_id.clone()).collect();
    let expected: Vec<_> = (0..100).map(|i| format!("{i:04}")).collect();
    assert_eq!(ids, expected);
}

#[test]
fn eval_report_fields_and_round_trip() {
    let fx = fixture(4);
    let code = run(
        &["eval", "--config", "config.toml", "--images", "manifest.json", "--out", "e", "--steps", "1", "--zeta-max", "80"],
        fx.path(),
    );
    assert_eq!(code, 0);
    let path = fx.path().join("e").join("eval_report.json");
    let report: EvalReport = read_json(&path);
    let acc = report.pointing_accuracy.expect("annotated fixture");
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report.pointing_trials, 4);
    let again: EvalReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);
    let csv = fs::read_to_string(fx.path().join("e").join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("method,images,pointing_trials,pointing_accuracy"));
}

#[test]
fn eval_dimension_mismatch_is_recorded() {
    let fx = fixture(2);
    let ann = fx.path().join("images").join("0001.json");
    let text = fs::read_to_string(&ann).unwrap().replace("\"width\": 64", "\"width\": 65");
    fs::write(&ann, text).unwrap();
    let code = run(
        &["eval", "--config", "config.toml", "--images", "manifest.json", "--out", "e", "--method", "gradcam"],
        fx.path(),
    );
    assert_eq!(code, 3);
    let report: EvalReport = read_json(fx.path().join("e").join("eval_report.json"));
    assert_eq!(report.images, 1);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].image_id, "0001");
}

#[test]
fn sanity_strip_panels_and_control_verdict() {
    let fx = fixture(1);
    let cfg = append_config(fx.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("[sanity]\n", "[sanity]\ndepths = [1, 3]\n");
    fs::write(&cfg, text).unwrap();
    let code = run(
        &["sanity", "--config", "custom.toml", "--images", "manifest.json", "--out", "s", "--method", "edge-control"],
        fx.path(),
    );
    assert_eq!(code, 0);
    let out = fx.path().join("s");
    let strip = image::open(out.join("0000_strip.png")).unwrap();
    assert_eq!(strip.width(), 3 * 64);
    assert!(strip.height() > 64);

    let report: SanityReport = read_json(out.join("sanity_report.json"));
    assert!(!report.passed);
    let v = &report.images[0].randomization;
    assert!(!v.passed);
    assert_eq!(v.statistic, 1.0);
    let json = fs::read_to_string(out.join("0000_sanity.json")).unwrap();
    assert!(json.contains("\"threshold\": 0.3"));
    assert!(json.contains("\"evidence\""));
}

#[test]
fn attack_manifest_shape_and_reduction() {
    let fx = fixture(1);
    let cfg = append_config(fx.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("target_confidence = 0.99", "target_confidence = 0.3")
        .replace("beta = 50.0", "beta = 0.05");
    fs::write(&cfg, text).unwrap();
    let code = run(
        &["attack", "--config", "custom.toml", "--images", "manifest.json", "--out", "t", "--epsilon", "128/255", "--steps", "1", "--zeta-max", "80"],
        fx.path(),
    );
    assert_eq!(code, 0);
    let out = fx.path().join("t");
    let m: AttackManifest = read_json(out.join("attack_manifest.json"));
    assert_eq!(m.entries.len(), 1);
    let e = &m.entries[0];
    assert_eq!(e.results.len(), 2);
    for r in &e.results {
        assert!(out.join(&r.perturbed_file).is_file());
    }
    let (v, k) = (&e.results[0], &e.results[1]);
    assert!(v.success && k.success, "both attacks should reach the lowered confidence");
    let recomputed = 100.0 * (1.0 - k.l2_norm / v.l2_norm);
    assert!((recomputed - e.reduction.percent.unwrap()).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let fx = fixture(2);
    let base = ["saliency", "--images", "manifest.json", "--out", "x", "--steps", "0"];

    let bad = append_config(fx.path(), "bogus_key = 1\n");
    assert_eq!(run(&[&base[..], &["--config", bad.to_str().unwrap()]].concat(), fx.path()), 1);
    assert_eq!(run(&[&base[..], &["--config", "config.toml", "--method", "rise"]].concat(), fx.path()), 1);

    fs::write(fx.path().join("broken.json"), "{").unwrap();
    let text = fs::read_to_string(fx.path().join("model.toml")).unwrap().replace("model.json", "broken.json");
    fs::write(fx.path().join("broken.toml"), text).unwrap();
    assert_eq!(
        run(&[&base[..], &["--config", "config.toml", "--model", "broken.toml"]].concat(), fx.path()),
        2
    );

    fs::write(fx.path().join("images").join("zz.png"), b"not a png").unwrap();
    assert_eq!(run(&["saliency", "--config", "config.toml", "--images", "images", "--out", "y", "--steps", "0"], fx.path()), 3);
    let manifest: RunManifest = read_json(fx.path().join("y").join("run_manifest.json"));
    assert_eq!(manifest.processed, 2);
    assert_eq!(manifest.failures[0].image_id, "zz");

    assert_eq!(run(&[&base[..], &["--config", "config.toml"]].concat(), fx.path()), 0);
}

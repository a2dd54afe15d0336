use std::fs;
use std::path::Path;

use metastab::cli::run;
use metastab::manifest::{Manifest, MANIFEST_NAME};
use metastab::sequence::{load_sequence, save_sequence};
use metastab_core::image::Role;
use metastab_core::synth::{synthesize_pair, ProceduralScene, ShakeProfile, Source};

fn cmd(args: &[&str]) -> i32 {
    run(std::iter::once("metastab").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2_and_io_errors_exit_1() {
    assert_eq!(cmd(&["evaluate", "--bogus"]), 2);
    assert_eq!(cmd(&["frobnicate"]), 2);
    assert_eq!(cmd(&["--help"]), 0);
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope");
    assert_eq!(cmd(&["evaluate", "--original", p(&missing), "--stabilized", p(&missing), "--out", p(&d.path().join("r.json"))]), 1);
    assert_eq!(cmd(&["stabilize", "--model", p(&missing), "--video", p(&missing), "--out", p(&missing), "--adapt-samples", "lots"]), 2);
}

#[test]
fn bad_config_file_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("c.toml");
    fs::write(&c, "videos = \"many\"\n").unwrap();
    assert_eq!(cmd(&["--config", p(&c), "synth-data", "--out", p(&d.path().join("o"))]), 2);
}

#[test]
fn evaluate_identical_videos_scores_one() {
    let d = tempfile::tempdir().unwrap();
    let scene = ProceduralScene::new(64, 64, 1, 4);
    let pair = synthesize_pair(Source::Procedural { scene: &scene, frames: 34 }, &ShakeProfile { seed: 4, ..Default::default() }).unwrap();
    let v = d.path().join("v");
    save_sequence(&pair.unstable, &v).unwrap();
    let out = d.path().join("report.json");
    assert_eq!(cmd(&["evaluate", "--original", p(&v), "--stabilized", p(&v), "--out", p(&out)]), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["cropping"], 1.0);
    assert_eq!(r["distortion"], 1.0);
    assert_eq!(r["per_frame"].as_array().unwrap().len(), 34);
    let m: Manifest = serde_json::from_str(&fs::read_to_string(d.path().join(format!("report.json.{MANIFEST_NAME}"))).unwrap()).unwrap();
    assert_eq!(m.command, "evaluate");
    assert_eq!(m.inputs.len(), 2 * 34);
    assert_eq!(m.outputs.len(), 1);
}

#[test]
fn synth_data_is_deterministic_and_complete() {
    let d = tempfile::tempdir().unwrap();
    let args = |o: &Path| vec!["--seed".to_string(), "7".into(), "synth-data".into(), "--out".into(), p(o).into(), "--videos".into(), "2".into(), "--frames".into(), "12".into(), "--size".into(), "48".into()];
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(run(std::iter::once("metastab".to_string()).chain(args(&a))), 0);
    assert_eq!(run(std::iter::once("metastab".to_string()).chain(args(&b))), 0);
    let ma: Manifest = serde_json::from_str(&fs::read_to_string(a.join(MANIFEST_NAME)).unwrap()).unwrap();
    let mb: Manifest = serde_json::from_str(&fs::read_to_string(b.join(MANIFEST_NAME)).unwrap()).unwrap();
    let blobs = |m: &Manifest| m.outputs.iter().map(|h| h.blob.clone()).collect::<Vec<_>>();
    assert_eq!(blobs(&ma), blobs(&mb));
    assert_eq!(ma.seed, 7);
    let u = load_sequence(a.join("video_001/unstable"), Role::Unstable).unwrap();
    let s = load_sequence(a.join("video_001/stable"), Role::Stable).unwrap();
    assert_eq!((u.len(), s.len(), u.dims()), (12, 12, Some((48, 48))));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("video_000/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["jitter"].as_array().unwrap().len(), 12);
    assert!(truth["jitter"][3]["tx"].is_f64());
}

#[test]
fn meta_train_then_stabilize_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("data");
    assert_eq!(cmd(&["synth-data", "--out", p(&data), "--videos", "2", "--frames", "14", "--size", "32"]), 0);
    let model = d.path().join("m.mstb");
    let cfg = d.path().join("meta.toml");
    fs::write(&cfg, "outer_steps = 2\nmeta_batch = 1\npatch = 32\ncheckpoint_every = 1\n[synthesis]\nk = 1\nbase_width = 4\n").unwrap();
    assert_eq!(cmd(&["--config", p(&cfg), "meta-train", "--data", p(&data), "--out", p(&model)]), 0);
    let log = fs::read_to_string(model.with_extension("jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 0);
    let out = d.path().join("out");
    let video = data.join("video_000/unstable");
    assert_eq!(cmd(&["stabilize", "--model", p(&model), "--video", p(&video), "--out", p(&out), "--adapt-steps", "1", "--adapt-samples", "3", "--lambda-s", "10", "--lambda-p", "1"]), 0);
    assert_eq!(load_sequence(&out, Role::Synthesized).unwrap().len(), 14);
    assert!(out.join(MANIFEST_NAME).exists());
    // k must match the model
    assert_eq!(cmd(&["stabilize", "--model", p(&model), "--video", p(&video), "--out", p(&out), "--k", "2"]), 1);
}

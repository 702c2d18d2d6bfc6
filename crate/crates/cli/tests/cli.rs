use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use groundfit::pointcloud::{save_mask, save_scan, ScanFormat};
use groundfit::{Label, SegmentationMask};
use groundfit::synth::{generate, SceneObject, SceneSpec, Terrain};

fn groundfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundfit")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path, name: &str) {
    let mut spec = SceneSpec::new(Terrain::Flat { height: 0.0 }, 12.0, 4.0);
    spec.objects = vec![SceneObject::Box { center: [5.0, 2.0], size: [4.0, 1.8, 1.5] }];
    let (cloud, truth) = generate(&spec).unwrap();
    save_scan(&cloud, dir.join(format!("{name}.bin")), ScanFormat::XyzF32).unwrap();
    save_mask(&truth, dir.join(format!("{name}.label"))).unwrap();
}

#[test]
fn bad_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    small_scene(dir.path(), "a");
    let scan = dir.path().join("a.bin");
    assert_eq!(groundfit(&["--quantile", "2", "label", s(&scan)]).status.code(), Some(2));
    assert_eq!(groundfit(&["--parallel", "0", "label", s(&scan)]).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[pipeline]\nbogus = 1\n").unwrap();
    assert_eq!(groundfit(&["--config", s(&cfg), "label", s(&scan)]).status.code(), Some(2));
}

#[test]
fn partial_failure_keeps_other_scans() {
    let dir = tempfile::tempdir().unwrap();
    small_scene(dir.path(), "good");
    let broken = dir.path().join("broken.bin");
    fs::write(&broken, [0u8; 13]).unwrap();
    let out = dir.path().join("out");
    let o = groundfit(&["--out", s(&out), "label", s(&dir.path().join("good.bin")), s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("good.label").exists());
    assert!(out.join("good.stats.json").exists());
    assert!(!out.join("broken.label").exists());
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    small_scene(dir.path(), "a");
    small_scene(dir.path(), "b");
    let o = groundfit(&["eval", "--pred", s(dir.path()), "--truth", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["overall"]["miou"], 100.0);
    assert_eq!(v["overall"]["scans"], 2);
}

#[test]
fn eval_length_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, truth) = (dir.path().join("pred"), dir.path().join("truth"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&truth).unwrap();
    save_mask(&SegmentationMask::new(vec![Label::Ground; 10]), truth.join("a.label")).unwrap();
    save_mask(&SegmentationMask::new(vec![Label::Ground; 9]), pred.join("a.label")).unwrap();
    let o = groundfit(&["eval", "--pred", s(&pred), "--truth", s(&truth)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_then_label_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.toml");
    fs::write(
        &spec,
        r#"
extent = 12.0
density = 4.0
seed = 3
z_noise_sigma = 0.02
terrain = { kind = "ramp", slope_x = 0.02, slope_y = 0.0 }
objects = [{ kind = "pole", center = [4.0, 4.0], radius = 0.2, height = 3.0 }]
"#,
    )
    .unwrap();
    let scenes = dir.path().join("scenes");
    let o = groundfit(&["--out", s(&scenes), "synth", "--spec", s(&spec)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = dir.path().join("pred");
    let o = groundfit(&["--out", s(&pred), "label", s(&scenes.join("scene.bin"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = groundfit(&["eval", "--pred", s(&pred), "--truth", s(&scenes), "--scans", s(&scenes), "--table"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().filter(|l| !l.trim().is_empty()).count() >= 3, "{table}");
}

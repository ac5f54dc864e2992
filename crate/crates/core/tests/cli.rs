use std::path::Path;
use std::process::{Command, Output};

fn drivesplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivesplat")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = drivesplat(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn golden_path() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, frames, segs) = (dir.path().join("s"), dir.path().join("f"), dir.path().join("g"));
    let manifest = scene.join("manifest.json");
    ok(&["synth", "--out", p(&scene)]);
    assert!(ok(&["build", "--scene", p(&manifest), "--out", p(&frames)]).starts_with("frames=2 "));
    let fused = ok(&["fuse", "--scene", p(&manifest), "--frames", p(&frames), "--out", p(&segs)]);
    assert_eq!(fused.trim(), "builds=2 segments=1");
    assert!(segs.join("segment_000.g4d").exists());
    assert!(!segs.join("segment_001.g4d").exists());

    let render = |name: &str, threads: &str, offset: &str| {
        let out = dir.path().join(name);
        ok(&["--threads", threads, "render", "--segments", p(&segs), "--time", "0.25", "--ego-offset", offset, "--out", p(&out)]);
        std::fs::read(out).unwrap()
    };
    let a = render("a.ppm", "1", "");
    assert_eq!(a, render("b.ppm", "3", ""));
    assert_ne!(a, render("c.ppm", "2", "dy=1.0"));
    assert!(a.starts_with(b"P6\n518 280\n255\n"));

    let warp_dir = dir.path().join("w");
    let table = ok(&["warp-eval", "--scene", p(&manifest), "--target", "0", "--source", "0.5", "--out", p(&warp_dir)]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "term,value");
    assert!(rows[1].starts_with("l1,") && rows[2].starts_with("ssim,") && rows[3].starts_with("combined,"));
    assert_eq!(std::fs::read_to_string(warp_dir.join("loss.csv")).unwrap(), table);
    assert!(warp_dir.join("warped.ppm").exists() && warp_dir.join("mask.i32").exists());
}

#[test]
fn five_frames_build_once_each() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"context_times": [0, 0.125, 0.25, 0.375, 0.5]}"#).unwrap();
    let scene = dir.path().join("s");
    ok(&["synth", "--spec", p(&spec), "--out", p(&scene)]);
    let out = ok(&["fuse", "--scene", p(&scene.join("manifest.json")), "--out", p(&dir.path().join("g"))]);
    assert_eq!(out.trim(), "builds=5 segments=4");
}

#[test]
fn metrics_of_identical_sets() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s");
    ok(&["synth", "--out", p(&scene)]);
    let gt = dir.path().join("gt");
    std::fs::create_dir(&gt).unwrap();
    for e in std::fs::read_dir(scene.join("frames")).unwrap() {
        let path = e.unwrap().path();
        if path.to_string_lossy().ends_with("_image.ppm") {
            std::fs::copy(&path, gt.join(path.file_name().unwrap())).unwrap();
        }
    }
    let table = ok(&["metrics", "--pred", p(&gt), "--gt", p(&gt)]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "image,psnr,ssim");
    for row in &rows[1..] {
        assert!(row.ends_with(",99.000000,1.000000"), "{row}");
    }
    assert!(rows[3].starts_with("mean,"));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"random_static_boxes": 4, "context_times": [0, 0.5]}"#).unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["--seed", seed, "synth", "--spec", p(&spec), "--out", p(&out)]);
        std::fs::read(out.join("frames/000_CAM_FRONT_image.ppm")).unwrap()
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a, run("c", "8"));
}

#[test]
fn errors_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    for args in [
        vec!["build", "--scene", p(&missing), "--out", p(dir.path())],
        vec!["render", "--segments", p(dir.path()), "--time", "0", "--out", "x.ppm"],
        vec!["metrics", "--pred", p(dir.path()), "--gt", p(dir.path())],
        vec!["frobnicate"],
    ] {
        let out = drivesplat(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lanewise(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanewise"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = lanewise(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Nonzero exit with exactly one diagnostic line.
fn fails(args: &[&str], cwd: &Path) -> String {
    let out = lanewise(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

#[test]
fn full_workflow_from_synth_to_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.cfg"),
        "# small corpus\nsynth.clips=8\nsynth.frames=8\nforest.trees=15\nlane.offsets=off.txt\n",
    )
    .unwrap();
    let cfg = ["--config", "run.cfg"];
    let with_cfg = |args: &[&str]| -> Vec<String> {
        args.iter().chain(&cfg).map(|s| s.to_string()).collect()
    };
    let run = |args: &[&str]| {
        let v = with_cfg(args);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>(), d)
    };

    run(&["synth", "--out", "corpus"]);
    run(&["calibrate", "--annotations", "corpus/calibration.txt", "--out", "off.txt"]);
    run(&["extract", "--root", "corpus", "--partition", "all", "--out", "feat.txt"]);
    assert_eq!(fs::read_to_string(d.join("feat.txt")).unwrap().lines().count(), 64);
    for kind in ["svm", "forest"] {
        run(&["train", "--model", kind, "--features", "feat.txt", "--out", &format!("{kind}.model")]);
    }

    let stdout = run(&[
        "predict",
        "--clip",
        "corpus/clip_000",
        "--clip",
        "corpus/clip_005",
        "--model",
        "forest.model",
        "--overlay",
        "ov",
        "--detections",
        "det",
    ]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[0].starts_with("clip_000 0 "));
    assert!(lines[15].starts_with("clip_005 7 "));
    fs::write(d.join("pred.txt"), &stdout).unwrap();

    let ppm = fs::read(d.join("ov/clip_005/frame_00003.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n480 360\n255\n"));
    assert_eq!(ppm.len(), 15 + 480 * 360 * 3);
    assert!(d.join("det/clip_000.txt").exists());

    let report = run(&["evaluate", "--pred", "pred.txt", "--labels", "corpus/labels.csv"]);
    assert!(report.starts_with("overall "), "{report}");
    assert!(report.contains("confusion"));

    // switches change behavior without breaking the output format
    let raw = run(&[
        "predict",
        "--clip",
        "corpus/clip_000",
        "--model",
        "svm.model",
        "--smooth",
        "off",
        "--refine",
        "off",
        "--out",
        "raw.txt",
    ]);
    assert!(raw.is_empty());
    assert_eq!(fs::read_to_string(d.join("raw.txt")).unwrap().lines().count(), 8);
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.cfg"), "smoothing.p=3\nsmoothing.speed=2\n").unwrap();
    let err = fails(&["synth", "--out", "x", "--config", "bad.cfg"], d);
    assert!(err.contains("bad.cfg:2"), "{err}");
    fs::write(d.join("range.cfg"), "refine.rho=3\n").unwrap();
    fails(&["synth", "--out", "x", "--config", "range.cfg"], d);

    let err = fails(&["train", "--model", "tree", "--features", "f.txt", "--out", "m"], d);
    assert!(err.contains("tree"), "{err}");
    fails(&["evaluate", "--pred", "missing.txt", "--labels", "missing.csv"], d);
    fails(&["predict", "--clip", "nowhere", "--model", "m.txt"], d);
}

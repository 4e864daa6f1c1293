//! End-to-end runs of the `dsmt` binary.

use std::path::Path;
use std::process::{Command, Output};

use dsmt_core::io;
use dsmt_core::{CostModel, FeatureConfig, ScorerConfig};

fn dsmt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsmt")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = dsmt(args, cwd);
    assert!(
        out.status.success(),
        "dsmt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn report_value(report: &str, section: &str, key: &str) -> f64 {
    let body = report.split(&format!("[{section}]")).nth(1).unwrap();
    let line = body.lines().find(|l| l.starts_with(&format!("{key} ="))).unwrap();
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

/// Costs that favour exactly the true associations on noiseless data:
/// every detection scores 3, a start or end costs 1, and a link scores
/// `10 * (sum of block similarities - blocks) + 1`, which is 1 for identical
/// appearance and strongly negative otherwise.
fn hand_set_model() -> CostModel {
    let feat = FeatureConfig::default();
    let mut m = CostModel::zeros(&feat, &ScorerConfig::default());
    m.det.layers.last_mut().unwrap().biases[0] = 3.0;
    let blocks = feat.appearance.blocks;
    m.link.appearance_weights = vec![1.0; blocks];
    for w in &mut m.link.fusion.weights[..blocks] {
        *w = 10.0;
    }
    m.link.fusion.biases[0] = -10.0 * blocks as f64 + 1.0;
    m.theta_new = -1.0;
    m.theta_end = -1.0;
    m
}

#[test]
fn gen_smoke_writes_two_sequences() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--profile", "smoke", "--out", "data"], dir.path());
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["seq_0000", "seq_0001"]);
    for f in ["detections.txt", "labels.txt", "ego.txt", "camera.txt"] {
        assert!(dir.path().join("data/seq_0000").join(f).is_file(), "{f}");
    }
}

#[test]
fn noiseless_tracking_with_hand_set_model_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--profile", "smoke", "--out", "data", "--noiseless"], d);
    io::write_checkpoint(&d.join("hand.ckpt"), &hand_set_model()).unwrap();
    ok(&["track", "--data", "data", "--model", "hand.ckpt", "--out", "tracks"], d);
    ok(&["eval", "--hyp", "tracks", "--gt", "data", "--out", "report.txt"], d);
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert_eq!(report_value(&report, "total", "mota"), 1.0, "{report}");
    assert_eq!(report_value(&report, "total", "ids"), 0.0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.txt.json")).unwrap()).unwrap();
    assert_eq!(json["total"]["mota"], 1.0);
    assert_eq!(json["sequences"].as_array().unwrap().len(), 2);
}

#[test]
fn train_track_eval_bench_plot_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--profile", "smoke", "--out", "data", "--seed", "3"], d);
    std::fs::write(d.join("run.toml"), "[train]\nlr = 1e-4\niterations = 5\n").unwrap();
    for run in ["a", "b"] {
        for mode in ["end2end", "piecewise"] {
            let ckpt = format!("{run}_{mode}.ckpt");
            ok(&["train", "--data", "data", "--config", "run.toml", "--mode", mode, "--out", &ckpt], d);
        }
        ok(&["track", "--data", "data/seq_0001", "--model", &format!("{run}_end2end.ckpt"), "--out", &format!("{run}.txt")], d);
        ok(&["plot", "--tracks", &format!("{run}.txt"), "--out", &format!("{run}.svg")], d);
        ok(&["match-bench", "--data", "data", "--model", &format!("{run}_end2end.ckpt"), "--out", &format!("{run}.table")], d);
    }
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    for (a, b) in [
        ("a_end2end.ckpt", "b_end2end.ckpt"),
        ("a_piecewise.ckpt", "b_piecewise.ckpt"),
        ("a.txt", "b.txt"),
        ("a.svg", "b.svg"),
        ("a.table", "b.table"),
    ] {
        assert_eq!(read(a), read(b), "{a} vs {b}");
    }

    let log = String::from_utf8(read("a_end2end.ckpt.log")).unwrap();
    assert!(log.contains("# lr 0.0001"), "{log}");
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 5);

    let table = String::from_utf8(read("a.table")).unwrap();
    for method in ["cosine", "correlation", "bhattacharyya", "chi_square", "bbox_size", "bbox_position", "bbox_overlap", "orientation", "learned"] {
        assert!(table.lines().any(|l| l.starts_with(method)), "{method} missing from\n{table}");
    }

    ok(&["eval", "--hyp", "a.txt", "--gt", "data/seq_0001/labels.txt", "--out", "single"], d);
    let report = String::from_utf8(read("single")).unwrap();
    assert!(report_value(&report, "total", "mota") <= 1.0);
    assert!(String::from_utf8(read("a.svg")).unwrap().contains("<polyline"));
}

#[test]
fn plot_of_empty_tracks_is_a_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    ok(&["plot", "--tracks", "empty.txt", "--out", "empty.svg"], dir.path());
    let svg = std::fs::read_to_string(dir.path().join("empty.svg")).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\"") && svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("<polyline"));
}

#[test]
fn exit_codes_distinguish_usage_data_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(dsmt(&["track", "--bogus"], d).status.code(), Some(1));
    assert_eq!(dsmt(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(dsmt(&["eval", "--hyp", "missing.txt", "--gt", "missing.txt", "--out", "r"], d).status.code(), Some(2));

    ok(&["gen", "--profile", "smoke", "--out", "data"], d);
    std::fs::write(d.join("typo.toml"), "[train]\nlearning_rate = 1.0\n").unwrap();
    let out = dsmt(&["train", "--data", "data", "--config", "typo.toml", "--out", "m.ckpt"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    std::fs::write(d.join("wild.toml"), "[train]\nlr = 1e300\niterations = 5\n").unwrap();
    let out = dsmt(&["train", "--data", "data", "--config", "wild.toml", "--out", "m.ckpt"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("m.ckpt").exists());
    assert!(std::fs::read_to_string(d.join("m.ckpt.log")).unwrap().contains("# diverged"));

    // A checkpoint whose shapes disagree with the feature configuration.
    let small = FeatureConfig {
        appearance: dsmt_core::AppearanceShape { blocks: 2, block_len: 2 },
        ..FeatureConfig::default()
    };
    io::write_checkpoint(&d.join("small.ckpt"), &CostModel::zeros(&small, &ScorerConfig::default())).unwrap();
    assert_eq!(dsmt(&["track", "--data", "data", "--model", "small.ckpt", "--out", "t"], d).status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, flags) in [
        ("gen", &["--profile", "--out", "--seed", "--noiseless"][..]),
        ("train", &["--data", "--config", "--mode", "--out", "--log", "--seed"]),
        ("track", &["--data", "--model", "--config", "--out"]),
        ("eval", &["--hyp", "--gt", "--config", "--out"]),
        ("match-bench", &["--data", "--model", "--config", "--out"]),
        ("plot", &["--tracks", "--out"]),
    ] {
        let out = dsmt(&[cmd, "--help"], dir.path());
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

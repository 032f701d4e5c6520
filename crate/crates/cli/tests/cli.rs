//! End-to-end CLI behavior through the built binary: flag handling, exit
//! codes, determinism of produced trees, resume, sensor-subset rules and
//! export formats. Everything runs at 1/16 scale to stay fast.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dsc")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("dsc_cli_tests")
        .join(format!("{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TINY_CFG: &str = "
[model]
seed = 3
scale = 0.0625
kernel_mode = dense

[trunk]
channels = 4 8

[branch camera_left]
kind = camera
channels_in = 3
input = 36 48
layer = 1 2 3 3 1 1
layer = 1 4 5 5 3 3
layer = 1 4 5 5 3 1

[branch scala]
kind = lidar
channels_in = 2
input = 4 12
layer = 1 4 3 3 1 1
layer = 1 8 3 3 1 3
layer = 1 4 3 3 1 1/2
layer = 1 4 3 3 1 1/2

[train]
lr = 0.001
batch_size = 2
max_iterations = 24
lr_decay_every = 2000
eval_every = 12
seed = 5
";

const TINY_MONO_CFG: &str = "
[model]
seed = 3
scale = 0.0625
kernel_mode = dense

[trunk]
channels = 4 8

[branch camera_left]
kind = camera
channels_in = 3
input = 36 48
layer = 1 2 3 3 1 1
layer = 1 4 5 5 3 3
layer = 1 4 5 5 3 1

[train]
lr = 0.001
batch_size = 2
max_iterations = 10
lr_decay_every = 2000
eval_every = 10
seed = 5
";

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    walk(root, root, &mut files);
    files
}

fn gen_tiny(dir: &Path, n: usize) {
    run_ok(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--samples",
        &n.to_string(),
        "--seed",
        "3",
        "--scale",
        "0.0625",
    ]);
}

#[test]
fn gen_data_twice_is_byte_identical() {
    let root = tmp("gen_det");
    let a = root.join("a");
    let b = root.join("b");
    gen_tiny(&a, 5);
    gen_tiny(&b, 5);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn gen_data_zero_samples_is_a_valid_empty_dataset() {
    let root = tmp("gen_zero");
    gen_tiny(&root, 0);
    let m = dsc_cli::manifest::Manifest::read(&root).unwrap();
    assert_eq!(m.samples, 0);
    assert!(m.train.is_empty() && m.val.is_empty());
}

#[test]
fn paper_scale_emits_the_full_grid() {
    let root = tmp("gen_paper");
    run_ok(&[
        "gen-data",
        "--out",
        root.to_str().unwrap(),
        "--samples",
        "1",
        "--seed",
        "1",
        "--paper-scale",
    ]);
    let (pcdm, _) = dsc_cli::pcdm_file::read(&root.join("0/hdl64.pcdm")).unwrap();
    assert_eq!((pcdm.rows, pcdm.cols), (64, 256));
    let (scala, _) = dsc_cli::pcdm_file::read(&root.join("0/scala.pcdm")).unwrap();
    assert_eq!((scala.rows, scala.cols), (4, 192));
    let img = dsc_cli::ppm::read(&root.join("0/left.ppm")).unwrap();
    assert_eq!((img.height, img.width), (576, 768));
}

/// Train, then check: resolved config persisted and echoed, deterministic
/// logs, meta snapshot matches a later eval recompute, and resume from a
/// mid-run checkpoint reproduces the uninterrupted run bitwise.
#[test]
fn train_eval_resume_round_trip() {
    let root = tmp("train_flow");
    let data = root.join("data");
    gen_tiny(&data, 6);
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();

    let out_a = root.join("runA");
    let stdout = run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&stdout.stdout);
    assert!(text.contains("# resolved configuration"));
    assert!(out_a.join("config.resolved").exists());

    // Determinism: a second run from scratch produces identical artifacts.
    let out_b = root.join("runB");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    for f in ["train.log", "ckpt_00000024.dscw", "ckpt_00000024.mom.dscw"] {
        assert_eq!(
            std::fs::read(out_a.join(f)).unwrap(),
            std::fs::read(out_b.join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }

    // Resume: seed a fresh dir with the midpoint checkpoint only.
    let out_c = root.join("runC");
    std::fs::create_dir_all(&out_c).unwrap();
    for f in ["ckpt_00000012.dscw", "ckpt_00000012.mom.dscw", "ckpt_00000012.meta"] {
        std::fs::copy(out_a.join(f), out_c.join(f)).unwrap();
    }
    let resumed = run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&resumed.stderr).contains("resuming"));
    assert_eq!(
        std::fs::read(out_a.join("ckpt_00000024.dscw")).unwrap(),
        std::fs::read(out_c.join("ckpt_00000024.dscw")).unwrap()
    );

    // Worker-thread count must not change results.
    let out_d = root.join("runD");
    let threaded = Command::new(bin())
        .env("DSC_THREADS", "1")
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            out_d.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(threaded.status.success());
    assert_eq!(
        std::fs::read(out_a.join("ckpt_00000024.dscw")).unwrap(),
        std::fs::read(out_d.join("ckpt_00000024.dscw")).unwrap()
    );
    assert_eq!(
        std::fs::read(out_a.join("train.log")).unwrap(),
        std::fs::read(out_d.join("train.log")).unwrap()
    );

    // Eval recompute matches the checkpoint's metrics snapshot exactly.
    run_ok(&[
        "eval",
        "--ckpt",
        out_a.join("ckpt_00000024.dscw").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    let kv = std::fs::read_to_string(out_a.join("metrics.kv")).unwrap();
    let meta = std::fs::read_to_string(out_a.join("ckpt_00000024.meta")).unwrap();
    let field = |text: &str, key: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(key))
            .unwrap_or_else(|| panic!("{key} missing"))
            .split('=')
            .nth(1)
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    for key in [
        "abs_error_rel_pct",
        "sq_error_rel_pct",
        "irmse_inv_km",
        "silog",
        "return_classifier_error_pct",
    ] {
        let a = field(&kv, key);
        let b = field(&meta, key);
        assert!(
            (a - b).abs() <= 1e-9 * a.abs().max(1.0),
            "{key}: eval {a} vs snapshot {b}"
        );
    }
}

#[test]
fn mono_model_trains_on_a_full_dataset() {
    // Sensor-subset rule: the dataset carries more sensors than the model.
    let root = tmp("mono_subset");
    let data = root.join("data");
    gen_tiny(&data, 4);
    let cfg = root.join("mono.cfg");
    std::fs::write(&cfg, TINY_MONO_CFG).unwrap();
    let out = run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        root.join("run").to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[branch camera_left]"));
    assert!(!text.contains("[branch scala]"));
}

#[test]
fn missing_sensor_is_a_single_line_error_naming_it() {
    let root = tmp("missing_sensor");
    let data = root.join("data");
    gen_tiny(&data, 4);
    for i in 0..4 {
        std::fs::remove_file(data.join(i.to_string()).join("scala.pcdm")).unwrap();
    }
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        root.join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().find(|l| l.starts_with("error:")).unwrap();
    assert!(line.starts_with("error: sensor:"), "{line}");
    assert!(line.contains("scala"), "{line}");
}

fn train_tiny(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    gen_tiny(&data, 6);
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();
    let out = root.join("run");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (data, out.join("ckpt_00000024.dscw"))
}

#[test]
fn infer_exports_agree_across_formats() {
    let root = tmp("infer");
    let (data, ckpt) = train_tiny(&root);
    let sample = data.join("1");
    let ply = root.join("pred.ply");
    let csv = root.join("pred.csv");
    let pcdm = root.join("pred.pcdm");
    for out in [&ply, &csv, &pcdm] {
        run_ok(&[
            "infer",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--sample",
            sample.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    // The exported PCDM re-validates and its return count equals the PLY
    // vertex count at the same threshold.
    run_ok(&["validate-pcdm", pcdm.to_str().unwrap()]);
    let (pred, _) = dsc_cli::pcdm_file::read(&pcdm).unwrap();
    let ply_text = std::fs::read_to_string(&ply).unwrap();
    let vertex_line = ply_text
        .lines()
        .find(|l| l.starts_with("element vertex"))
        .unwrap();
    let vertices: usize = vertex_line.rsplit(' ').next().unwrap().parse().unwrap();
    assert_eq!(vertices, pred.returns());
    let csv_rows = std::fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .count();
    assert_eq!(csv_rows, vertices);

    // A threshold above every probability gives an empty but valid PLY.
    let empty = root.join("empty.ply");
    run_ok(&[
        "infer",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--sample",
        sample.to_str().unwrap(),
        "--out",
        empty.to_str().unwrap(),
        "--threshold",
        "1.000001",
    ]);
    let text = std::fs::read_to_string(&empty).unwrap();
    assert!(text.contains("element vertex 0\n"));
    assert!(text.contains("end_header\n"));

    // Unsupported extension is a usage error.
    let bad = run(&[
        "infer",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--sample",
        sample.to_str().unwrap(),
        "--out",
        root.join("pred.xyz").to_str().unwrap(),
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error: usage:"));
}

#[test]
fn full_coverage_zone_matches_overall() {
    let root = tmp("zones");
    let (data, ckpt) = train_tiny(&root);
    let zones = root.join("wide.zones");
    std::fs::write(&zones, "[zone Everything]\nmin = 0\nmax = 100000\nhfov = 360\n").unwrap();
    run_ok(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--zones",
        zones.to_str().unwrap(),
        "--out",
        root.join("report").to_str().unwrap(),
    ]);
    let kv = std::fs::read_to_string(root.join("report/metrics.kv")).unwrap();
    let overall: f64 = kv
        .lines()
        .find(|l| l.starts_with("abs_error_rel_pct"))
        .unwrap()
        .split('=')
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let zone_part = kv.split("[zone Everything]").nth(1).unwrap();
    let zone_val: f64 = zone_part
        .lines()
        .find(|l| l.starts_with("abs_error_rel_pct"))
        .unwrap()
        .split('=')
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((overall - zone_val).abs() < 1e-12);
}

#[test]
fn count_no_trunk_totals_branches_only() {
    let root = tmp("count");
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();
    let out = run_ok(&["count", "--config", cfg.to_str().unwrap(), "--no-trunk"]);
    let text = String::from_utf8_lossy(&out.stdout);
    let grab = |name: &str| -> u64 {
        text.lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("{name} missing in:\n{text}"))
            .split_whitespace()
            .last()
            .unwrap()
            .parse()
            .unwrap()
    };
    let left = grab("branch camera_left");
    let scala = grab("branch scala");
    let total = grab("total");
    assert_eq!(total, left + scala);
    assert!(!text.contains("trunk "));
}

#[test]
fn count_compare_shows_lite_strictly_smaller() {
    let root = tmp("count_cmp");
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();
    let out = run_ok(&["count", "--config", cfg.to_str().unwrap(), "--compare"]);
    let text = String::from_utf8_lossy(&out.stdout);
    let totals: Vec<u64> = text
        .lines()
        .filter(|l| l.starts_with("total"))
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 2);
    assert!(totals[1] < totals[0], "lite params {} !< dense {}", totals[1], totals[0]);
    assert!(text.contains("dense/lite ratio"));
}

#[test]
fn corrupt_pcdm_fails_validation_with_nonzero_exit() {
    let root = tmp("validate");
    let good = root.join("good.pcdm");
    let geom = dsc_core::pcdm::LidarGeometry::uniform(2, 3, 0.1, -0.1, -0.5, 0.5, 50.0);
    let mut p = dsc_core::pcdm::Pcdm::zeros(2, 3);
    p.set_return(0, 0, 5.0);
    dsc_cli::pcdm_file::write(&good, &p, &geom).unwrap();
    run_ok(&["validate-pcdm", good.to_str().unwrap()]);
    let mut bytes = std::fs::read(&good).unwrap();
    bytes[0] = b'Z';
    let bad = root.join("bad.pcdm");
    std::fs::write(&bad, bytes).unwrap();
    let out = run(&["validate-pcdm", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("invalid"));
}

#[test]
fn unknown_flags_exit_with_usage() {
    let out = run(&["gen-data", "--frobnicate", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().next().unwrap().starts_with("error: usage:"));
}

#[test]
fn grid_mismatch_is_reported_as_shape_error() {
    let root = tmp("grid_mismatch");
    let data = root.join("data");
    gen_tiny(&data, 2);
    // Desk-scale model against the 1/16-scale dataset.
    let cfg = root.join("desk.cfg");
    std::fs::write(
        &cfg,
        TINY_CFG.replace("scale = 0.0625", "scale = 0.25"),
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        root.join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error: shape:"), "{err}");
}

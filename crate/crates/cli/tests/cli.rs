use std::path::Path;
use std::process::{Command, Output};

use petalnet::imaging::{hsv_to_rgb, write_png, HsvPixel, RgbImage};

fn petalnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petalnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn assert_exit(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn frame_and_disk(size: usize, frame_hue: f64, disk_hue: f64) -> RgbImage {
    let c = size as f64 / 2.0;
    let color = |h| hsv_to_rgb(HsvPixel { hue: Some(h), saturation: 0.9, value: 0.9 });
    RgbImage::from_fn(size, size, |x, y| {
        let d = (x as f64 + 0.5 - c).hypot(y as f64 + 0.5 - c);
        if d < size as f64 * 0.3 {
            color(disk_hue)
        } else {
            color(frame_hue)
        }
    })
}

/// Trains a tiny plain model on synthetic data; returns the checkpoint path.
fn tiny_checkpoint(dir: &Path, name: &str, classes: &str, extra: &[&str]) -> String {
    let ckpt = format!("{name}.ckpt");
    let curve = format!("{name}.csv");
    let mut args = vec![
        "--quiet", "--seed", "3", "train", "--synthetic", classes, "--size", "8", "--checkpoint-out", &ckpt, "--curve-out", &curve,
    ];
    if !extra.contains(&"--epochs") {
        args.extend_from_slice(&["--epochs", "2"]);
    }
    args.extend_from_slice(extra);
    assert_exit(&petalnet(dir, &args), 0);
    ckpt
}

#[test]
fn segment_writes_one_output_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for i in 0..5 {
        let img = frame_and_disk(40, 120.0, (i as f64 * 50.0 + 200.0) % 360.0);
        write_png(input.join(format!("img{i}.png")), &img).unwrap();
    }
    let o = petalnet(dir.path(), &["--out-dir", "seg", "segment", "--in-dir", "in", "--emit-masks"]);
    assert_exit(&o, 0);
    assert_eq!(stdout(&o).lines().count(), 5);
    for i in 0..5 {
        assert!(dir.path().join(format!("seg/img{i}.seg.png")).is_file());
        assert!(dir.path().join(format!("seg/img{i}.mask.png")).is_file());
    }
}

#[test]
fn segment_uniform_only_fails_naming_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("in")).unwrap();
    write_png(dir.path().join("in/flat.png"), &RgbImage::filled(20, 20, [200, 30, 30])).unwrap();
    let o = petalnet(dir.path(), &["--out-dir", "seg", "segment", "--in-dir", "in"]);
    assert_exit(&o, 2);
    assert!(stderr(&o).contains("flat.png"));
    assert!(!dir.path().join("seg/flat.seg.png").exists());

    let o = petalnet(dir.path(), &["segment", "--in-dir", "missing"]);
    assert_exit(&o, 2);
}

#[test]
fn synth_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let o = petalnet(dir.path(), &["--out-dir", "data", "synth", "--classes", "3", "--per-class", "4", "--size", "16"]);
    assert_exit(&o, 0);
    let labels = std::fs::read_to_string(dir.path().join("data/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 13);
    assert!(labels.starts_with("filename,label,class_name\n"));

    let o = petalnet(dir.path(), &["--seed", "5", "split", "--data-dir", "data", "--manifest-out", "m.json"]);
    assert_exit(&o, 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    let sizes: Vec<usize> = ["train", "val", "test"].iter().map(|k| m[k].as_array().unwrap().len()).collect();
    assert_eq!(sizes, vec![10, 1, 1]);
}

#[test]
fn train_defaults_echo_and_curve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = petalnet(
        dir.path(),
        &["--quiet", "train", "--synthetic", "2,5", "--size", "8", "--checkpoint-out", "m.ckpt", "--curve-out", "c.csv"],
    );
    assert_exit(&o, 0);
    let out = stdout(&o);
    for needle in ["lr=0.01", "dropout=0.5", "epochs=100", "arch=plain"] {
        assert!(out.contains(needle), "{needle} missing from {out}");
    }
    let curve = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(curve.lines().count(), 101);
}

#[test]
fn train_flag_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&petalnet(dir.path(), &["train", "--synthetic", "2,5", "--epochs", "0"]), 2);
    assert_exit(&petalnet(dir.path(), &["train"]), 2);
    assert_exit(&petalnet(dir.path(), &["train", "--synthetic", "2,5", "--data-dir", "x"]), 2);
    assert_exit(&petalnet(dir.path(), &["train", "--synthetic", "2,5", "--no-such-flag"]), 2);
    assert_exit(&petalnet(dir.path(), &["train", "--data-dir", "nowhere"]), 2);
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_checkpoint(dir.path(), "a", "3,4", &[]);
    let b = tiny_checkpoint(dir.path(), "b", "3,4", &[]);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn eval_memorized_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(
        dir.path(),
        "mem",
        "2,4",
        &["--epochs", "150", "--dropout", "0", "--lr", "0.05", "--batch", "2"],
    );
    let o = petalnet(dir.path(), &["eval", "--checkpoint", &ckpt, "--split", "train", "--json-out", "r.json"]);
    assert_exit(&o, 0);
    assert!(stdout(&o).contains("top-1: 100.00%"), "{}", stdout(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    for key in ["model", "samples", "top1", "top5", "per_class", "confused"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert_eq!(r["top1"], 1.0);
}

#[test]
fn eval_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "m", "3,10", &[]);
    let o = petalnet(dir.path(), &["eval", "--checkpoint", &ckpt]);
    assert_exit(&o, 0);
    let line = stdout(&o);
    let line = line.trim_end();
    let pct = |s: &str| s.len() >= 5 && s.ends_with('%') && s[..s.len() - 1].split_once('.').is_some_and(|(_, d)| d.len() == 2);
    let parts: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(parts.len(), 4, "{line}");
    assert_eq!((parts[0], parts[2]), ("top-1:", "top-5:"));
    assert!(pct(parts[1]) && pct(parts[3]), "{line}");
    assert!(line.contains("%  top-5"));
}

#[test]
fn eval_rejects_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    let o = petalnet(dir.path(), &["eval", "--checkpoint", "bad.ckpt", "--synthetic", "2,5"]);
    assert_exit(&o, 2);
    assert!(stderr(&o).contains("corrupt checkpoint"), "{}", stderr(&o));
    assert_exit(&petalnet(dir.path(), &["eval", "--checkpoint", "absent.ckpt"]), 2);
}

#[test]
fn predict_lists_top_k_descending() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "m", "8,2", &[]);
    write_png(dir.path().join("x.png"), &frame_and_disk(32, 0.0, 200.0)).unwrap();
    for segment_first in [false, true] {
        let mut args = vec!["predict", "--checkpoint", &ckpt, "--image", "x.png", "--top", "5"];
        if segment_first {
            args.push("--segment-first");
        }
        let o = petalnet(dir.path(), &args);
        assert_exit(&o, 0);
        let out = stdout(&o);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "Predictions");
        assert_eq!(lines.len(), 6);
        let pcts: Vec<f64> = lines[1..]
            .iter()
            .map(|l| {
                let (name, p) = l.split_once('\t').expect("tab separated");
                assert!(name.starts_with("hue"));
                p.strip_suffix('%').unwrap().parse().unwrap()
            })
            .collect();
        assert!(pcts.windows(2).all(|w| w[0] >= w[1]), "{pcts:?}");
        assert!(pcts.iter().sum::<f64>() <= 100.0 + 1e-9);
    }

    write_png(dir.path().join("flat.png"), &RgbImage::filled(16, 16, [9, 9, 9])).unwrap();
    let o = petalnet(dir.path(), &["predict", "--checkpoint", &ckpt, "--image", "flat.png", "--segment-first"]);
    assert_exit(&o, 0);
    assert!(stderr(&o).contains("warning"));
    assert_exit(&petalnet(dir.path(), &["predict", "--checkpoint", &ckpt, "--image", "none.png"]), 2);
}

#[test]
fn compare_self_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_checkpoint(dir.path(), "a", "3,10", &[]);
    let b = tiny_checkpoint(dir.path(), "b", "3,10", &["--arch", "inception"]);
    let o = petalnet(dir.path(), &["compare", "--checkpoint-a", &a, "--checkpoint-b", &a, "--json-out", "same.json"]);
    assert_exit(&o, 0);
    let same: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("same.json")).unwrap()).unwrap();
    assert_eq!(same["top1_delta"], 0.0);
    assert_eq!(same["top5_delta"], 0.0);

    let o = petalnet(dir.path(), &["compare", "--checkpoint-a", &a, "--checkpoint-b", &b]);
    assert_exit(&o, 0);
    let out = stdout(&o);
    let params = out.lines().find(|l| l.starts_with("parameters")).unwrap();
    assert_eq!(params.split_whitespace().count(), 3, "{params}");

    let four = tiny_checkpoint(dir.path(), "four", "4,5", &[]);
    assert_exit(&petalnet(dir.path(), &["compare", "--checkpoint-a", &a, "--checkpoint-b", &four]), 2);
}

#[test]
fn help_documents_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, defaults) in [
        ("segment", &["36", "0.02", "0.15", "0.98", "16"][..]),
        ("train", &["100", "0.01", "32", "0.5"][..]),
        ("predict", &["5"][..]),
        ("synth", &["8", "50", "32"][..]),
        ("eval", &["test"][..]),
        ("split", &[][..]),
        ("compare", &[][..]),
    ] {
        let o = petalnet(dir.path(), &[sub, "--help"]);
        assert_exit(&o, 0);
        let text = stdout(&o);
        for d in defaults {
            assert!(text.contains(&format!("[default: {d}]")), "{sub}: {d}");
        }
    }
}

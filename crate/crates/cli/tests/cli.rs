//! Black-box tests of the `sungold` binary: exit codes, artifact layout,
//! stream formats, and determinism of every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sungold"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sungold")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Repo-root-relative path to a bundled file.
fn repo(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).to_str().unwrap().to_string()
}

/// Generate a small labeled dataset; returns (dir, images, labels, classes).
fn synth(dir: &TempDir, n: usize, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let out = dir.path().join(format!("ds-{seed}"));
    let r = run(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--size", "32",
        "--out", &path(&out)]);
    assert_eq!(code(&r), 0, "synth failed: {}", stderr(&r));
    (out.join("images"), out.join("labels"), out.join("classes.txt"))
}

/// Train a quick micro model; returns the weights file path.
fn quick_train(dir: &TempDir, images: &Path, labels: &Path, lr: &str, epochs: &str) -> PathBuf {
    let weights = dir.path().join(format!("w-{lr}-{epochs}.bin"));
    let log = dir.path().join("loss.jsonl");
    let r = run(&["train", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--images", &path(images),
        "--labels", &path(labels), "--optimizer", "adam", "--lr", lr, "--epochs", epochs,
        "--batch", "2", "--seed", "7", "--out-weights", &path(&weights), "--loss-log", &path(&log)]);
    assert_eq!(code(&r), 0, "train failed: {}", stderr(&r));
    weights
}

fn read_dir_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

// ---------------------------------------------------------------- exit codes

#[test]
fn help_and_version_exit_zero() {
    let h = run(&["--help"]);
    assert_eq!(code(&h), 0);
    for sub in ["detect", "eval", "train", "grid", "gradcheck", "synth", "render"] {
        assert!(stdout(&h).contains(sub), "help missing {sub}");
    }
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["detect", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    // no subcommand / unknown subcommand / missing required flag
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["detect"])), 1);
    // out-of-range thresholds
    let dir = TempDir::new().unwrap();
    let (images, _, classes) = synth(&dir, 1, 3);
    let weights = dir.path().join("w.bin");
    std::fs::write(&weights, []).unwrap();
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--input", &path(&images), "--score-thresh", "1.5"]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(stderr(&r).contains("error:"));
    // value unparsable by clap
    let r = run(&["train", "--lr", "fast"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 2, 4);
    // missing cfg file
    let r = run(&["detect", "--cfg", "/no/such.cfg", "--weights", "/no/w.bin",
        "--classes", &path(&classes), "--input", &path(&images)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    // weights wrong length for the graph
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, [0u8; 64]).unwrap();
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&bad),
        "--classes", &path(&classes), "--input", &path(&images)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    // class table size mismatch: 2 names for a 6-class graph
    let weights = quick_train(&dir, &images, &labels, "0", "1");
    let two = dir.path().join("two.txt");
    std::fs::write(&two, "a\nb\n").unwrap();
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&two), "--input", &path(&images)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    // empty image directory
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--input", &path(&empty)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
}

// ------------------------------------------------------------------- synth

#[test]
fn synth_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, 11), (&b, 11), (&c, 12)] {
        let r = run(&["synth", "--n", "6", "--seed", &seed.to_string(), "--size", "32",
            "--out", &path(out)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let files_a = read_dir_sorted(&a.join("images"));
    let files_b = read_dir_sorted(&b.join("images"));
    assert_eq!(files_a.len(), 6);
    assert_eq!(files_a.len(), files_b.len());
    let mut any_pixel_diff = false;
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.file_name(), fb.file_name());
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{fa:?}");
        let fc = c.join("images").join(fa.file_name().unwrap());
        if std::fs::read(fa).unwrap() != std::fs::read(&fc).unwrap() {
            any_pixel_diff = true;
        }
    }
    assert!(any_pixel_diff, "different seeds should draw different scenes");
    for (fa, fb) in read_dir_sorted(&a.join("labels")).iter().zip(read_dir_sorted(&b.join("labels"))) {
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(&fb).unwrap());
    }

    // label lines are "class cx cy w h" with normalized coordinates
    for label in read_dir_sorted(&a.join("labels")) {
        let text = std::fs::read_to_string(&label).unwrap();
        for line in text.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(parts.len(), 5, "{line}");
            let class: usize = parts[0].parse().unwrap();
            assert!(class < 6);
            for p in &parts[1..] {
                let v: f64 = p.parse().unwrap();
                assert!((0.0..=1.0).contains(&v), "{line}");
            }
        }
    }
    assert_eq!(code(&run(&["synth", "--n", "0", "--seed", "1", "--out", "/tmp/x"])), 1);
}

// ------------------------------------------------------------------- train

#[test]
fn train_writes_deterministic_artifacts() {
    let dir = TempDir::new().unwrap();
    let (images, labels, _) = synth(&dir, 12, 5);
    let w1 = dir.path().join("w1.bin");
    let w2 = dir.path().join("w2.bin");
    let log1 = dir.path().join("l1.jsonl");
    let log2 = dir.path().join("l2.jsonl");
    for (w, log) in [(&w1, &log1), (&w2, &log2)] {
        let r = run(&["train", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--images", &path(&images),
            "--labels", &path(&labels), "--optimizer", "adam", "--lr", "1e-3", "--epochs", "3",
            "--batch", "4", "--seed", "9", "--out-weights", &path(w), "--loss-log", &path(log)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        assert!(stdout(&r).contains("3 epoch"), "{}", stdout(&r));
    }
    let bytes = std::fs::read(&w1).unwrap();
    assert_eq!(bytes, std::fs::read(&w2).unwrap(), "same seed, same bytes");
    // 0.2 header with images_seen = 3 epochs × 12 images
    assert_eq!(&bytes[0..4], &0i32.to_le_bytes());
    assert_eq!(&bytes[4..8], &2i32.to_le_bytes());
    assert_eq!(i64::from_le_bytes(bytes[12..20].try_into().unwrap()), 36);

    let log_text = std::fs::read_to_string(&log1).unwrap();
    assert_eq!(std::fs::read_to_string(&log2).unwrap(), log_text);
    let mut losses = Vec::new();
    for (i, line) in log_text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["epoch"], serde_json::json!(i + 1));
        let loss = v["loss"].as_f64().unwrap();
        assert!(loss.is_finite());
        losses.push(loss);
    }
    assert_eq!(losses.len(), 3);
    assert!(losses[2] < losses[0], "{losses:?}");
}

#[test]
fn train_rejects_bad_numbers() {
    let dir = TempDir::new().unwrap();
    let (images, labels, _) = synth(&dir, 2, 6);
    let base = |lr: &str, batch: &str| -> i32 {
        code(&run(&["train", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--images", &path(&images),
            "--labels", &path(&labels), "--optimizer", "sgd", "--lr", lr, "--epochs", "1",
            "--batch", batch, "--seed", "1",
            "--out-weights", &path(&dir.path().join("w.bin")),
            "--loss-log", &path(&dir.path().join("l.jsonl"))]))
    };
    assert_eq!(base("-0.5", "2"), 1);
    assert_eq!(base("NaN", "2"), 1);
    assert_eq!(base("1e-3", "0"), 1);
}

#[test]
fn runaway_training_aborts_with_numeric_exit() {
    let dir = TempDir::new().unwrap();
    let (images, labels, _) = synth(&dir, 8, 7);
    let r = run(&["train", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--images", &path(&images),
        "--labels", &path(&labels), "--optimizer", "sgd", "--lr", "1e12", "--epochs", "3",
        "--batch", "2", "--seed", "1",
        "--out-weights", &path(&dir.path().join("w.bin")),
        "--loss-log", &path(&dir.path().join("l.jsonl"))]);
    assert_eq!(code(&r), 3, "stderr: {}", stderr(&r));
    assert!(stderr(&r).contains("non-finite"), "{}", stderr(&r));
}

// ------------------------------------------------------------------ detect

#[test]
fn detect_emits_schema_stable_deterministic_records() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 8, 8);
    let weights = quick_train(&dir, &images, &labels, "1e-3", "12");
    let out1 = dir.path().join("d1.jsonl");
    let out2 = dir.path().join("d2.jsonl");
    for out in [&out1, &out2] {
        let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
            "--classes", &path(&classes), "--input", &path(&images),
            "--score-thresh", "0.05", "--iou-thresh", "0.5", "--out", &path(out)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let text = std::fs::read_to_string(&out1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&out2).unwrap(), "detect must be deterministic");

    // serde_json::Value sorts map keys, so on-wire key order is checked
    // against the raw text instead of the parsed tree.
    let key_order = |hay: &str, keys: &[&str]| {
        let mut at = 0;
        for k in keys {
            let needle = format!("\"{k}\":");
            match hay[at..].find(&needle) {
                Some(i) => at += i + needle.len(),
                None => panic!("key {k} missing or out of order in {hay}"),
            }
        }
    };
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8, "one record per image");
    let mut total_detections = 0;
    for line in &lines {
        key_order(line, &["image", "width", "height", "detections"]);
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let o = v.as_object().unwrap();
        assert_eq!(o.len(), 4, "record schema");
        assert_eq!(o["width"], 32);
        assert_eq!(o["height"], 32);
        assert!(o["image"].as_str().unwrap().ends_with(".jpg"));
        let dets = o["detections"].as_array().unwrap();
        total_detections += dets.len();
        let mut last = f64::INFINITY;
        for (i, d) in dets.iter().enumerate() {
            let raw = line.split("\"detections\":").nth(1).unwrap();
            if i == 0 && !dets.is_empty() {
                key_order(raw, &["class_id", "class", "score", "objectness", "box", "x0", "y0", "x1", "y1"]);
            }
            let d = d.as_object().unwrap();
            assert_eq!(d.len(), 5, "detection schema");
            let b = d["box"].as_object().unwrap();
            assert_eq!(b.len(), 4, "box schema");
            let (x0, y0, x1, y1) = (
                b["x0"].as_f64().unwrap(), b["y0"].as_f64().unwrap(),
                b["x1"].as_f64().unwrap(), b["y1"].as_f64().unwrap(),
            );
            assert!(x0 >= 0.0 && y0 >= 0.0 && x1 <= 32.0 && y1 <= 32.0 && x0 <= x1 && y0 <= y1,
                "box must be clamped to image pixels: {b:?}");
            let score = d["score"].as_f64().unwrap();
            assert!(score >= 0.05 && score <= last, "descending scores");
            last = score;
            let id = d["class_id"].as_u64().unwrap() as usize;
            let names = ["Red", "Red-orange", "Orange", "Striped", "Salmon", "Green"];
            assert_eq!(d["class"].as_str().unwrap(), names[id]);
        }
    }
    assert!(total_detections > 0, "trained model at gate 0.05 should fire somewhere");
}

#[test]
fn detect_skips_unreadable_images_but_fails_when_none_work() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 3, 9);
    let weights = quick_train(&dir, &images, &labels, "0", "1");
    std::fs::write(images.join("corrupt.jpg"), b"not an image at all").unwrap();
    let out = dir.path().join("d.jsonl");
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--input", &path(&images), "--out", &path(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stderr(&r).contains("corrupt.jpg"), "should warn about the bad file: {}", stderr(&r));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);

    // a directory with only unreadable files is a data error
    let junk = dir.path().join("junk");
    std::fs::create_dir(&junk).unwrap();
    std::fs::write(junk.join("a.jpg"), b"zzz").unwrap();
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--input", &path(&junk)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn detect_single_file_input_and_letterbox_flag() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 2, 10);
    let weights = quick_train(&dir, &images, &labels, "0", "1");
    let one = read_dir_sorted(&images)[0].clone();
    for extra in [&[][..], &["--letterbox"][..]] {
        let mut args = vec!["detect", "--cfg"];
        let cfg = repo("cfg/micro-ripeness.cfg");
        let (w, c, i) = (path(&weights), path(&classes), path(&one));
        args.extend_from_slice(&[&cfg, "--weights", &w, "--classes", &c, "--input", &i,
            "--score-thresh", "0.05"]);
        args.extend_from_slice(extra);
        let r = run(&args);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        // stdout holds exactly one JSON record
        let text = stdout(&r);
        assert_eq!(text.lines().count(), 1);
        assert!(serde_json::from_str::<serde_json::Value>(text.trim()).is_ok());
    }
}

// -------------------------------------------------------------------- eval

#[test]
fn eval_writes_report_and_renders_dashes_for_untrained_models() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 6, 13);
    let untrained = quick_train(&dir, &images, &labels, "0", "1");
    let report = dir.path().join("report.json");
    let r = run(&["eval", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&untrained),
        "--classes", &path(&classes), "--images", &path(&images), "--labels", &path(&labels),
        "--report", &path(&report)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["accuracy"], serde_json::Value::Null);
    assert_eq!(v["not_detected"], 6);
    assert_eq!(v["classes"].as_array().unwrap().len(), 6);
    let table = stdout(&r);
    assert!(table.contains('-'), "dash rendering expected:\n{table}");
    assert!(table.contains("Not detected"), "{table}");
}

#[test]
fn eval_trained_model_micro_and_macro_agree_on_accuracy() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 10, 14);
    let weights = quick_train(&dir, &images, &labels, "1e-3", "15");
    let macro_report = dir.path().join("macro.json");
    let micro_report = dir.path().join("micro.json");
    for (flag, report) in [(None, &macro_report), (Some("--micro-average"), &micro_report)] {
        let mut args = vec!["eval", "--cfg"];
        let cfg = repo("cfg/micro-ripeness.cfg");
        let (w, c, i, l, rep) =
            (path(&weights), path(&classes), path(&images), path(&labels), path(report));
        args.extend_from_slice(&[&cfg, "--weights", &w, "--classes", &c, "--images", &i,
            "--labels", &l, "--score-thresh", "0.1", "--iou-thresh", "0.3", "--report", &rep]);
        if let Some(f) = flag {
            args.push(f);
        }
        let r = run(&args);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let macro_v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&macro_report).unwrap()).unwrap();
    let micro_v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&micro_report).unwrap()).unwrap();
    if macro_v["accuracy"].is_null() {
        // Too few epochs to match anything at these gates — still a valid
        // report, but the comparison below needs matches.
        return;
    }
    assert_eq!(macro_v["accuracy"], micro_v["accuracy"]);
    assert_eq!(micro_v["precision"], micro_v["accuracy"], "micro rates collapse to accuracy");
    assert_eq!(macro_v["confusion"], micro_v["confusion"]);
}

#[test]
fn eval_warns_about_unpaired_files() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 4, 15);
    let weights = quick_train(&dir, &images, &labels, "0", "1");
    // Orphan image (no label) and orphan label (no image).
    let orphan = read_dir_sorted(&images)[0].clone();
    std::fs::copy(&orphan, images.join("orphan-image.jpg")).unwrap();
    std::fs::write(labels.join("orphan-label.txt"), "0 0.5 0.5 0.25 0.25\n").unwrap();
    let report = dir.path().join("r.json");
    let r = run(&["eval", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--images", &path(&images), "--labels", &path(&labels),
        "--report", &path(&report)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let notes = stderr(&r);
    assert!(notes.contains("orphan-image"), "{notes}");
    assert!(notes.contains("orphan-label"), "{notes}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["not_detected"], 4, "only the 4 paired images evaluate");
}

// -------------------------------------------------------------------- grid

#[test]
fn grid_writes_per_cell_results_and_table() {
    let dir = TempDir::new().unwrap();
    let (images, labels, _) = synth(&dir, 16, 16);
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{
  "factors": { "learning_rate": [0.001, 0.00001], "optimizer": ["adam"] },
  "orthogonal": { "epochs": 2, "batch_size": 4, "seed": 3, "train_fraction": 0.75 },
  "thresholds": { "score_min": 0.5, "iou_min": 0.5 }
}"#,
    )
    .unwrap();
    let out = dir.path().join("grid");
    let r = run(&["grid", "--spec", &path(&spec), "--images", &path(&images),
        "--labels", &path(&labels), "--out", &path(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stderr(&r).contains("micro"), "default-cfg notice expected: {}", stderr(&r));

    for f in ["adam-1e-3.json", "adam-1e-5.json", "results.json", "table.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let cells = results.as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0]["cell"]["optimizer"], "adam");
    assert_eq!(cells[0]["loss_curve"].as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.contains("Optimizer") && table.contains("1e-5"), "{table}");
    assert_eq!(stdout(&r).contains("Optimizer"), true, "table echoed to stdout");

    // malformed spec is a data error
    std::fs::write(&spec, "{}").unwrap();
    let r = run(&["grid", "--spec", &path(&spec), "--images", &path(&images),
        "--labels", &path(&labels), "--out", &path(&out)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
}

// ------------------------------------------------------------------ render

#[test]
fn render_burns_boxes_into_copies() {
    let dir = TempDir::new().unwrap();
    let (images, labels, classes) = synth(&dir, 4, 17);
    let weights = quick_train(&dir, &images, &labels, "1e-3", "12");
    let dets = dir.path().join("d.jsonl");
    let r = run(&["detect", "--cfg", &repo("cfg/micro-ripeness.cfg"), "--weights", &path(&weights),
        "--classes", &path(&classes), "--input", &path(&images),
        "--score-thresh", "0.05", "--out", &path(&dets)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let out = dir.path().join("annotated");
    let r = run(&["render", "--detections", &path(&dets), "--images", &path(&images),
        "--out", &path(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let rendered = read_dir_sorted(&out);
    assert_eq!(rendered.len(), 4);
    for f in &rendered {
        let img = image::open(f).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
    }
    // records pointing at missing images only warn; nothing renderable errors
    let r = run(&["render", "--detections", &path(&dets), "--images",
        &path(&dir.path().join("nowhere")), "--out", &path(&out)]);
    assert_eq!(code(&r), 2);
}

// --------------------------------------------------------------- gradcheck

#[test]
fn gradcheck_command_passes_and_reports_each_suite() {
    let r = run(&["gradcheck", "--seed", "2"]);
    assert_eq!(code(&r), 0, "stderr: {}\nstdout: {}", stderr(&r), stdout(&r));
    let text = stdout(&r);
    for name in ["convolutional", "maxpool", "upsample", "route", "detection loss", "end to end"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
    assert!(text.contains("ok"), "{text}");
    assert!(text.contains("max rel err"), "{text}");
}

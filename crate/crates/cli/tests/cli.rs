use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spurious(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spurious"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// IDX files shaped like MNIST: a bright square whose position encodes the
/// label.
fn fake_mnist(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    for (prefix, n) in [("train", 60_000u32), ("t10k", 10_000)] {
        let mut images = Vec::with_capacity(16 + n as usize * 784);
        for v in [0x803u32, n, 28, 28] {
            images.extend(v.to_be_bytes());
        }
        let mut labels = Vec::with_capacity(8 + n as usize);
        labels.extend(0x801u32.to_be_bytes());
        labels.extend(n.to_be_bytes());
        for i in 0..n {
            let label = (i % 10) as usize;
            labels.push(label as u8);
            let (r0, c0) = (4 + 2 * (label / 5) * 4, 4 + 3 * (label % 5));
            for y in 0..28 {
                for x in 0..28 {
                    let on = (r0..r0 + 6).contains(&y) && (c0..c0 + 6).contains(&x);
                    images.push(if on { 255 } else { 0 });
                }
            }
        }
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
    }
}

const TINY_EXPERIMENT: &str = r#"{
  "grid": {"layers": [1], "bottleneck_maps": [2, 4], "rho": [0.0], "p_corruption": [0.1],
           "hidden_maps": 2, "master_seed": 3},
  "training": {"epochs": 1, "batch_size": 16},
  "theta": 50.0,
  "generation": {"n_iters": 3, "early_stop_tol": 0.1},
  "objectness_samples": 4,
  "classifier": {"epochs": 1, "batch_size": 16, "learning_rate": 0.001, "seed": 0, "widths": [2, 2]},
  "data": {
    "mnist_dir": "mnist",
    "symbols": {"kind": "synthetic", "per_class": 2, "seed": 1},
    "symbol_min_count": 1,
    "symbol_train": 60,
    "train_digits": 48,
    "eval_digits": 24,
    "eval_symbols": 24,
    "classifier_digits": 60
  }
}"#;

#[test]
fn no_arguments_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(spurious(&[], dir.path()).status.code(), Some(2));
    let o = spurious(&["train", "--grid", "bogus", "--run", "r"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failures_print_one_diagnostic_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = spurious(&["train", "--run", "missing"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("--config"), "{err}");
}

#[test]
fn synthetic_ingest_and_rasterize_report_exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = spurious(&["ingest", "synth", "--per-class", "3", "--output", "s.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "150 records, 50 classes");
    let o = spurious(
        &["ingest", "rasterize", "--input", "s.jsonl", "--out-dir", "idx", "--min-count", "1", "--train-count", "100"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "50 classes, 150 examples, 100 train, 50 test");
    assert_eq!(fs::metadata(dir.path().join("idx/symbols-test-labels-idx1-ubyte")).unwrap().len(), 58);
}

#[test]
fn hwrt_conversion_reads_both_point_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "latex;data\n\\alpha;\"[[{\"\"x\"\":1,\"\"y\"\":2,\"\"time\"\":0},{\"\"x\"\":3,\"\"y\"\":4,\"\"time\"\":5}]]\"\n+;\"[[[0,1],[2,1]],[[1,0],[1,2]]]\"\n";
    fs::write(dir.path().join("in.csv"), csv).unwrap();
    let o = spurious(&["ingest", "hwrt", "--input", "in.csv", "--output", "out.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "2 records, 2 classes");
    let out = fs::read_to_string(dir.path().join("out.jsonl")).unwrap();
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = spurious(&["gradcheck"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches(" ok").count(), 8, "{}", stdout(&o));
}

#[test]
fn train_resume_eval_generate_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fake_mnist(&root.join("mnist"));
    fs::write(root.join("tiny.json"), TINY_EXPERIMENT).unwrap();

    let o = spurious(&["train", "--run", "run", "--config", "tiny.json"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained 2, skipped 0, 2 records"), "{}", stdout(&o));
    let ckpt = root.join("run/checkpoints");
    let first: Vec<Vec<u8>> = {
        let mut files: Vec<_> = fs::read_dir(&ckpt).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|p| fs::read(p).unwrap()).collect()
    };
    assert_eq!(first.len(), 2);

    let o = spurious(&["train", "--run", "run"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained 0, skipped 2, 2 records"), "{}", stdout(&o));

    let o = spurious(&["status", "--run", "run"], root);
    assert_eq!(stdout(&o).trim(), "pending 0 training 0 done 2 failed 0");

    let o = spurious(&["eval", "--run", "run", "--theta", "1000"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1.0000"), "{}", stdout(&o));

    let o = spurious(&["generate", "--run", "run", "--iters", "4", "--count", "3", "--seed", "9"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("panel: "), "{}", stdout(&o));

    let o = spurious(&["report", "--run", "run", "--top", "1", "--per-row", "3"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("2 records, 2 panels"), "{}", stdout(&o));
    let csv = fs::read_to_string(root.join("run/report/scatter.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(root.join("run/report/scatter.json").is_file());

    let o = spurious(&["train", "--run", "run", "--config", "tiny.json", "--seed", "4"], root);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("different experiment config"), "{}", stderr(&o));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histoseg::synthetic::GaussianMixtureTruth;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_histoseg"));
    c.env_remove("HISTOSEG_THREADS").env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_schema(name: &str, instance: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema = read_json(&path);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn three_mode() -> GaussianMixtureTruth {
    GaussianMixtureTruth::new(vec![0.3, 0.4, 0.3], vec![-4.0, 0.0, 4.0], vec![1.0, 1.0, 1.0]).unwrap()
}

fn write_hist(dir: &Path, g: &GaussianMixtureTruth, bins: usize) -> PathBuf {
    let p = dir.join("hist.csv");
    g.density_histogram(-10.0, 10.0, bins).unwrap().write_csv(&p).unwrap();
    p
}

#[test]
fn kde_writes_normalized_model_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_hist(dir.path(), &three_mode(), 100);
    let model = dir.path().join("model.csv");
    let trace = dir.path().join("em.csv");
    let o = run(&["kde", s(&h), "-o", s(&model), "--trace", s(&trace), "--max-iterations", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv::Reader::from_path(&model).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "beta"]);
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    let dt = rows[1].0 - rows[0].0;
    let mass: f64 = rows.iter().map(|r| r.1).sum::<f64>() * dt;
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");

    let meta = read_json(&dir.path().join("model.json"));
    assert_schema("kde", &meta);
    assert_eq!(meta["iterations"], 500);
    assert_eq!(meta["converged"], false);
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 501);
}

#[test]
fn kde_error_classes_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    assert_eq!(code(&run(&["kde", "no/such/file.csv", "-o", s(&out)])), 3);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,h\n0,1\nzero,2\n").unwrap();
    assert_eq!(code(&run(&["kde", s(&bad), "-o", s(&out)])), 4);

    let h = write_hist(dir.path(), &three_mode(), 50);
    assert_eq!(code(&run(&["kde", s(&h), "-o", s(&out), "--delta=-1"])), 5);
    assert_eq!(code(&run(&["kde", s(&h), "-o", s(&dir.path().join("m.json"))])), 2);
    assert_eq!(code(&run(&["kde", s(&h)])), 2);
}

#[test]
fn both_variance_rules_run() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_hist(dir.path(), &three_mode(), 80);
    for rule in ["corrected", "as-printed"] {
        let out = dir.path().join(format!("{rule}.csv"));
        let o = run(&["kde", s(&h), "-o", s(&out), "--variance-rule", rule, "--max-iterations", "200"]);
        assert_eq!(code(&o), 0);
        assert_eq!(read_json(&out.with_extension("json"))["variance_rule"], rule);
    }
}

#[test]
fn threshold_recovers_three_mode_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let g = three_mode();
    let h = write_hist(dir.path(), &g, 100);
    let out = dir.path().join("th.json");
    let svg = dir.path().join("th.svg");
    let walk = dir.path().join("walk.csv");
    let o = run(&["threshold", s(&h), "-c", "3", "-o", s(&out), "--plot", s(&svg), "--trace", s(&walk)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_schema("threshold", &v);
    let truth = g.truth_thresholds().unwrap();
    let th: Vec<f64> = v["thresholds"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(th.len(), 2);
    for (p, t) in th.iter().zip(&truth) {
        assert!((p - t).abs() <= 2.0 * 0.2, "{p} vs {t}");
    }
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert!(svg.contains("<svg") && svg.matches("stroke-dasharray=\"4,4\"").count() == 2);
    assert!(std::fs::read_to_string(&walk).unwrap().starts_with("step,scale_offset,minima_count\n"));
}

#[test]
fn threshold_single_gaussian_two_classes_never_crashes() {
    let dir = tempfile::tempdir().unwrap();
    let g = GaussianMixtureTruth::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
    let h = write_hist(dir.path(), &g, 100);
    let out = dir.path().join("th.json");
    let o = run(&["threshold", s(&h), "-c", "2", "-o", s(&out), "--max-iterations", "2000"]);
    let c = code(&o);
    assert!(c == 0 || c == 6 || c == 8, "exit {c}: {}", String::from_utf8_lossy(&o.stderr));
    if c == 0 {
        assert_eq!(read_json(&out)["direction"], "finer");
    } else {
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn threshold_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_hist(dir.path(), &three_mode(), 100);
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let p = dir.path().join(format!("th{i}.json"));
            assert_eq!(code(&run(&["threshold", s(&h), "-c", "3", "-o", s(&p)])), 0);
            std::fs::read(p).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn validate_is_reproducible_and_schema_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = bin()
            .env("HISTOSEG_THREADS", threads)
            .args(["validate", "--cases", "6", "--bins", "100", "--samples", "2000", "--seed", "11", "-o", s(&out)])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push((std::fs::read(out.join("summary.json")).unwrap(), std::fs::read(out.join("cases.csv")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let summary: Value = serde_json::from_slice(&files[0].0).unwrap();
    assert_schema("validate-summary", &summary);
    assert_eq!(summary["n_cases"], 6);
    let rows = String::from_utf8(files[0].1.clone()).unwrap().lines().count();
    assert_eq!(rows, 7);
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let o = bin().env("HISTOSEG_THREADS", "0").args(["validate", "-o", "x"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

fn make_phantom(dir: &Path, seed: &str) -> f64 {
    let o = run(&["phantom", "-o", s(dir), "--width", "96", "--height", "96", "--slices", "4", "--seed", seed]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth = read_json(&dir.join("truth.json"));
    assert_schema("phantom", &truth);
    assert_eq!(truth["files"].as_array().unwrap().len(), 4);
    truth["ground_truth_porosity"].as_f64().unwrap()
}

#[test]
fn porosity_pipeline_on_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let stack = dir.path().join("stack");
    let truth = make_phantom(&stack, "5");
    let glob = format!("{}/slice_*.pgm", s(&stack));
    for method in ["kde", "kmeans"] {
        let out = dir.path().join(method);
        let svg = out.join("plot.svg");
        let o = run(&["porosity", &glob, "--method", method, "-o", s(&out), "--plot", s(&svg)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v = read_json(&out.join("porosity.json"));
        assert_schema("porosity", &v);
        assert_eq!(v["bins"], 256);
        let phi = v["mean_porosity"].as_f64().unwrap();
        if method == "kde" {
            assert!((phi - truth).abs() / truth <= 0.05, "{phi} vs {truth}");
        }
        let cmp = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
        assert_eq!(cmp.lines().count(), 3);
        assert!(cmp.contains("kde-scale-space") && cmp.contains("kmeans"));
        assert!(std::fs::read_to_string(out.join("porosity_histogram.csv")).unwrap().starts_with("t,h\n"));
        assert!(svg.exists());
    }
}

#[test]
fn porosity_glob_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let empty = format!("{}/*.pgm", s(dir.path()));
    assert_eq!(code(&run(&["porosity", &empty, "-o", s(&out)])), 3);
    assert_eq!(code(&run(&["porosity", "[", "-o", s(&out)])), 2);

    let bad = dir.path().join("a.pgm");
    std::fs::write(&bad, b"P2\n1 1\n255\n0\n").unwrap();
    assert_eq!(code(&run(&["porosity", s(&bad), "-o", s(&out)])), 4);
}

#[test]
fn unwritable_plot_does_not_change_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_hist(dir.path(), &three_mode(), 100);
    let out = dir.path().join("th.json");
    let svg = dir.path().join("missing-dir").join("th.svg");
    let o = run(&["threshold", s(&h), "-c", "3", "-o", s(&out), "--plot", s(&svg)]);
    assert_eq!(code(&o), 0);
    assert!(out.exists() && !svg.exists());
}

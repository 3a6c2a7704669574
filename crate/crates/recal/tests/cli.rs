use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use recal::cli;
use recal::model::{load_recalibrator, ModelFile};
use recal_core::{GaussianMixtureTask, Recalibrator};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn recal(args: &[&str]) -> Run {
    let mut argv = vec!["recal".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn labels(zeros: usize, ones: usize) -> String {
    let mut s = String::from("y\n");
    s.push_str(&"0\n".repeat(zeros));
    s.push_str(&"1\n".repeat(ones));
    s
}

fn fitted_example(dir: &Path) -> PathBuf {
    let data = write(dir, "data.csv", "z,y\n0.1,0\n0.2,1\n0.3,0\n0.4,1\n");
    let model = dir.join("model.json");
    let run = recal(&["fit", "--input", p(&data), "--bins", "2", "--out", p(&model)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    model
}

#[test]
fn fit_writes_bin_means() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_example(dir.path());
    let (h, file) = load_recalibrator(&model).unwrap();
    let Recalibrator::PiecewiseConstant(h) = h else { panic!("expected piecewise") };
    assert_eq!(h.values(), &[0.5, 0.5]);
    assert_eq!(h.counts(), &[2, 2]);
    assert_eq!(file.metadata.n, Some(4));
    assert_eq!(file.metadata.bins, Some(2));
    assert_eq!(file.metadata.source_digest.unwrap().len(), 64);
}

#[test]
fn fit_prints_bound_and_gates() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("z,y\n");
    for i in 0..1000 {
        text.push_str(&format!("{},{}\n", (i as f64 + 0.5) / 1000.0, i % 3 == 0));
    }
    let data = write(dir.path(), "data.csv", &text.replace("true", "1").replace("false", "0"));
    let run = recal(&["fit", "--input", p(&data), "--bins", "10", "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("cal_bound = 0.03383"), "{}", run.stdout);
    assert!(run.stdout.contains("conditions_met = false"));
}

#[test]
fn fit_rejects_bad_label_with_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "bad.csv", "z,y\n0.1,0\n0.2,2\n");
    let run = recal(&["fit", "--input", p(&data), "--bins", "1", "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("row 2"), "{}", run.stderr);
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn fit_on_tied_scores_is_a_fit_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ties.csv", "z,y\n0.5,0\n0.5,1\n0.5,0\n0.5,1\n");
    let run = recal(&["fit", "--input", p(&data), "--bins", "2", "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(run.code, 3, "{}", run.stderr);
}

#[test]
fn fit_auto_bins_scans_zeta() {
    let dir = tempfile::tempdir().unwrap();
    let sample = GaussianMixtureTask::new(0.5).unwrap().sample(1_000_000, 5);
    let mut text = String::with_capacity(25 * sample.len() + 4);
    text.push_str("z,y\n");
    for (z, y) in sample.scores().iter().zip(sample.labels()) {
        text.push_str(&format!("{z},{}\n", u8::from(*y)));
    }
    let data = write(dir.path(), "big.csv", &text);
    let model = dir.path().join("auto.json");
    let run = recal(&["fit", "--input", p(&data), "--bins", "auto", "--delta", "0.1", "--K", "1", "--out", p(&model)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.starts_with("fitted 76 bins on 1000000 rows"), "{}", run.stdout);

    let quiet = recal(&["fit", "--input", p(&data), "--bins", "auto", "--out", p(&model)]);
    assert!(quiet.stderr.contains("using K = 1"));
}

#[test]
fn apply_uses_right_closed_bins() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_example(dir.path());
    let input = write(dir.path(), "in.csv", "z\n0.15\n0.2\n0.25\n0.95\n");
    let out = dir.path().join("out.csv");
    let run = recal(&["apply", "--model", p(&model), "--input", p(&input), "--out", p(&out)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(fs::read_to_string(&out).unwrap(), "z,z_cal\n0.15,0.5\n0.2,0.5\n0.25,0.5\n0.95,0.5\n");

    let h = recal_core::PiecewiseRecalibrator::from_parts(
        recal_core::BinningScheme::from_edges(vec![0.0, 0.2, 1.0]).unwrap(),
        vec![0.25, 0.75],
        vec![1, 1],
    )
    .unwrap();
    let edge_model = dir.path().join("edge.json");
    ModelFile::from_recalibrator(&Recalibrator::PiecewiseConstant(h), Default::default())
        .save(&edge_model)
        .unwrap();
    recal(&["apply", "--model", p(&edge_model), "--input", p(&input), "--out", p(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "z,z_cal\n0.15,0.25\n0.2,0.25\n0.25,0.75\n0.95,0.75\n");
}

#[test]
fn apply_identity_copies_scores() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("id.json");
    ModelFile::from_recalibrator(&Recalibrator::Identity, Default::default()).save(&model).unwrap();
    let input = write(dir.path(), "in.csv", "z\n0\n0.123456789\n1\n");
    let out = dir.path().join("out.csv");
    assert_eq!(recal(&["apply", "--model", p(&model), "--input", p(&input), "--out", p(&out)]).code, 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), "z,z_cal\n0,0\n0.123456789,0.123456789\n1,1\n");
}

#[test]
fn apply_rejects_out_of_range_score() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_example(dir.path());
    let input = write(dir.path(), "in.csv", "z\n0.5\n1.5\n");
    let out = dir.path().join("out.csv");
    let run = recal(&["apply", "--model", p(&model), "--input", p(&input), "--out", p(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("row 2"), "{}", run.stderr);
    assert!(!out.exists());
}

#[test]
fn model_version_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_example(dir.path());
    let text = fs::read_to_string(&model).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
    fs::write(&model, text).unwrap();
    let input = write(dir.path(), "in.csv", "z\n0.5\n");
    let run = recal(&["apply", "--model", p(&model), "--input", p(&input), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("version"), "{}", run.stderr);
}

#[test]
fn model_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let task = GaussianMixtureTask::new(0.5).unwrap();
    let inner = recal_core::fit_recalibrator(&task.sample(5_000, 3), 17).unwrap();
    let p_labels: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let q_labels: Vec<bool> = (0..300).map(|i| i % 7 == 0).collect();
    let g = recal_core::ShiftCorrector::new(recal_core::estimate_weights(&p_labels, &q_labels).unwrap()).unwrap();
    let models = [
        Recalibrator::PiecewiseConstant(inner.clone()),
        Recalibrator::ShiftCorrector(g.clone()),
        recal_core::compose(g, inner),
        Recalibrator::Constant(0.3),
        Recalibrator::Identity,
    ];
    for (i, h) in models.iter().enumerate() {
        let path = dir.path().join(format!("m{i}.json"));
        ModelFile::from_recalibrator(h, Default::default()).save(&path).unwrap();
        let (back, _) = load_recalibrator(&path).unwrap();
        for j in 0..=10_000 {
            let z = j as f64 / 10_000.0;
            assert_eq!(h.apply(z).to_bits(), back.apply(z).to_bits(), "{} at {z}", h.kind());
        }
    }
}

#[test]
fn shift_estimates_weights() {
    let dir = tempfile::tempdir().unwrap();
    let lp = write(dir.path(), "p.csv", &labels(500, 500));
    let lq = write(dir.path(), "q.csv", &labels(90, 10));
    let out = dir.path().join("g.json");
    let run = recal(&["shift", "--labels-p", p(&lp), "--labels-q", p(&lq), "--out", p(&out)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("w = (1.8, 0.2)"), "{}", run.stdout);
    let (g, _) = load_recalibrator(&out).unwrap();
    assert!((g.apply(0.5) - 0.1).abs() < 1e-15);
    assert!((g.apply(0.9) - 0.5).abs() < 1e-15);

    let run = recal(&[
        "shift", "--labels-p", p(&lp), "--labels-q", p(&lq), "--prior-p", "0.5", "--prior-q", "0.1",
        "--risk-p", "0.001", "--bins", "10", "--out", p(&out),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("realized_bound = "));
    assert!(run.stdout.contains("apriori_bound = "));
}

#[test]
fn shift_with_identical_files_keeps_base() {
    let dir = tempfile::tempdir().unwrap();
    let base = fitted_example(dir.path());
    let lp = write(dir.path(), "p.csv", &labels(30, 70));
    let out = dir.path().join("comp.json");
    let run = recal(&["shift", "--labels-p", p(&lp), "--labels-q", p(&lp), "--base-model", p(&base), "--out", p(&out)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("w = (1, 1)"));
    let (comp, _) = load_recalibrator(&out).unwrap();
    let (h, _) = load_recalibrator(&base).unwrap();
    assert_eq!(comp.kind(), "composite");
    for j in 0..=1000 {
        let z = j as f64 / 1000.0;
        assert_eq!(comp.apply(z), h.apply(z));
    }
}

#[test]
fn shift_with_absent_class_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let lp = write(dir.path(), "p.csv", &labels(5, 5));
    let lq = write(dir.path(), "q.csv", &labels(8, 0));
    let run = recal(&["shift", "--labels-p", p(&lp), "--labels-q", p(&lq), "--out", p(&dir.path().join("g.json"))]);
    assert_eq!(run.code, 2);
    assert!(!dir.path().join("g.json").exists());
}

#[test]
fn bound_and_optbins() {
    let run = recal(&["bound", "--n", "1000", "--B", "10", "--delta", "0.1"]);
    assert_eq!(run.code, 0);
    let cal: f64 = run
        .stdout
        .lines()
        .find_map(|l| l.strip_prefix("cal_bound = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((cal - 0.033839).abs() < 1e-6);
    assert!(run.stdout.contains("sha_bound = 0.2"));

    let run = recal(&["optbins", "--n", "4", "--delta", "0.5", "--K", "0"]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.starts_with("B* = 2\n"));
    assert!(recal(&["optbins", "--n", "1000000", "--delta", "0.1", "--K", "1"]).stdout.starts_with("B* = 76\n"));

    assert_eq!(recal(&["bound", "--n", "10", "--B", "10"]).code, 2);
    assert_eq!(recal(&["bound", "--n", "1000"]).code, 2);
}

fn small_grid(dir: &Path) -> PathBuf {
    write(dir, "grid.json", r#"{"n_grid": [200, 2000], "b_grid": [4, 8], "seeds": 3}"#)
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_grid(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = recal(&["--seed", "11", "simulate", "risk-grid", "--config", p(&config), "--out-dir", p(out)]);
        assert_eq!(run.code, 0, "{}", run.stderr);
    }
    let csv = fs::read(a.join("risk_grid.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("risk_grid.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("n,B,seed,r_cal,r_sha,r,mse,cal_bound,sha_bound,risk_bound,gates_ok\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);

    let c = dir.path().join("c");
    recal(&["--seed", "12", "simulate", "risk-grid", "--config", p(&config), "--out-dir", p(&c)]);
    assert_ne!(text, fs::read_to_string(c.join("risk_grid.csv")).unwrap());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["base_seed"], 11);
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_label_shift_summary() {
    let dir = tempfile::tempdir().unwrap();
    let run = recal(&["simulate", "label-shift", "--out-dir", p(dir.path())]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let per_seed = fs::read_to_string(dir.path().join("label_shift.csv")).unwrap();
    assert!(per_seed.starts_with("method,seed,r_cal,r_sha,r,mse\n"));
    assert_eq!(per_seed.lines().count(), 1 + 4 * 10);
    let summary = fs::read_to_string(dir.path().join("label_shift_summary.csv")).unwrap();
    let methods: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods.len(), 4);
    for m in ["Composite", "Source", "LabelShift", "Target"] {
        assert!(methods.contains(&m), "{methods:?}");
    }
}

#[test]
fn simulate_opt_b_small() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "ob.json", r#"{"n_grid": [1000, 10000], "b_grid": [4, 8, 16, 32, 64], "seeds": 2}"#);
    let run = recal(&["simulate", "opt-b", "--config", p(&config), "--out-dir", p(dir.path())]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let text = fs::read_to_string(dir.path().join("opt_b.csv")).unwrap();
    assert!(text.starts_with("n,B_star_exp,B_star_theory,zeta_min\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn simulate_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "bad.json", r#"{"n_grid": [100], "bogus": 1}"#);
    assert_eq!(recal(&["simulate", "risk-grid", "--config", p(&unknown), "--out-dir", p(dir.path())]).code, 2);
    let big = write(dir.path(), "big.json", r#"{"n_grid": [10000000], "b_grid": [10], "seeds": 1}"#);
    let run = recal(&["simulate", "risk-grid", "--config", p(&big), "--out-dir", p(dir.path())]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("full-scale") || run.stderr.contains("full_scale"), "{}", run.stderr);
    assert_eq!(recal(&["simulate", "risk-grid", "--config", p(&dir.path().join("missing.json")), "--out-dir", p(dir.path())]).code, 2);
}

#[test]
fn simulate_marks_skipped_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "skip.json", r#"{"n_grid": [100], "b_grid": [6, 96], "seeds": 2}"#);
    let run = recal(&["simulate", "risk-grid", "--config", p(&config), "--out-dir", p(dir.path())]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stderr.contains("1 cell(s) skipped"), "{}", run.stderr);
    let text = fs::read_to_string(dir.path().join("risk_grid.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("100,96,") && l.contains("skip")), "{text}");
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_recal");
    let ok = Command::new(bin).args(["bound", "--n", "1000", "--B", "10"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["bound", "--n", "nope"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

//! End-to-end runs of the `loadcast` binary and artifact persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loadcast::data::io::{read_processed, write_processed};
use loadcast::data::{synth_gen, SynthParams};
use loadcast::Preset;
use loadcast_cli::artifact::ModelArtifact;
use loadcast_cli::commands::train_artifact;
use loadcast_cli::experiment::{ExperimentConfig, Method};
use tempfile::TempDir;

fn loadcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = loadcast(args);
    assert!(
        out.status.success(),
        "loadcast {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = loadcast(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/preprocess")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn small_synth(dir: &TempDir, missing: &str) -> String {
    let out = p(dir, "ds");
    ok(&["synth", "--out", &out, "--meters", "9", "--days", "50", "--seed", "3", "--missing-rate", missing]);
    out
}

#[test]
fn preprocess_fixture_matches_golden_files() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "pre");
    let stdout = ok(&[
        "preprocess",
        "--raw",
        &fixture("raw.txt"),
        "--groups",
        &fixture("groups.csv"),
        "--holidays",
        &fixture("holidays.txt"),
        "--dst",
        &fixture("dst.txt"),
        "--out",
        &out,
    ]);
    assert!(stdout.contains("9 meters kept, 1 removed"), "{stdout}");
    assert!(stdout.contains("Residential"));
    for name in ["slots.csv", "meters.csv", "observations.csv", "rejections.csv"] {
        let got = fs::read_to_string(Path::new(&out).join(name)).unwrap();
        let want = fs::read_to_string(PathBuf::from(fixture("golden")).join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn preprocess_reports_bad_timestamp_line() {
    let dir = TempDir::new().unwrap();
    let raw = p(&dir, "raw.txt");
    fs::write(&raw, "1000 19501 0.5\n1000 19502 0.4\n1000 195030 0.3\n").unwrap();
    let groups = p(&dir, "groups.csv");
    fs::write(&groups, "1000,SME\n").unwrap();
    let (status, stderr) = code(&["preprocess", "--raw", &raw, "--groups", &groups, "--out", &p(&dir, "o")]);
    assert_eq!(status, 2);
    assert!(stderr.contains("raw.txt:3:"), "{stderr}");
}

#[test]
fn synth_output_shape_and_determinism() {
    let dir = TempDir::new().unwrap();
    for run in ["a", "b"] {
        ok(&["synth", "--out", &p(&dir, run), "--meters", "60", "--days", "420", "--seed", "7", "--missing-rate", "0.1"]);
    }
    for name in ["slots.csv", "meters.csv", "observations.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap()
        );
    }
    let slots = fs::read_to_string(dir.path().join("a/slots.csv")).unwrap();
    assert_eq!(slots.lines().count() - 1, 3360);
    let rows = fs::read_to_string(dir.path().join("a/observations.csv")).unwrap().lines().count() - 1;
    let expected = 0.9 * (60 * 3360) as f64;
    assert!((rows as f64 - expected).abs() <= 0.01 * expected, "{rows} rows");
}

#[test]
fn train_forecast_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let ds = small_synth(&dir, "0.1");
    for (method, extra) in [("krr", vec!["--kernel", "kd+kt"]), ("okl", vec!["--preset", "mm2", "--rank", "3"])] {
        let model = p(&dir, &format!("model_{method}"));
        let mut args = vec![
            "train", "--dataset", &ds, "--out", &model, "--method", method, "--train-days", "40",
            "--lambda-grid", "0.01,0.1,1",
        ];
        args.extend(&extra);
        let log = ok(&args);
        assert!(log.contains("<- selected"), "{log}");

        let art = ModelArtifact::load(Path::new(&model)).unwrap();
        assert_eq!(art.manifest.selection.len(), 3);
        assert_eq!(art.manifest.dataset_digest.len(), 64);
        if method == "okl" {
            let t = &art.manifest.objective_trace;
            assert!(t.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-8)));
        }

        let fc = p(&dir, &format!("fc_{method}.csv"));
        ok(&["forecast", "--model", &model, "--dataset", &ds, "--out", &fc, "--aggregate"]);
        let text = fs::read_to_string(&fc).unwrap();
        // 10 test days of 8 slots for 9 meters, plus one total per slot
        assert_eq!(text.lines().count() - 1, 80 * 10);
        assert!(text.contains("__total__"));

        let rep = p(&dir, &format!("rep_{method}"));
        let table = ok(&["evaluate", "--forecast", &fc, "--dataset", &ds, "--out", &rep]);
        assert!(table.contains("All") && table.contains("SME"));
        let csv = fs::read_to_string(Path::new(&rep).join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4 * 2);
    }
}

#[test]
fn evaluate_naive_and_perfect_forecasts() {
    let dir = TempDir::new().unwrap();
    let ds_dir = small_synth(&dir, "0.1");
    let ds = read_processed(Path::new(&ds_dir)).unwrap();
    let mut zero = String::from("slot_index,meter_id,forecast\n");
    let mut perfect = zero.clone();
    for (i, s) in ds.slots().iter().enumerate() {
        for (j, m) in ds.meters().iter().enumerate() {
            zero.push_str(&format!("{},{},0\n", s.index, m.id));
            let v = ds.observations().get(i, j).unwrap_or(0.0);
            perfect.push_str(&format!("{},{},{v}\n", s.index, m.id));
        }
    }
    for (name, text, expected) in [("zero", zero, "1"), ("perfect", perfect, "0")] {
        let fc = p(&dir, &format!("{name}.csv"));
        fs::write(&fc, text).unwrap();
        let out = p(&dir, name);
        ok(&["evaluate", "--forecast", &fc, "--dataset", &ds_dir, "--out", &out]);
        let csv = fs::read_to_string(Path::new(&out).join("report.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if name == "zero" && f[1] == "MAPE" {
                assert_eq!(f[2], "100", "{line}");
            } else {
                assert_eq!(f[2], expected, "{line}");
            }
        }
    }
}

#[test]
fn evaluate_lists_missing_cells() {
    let dir = TempDir::new().unwrap();
    let ds = small_synth(&dir, "0");
    let fc = p(&dir, "partial.csv");
    fs::write(&fc, "slot_index,meter_id,forecast\n0,R0001,1.0\n0,R0002,1.0\n1,R0001,1.0\n").unwrap();
    let (status, stderr) = code(&["evaluate", "--forecast", &fc, "--dataset", &ds, "--out", &p(&dir, "r")]);
    assert_eq!(status, 2);
    assert!(stderr.contains("1 observed cells have no forecast") && stderr.contains("(1, R0002)"), "{stderr}");
}

#[test]
fn forecast_rejects_foreign_dataset() {
    let dir = TempDir::new().unwrap();
    let ds = small_synth(&dir, "0");
    let model = p(&dir, "m");
    ok(&["train", "--dataset", &ds, "--out", &model, "--preset", "am1", "--lambda-grid", "1", "--train-days", "40"]);
    let other = p(&dir, "other");
    ok(&["synth", "--out", &other, "--group-sizes", "1,1,1", "--days", "20"]);
    let (status, stderr) = code(&["forecast", "--model", &model, "--dataset", &other, "--out", &p(&dir, "f.csv")]);
    assert_eq!(status, 2);
    assert!(stderr.contains("not in the dataset"), "{stderr}");
}

#[test]
fn exit_codes_for_usage_errors() {
    let dir = TempDir::new().unwrap();
    let ds = small_synth(&dir, "0");
    let out = p(&dir, "m");
    assert_eq!(code(&["frobnicate"]).0, 1);
    assert_eq!(code(&["synth", "--out", &out, "--group-sizes", "1,2"]).0, 1);
    assert_eq!(code(&["train", "--dataset", &ds, "--out", &out]).0, 1);
    assert_eq!(code(&["train", "--dataset", &ds, "--out", &out, "--preset", "mm2", "--method", "okl", "--rank", "10"]).0, 1);
    assert_eq!(code(&["train", "--dataset", &ds, "--out", &out, "--kernel", "kt(sigma=0)"]).0, 1);
    assert_eq!(code(&["train", "--dataset", &ds, "--out", &out, "--preset", "mm2", "--lambda-grid", "0,1"]).0, 1);
    assert_eq!(code(&["train", "--dataset", &p(&dir, "missing"), "--out", &out, "--preset", "mm2"]).0, 2);
    assert_eq!(code(&["--help"]).0, 0);
}

#[test]
fn saved_models_predict_bit_identically() {
    let dir = TempDir::new().unwrap();
    let ds = synth_gen(&SynthParams {
        meters_per_group: [3, 3, 2],
        n_days: 40,
        missing_rate: 0.15,
        seed: 12,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let query = ds.points();
    for (method, rank) in [(Method::Krr, None), (Method::Okl, Some(4))] {
        let mut cfg = ExperimentConfig::new(Preset::Sam2.kernel(), method, rank);
        cfg.lambda_grid = vec![0.1, 1.0];
        cfg.train_days = 30;
        let art = train_artifact(&ds, &cfg, "digest".into()).unwrap();
        let before = art.model.predict(&query).unwrap();
        let path = dir.path().join(method.to_string());
        art.save(&path).unwrap();
        let loaded = ModelArtifact::load(&path).unwrap();
        assert_eq!(loaded.manifest, art.manifest);
        let after = loaded.model.predict(&query).unwrap();
        assert!(before == after, "{method} predictions changed after reload");
    }
}

#[test]
fn corrupted_payload_is_rejected() {
    let dir = TempDir::new().unwrap();
    let ds = synth_gen(&SynthParams {
        meters_per_group: [2, 2, 2],
        n_days: 20,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let mut cfg = ExperimentConfig::new(Preset::Mm2.kernel(), Method::Okl, Some(2));
    cfg.lambda_grid = vec![1.0];
    cfg.train_days = 15;
    let path = dir.path().join("m");
    train_artifact(&ds, &cfg, String::new()).unwrap().save(&path).unwrap();
    let b = path.join("B.f64");
    let bytes = fs::read(&b).unwrap();
    fs::write(&b, &bytes[..bytes.len() - 8]).unwrap();
    assert!(ModelArtifact::load(&path).is_err());
}

#[test]
fn planted_okl_beats_meter_mean_baseline() {
    let dir = TempDir::new().unwrap();
    let syn = synth_gen(&SynthParams {
        meters_per_group: [4, 4, 4],
        n_days: 120,
        rank: 1,
        noise_sigma: 0.05,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let ds_dir = dir.path().join("ds");
    write_processed(&syn.dataset, &ds_dir).unwrap();
    let ds_s = ds_dir.to_string_lossy().into_owned();
    let model = p(&dir, "m");
    ok(&[
        "train", "--dataset", &ds_s, "--out", &model, "--preset", "mm2", "--method", "okl", "--rank", "1",
        "--train-days", "90",
    ]);
    let fc = p(&dir, "f.csv");
    ok(&["forecast", "--model", &model, "--dataset", &ds_s, "--out", &fc]);
    let rep = p(&dir, "rep");
    ok(&["evaluate", "--forecast", &fc, "--dataset", &ds_s, "--out", &rep, "--groups", "all"]);
    let csv = fs::read_to_string(Path::new(&rep).join("report.csv")).unwrap();
    let okl: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();

    // constant forecast of each meter's training mean
    let ds = &syn.dataset;
    let n_fit = 90 * 8;
    let mut text = String::from("slot_index,meter_id,forecast\n");
    for (j, m) in ds.meters().iter().enumerate() {
        let vals: Vec<f64> = (0..n_fit).filter_map(|i| ds.observations().get(i, j)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        for s in &ds.slots()[n_fit..] {
            text.push_str(&format!("{},{},{mean}\n", s.index, m.id));
        }
    }
    let base_fc = p(&dir, "base.csv");
    fs::write(&base_fc, text).unwrap();
    let base_rep = p(&dir, "base");
    ok(&["evaluate", "--forecast", &base_fc, "--dataset", &ds_s, "--out", &base_rep, "--groups", "all"]);
    let csv = fs::read_to_string(Path::new(&base_rep).join("report.csv")).unwrap();
    let base: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(okl < base, "OKL NMAE {okl} vs baseline {base}");
}

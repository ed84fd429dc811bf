use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use medconf::artifact::ModelArtifact;
use medconf::io::{parse_value, read_dataset};
use medconf_core::rng::{derive_seed, stream};
use medconf_core::{
    BackendConfig, ConformalModel, Engine, LabeledDataset, ScoreConfig, ScorePair, SplitIndices, SyntheticDistribution,
};
use tempfile::TempDir;

fn medconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medconf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn median1d_on_one_to_hundred() {
    let dir = TempDir::new().unwrap();
    // shuffled so the sort is exercised
    let mut text = String::from("y\n");
    for i in 0..100 {
        text += &format!("{}\n", (i * 37) % 100 + 1);
    }
    let input = write(&dir, "y.csv", &text);
    let out = medconf(&["median1d", "--input", path_str(&input), "--alpha", "0.05"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "[40, 61]");

    let out = medconf(&["median1d", "--y", "3,1,2", "--alpha", "0.05", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["lo"], "-inf");
    assert_eq!(v["hi"], "inf");
}

#[test]
fn tiny_calibration_set_warns_and_predicts_the_real_line() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "tiny.csv", "x,y\n0.1,1\n0.2,2\n0.3,3\n");
    let model = dir.path().join("m.json");
    let out = medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--score",
        "zero",
        "--method",
        "median",
        "--n1",
        "1",
        "--out",
        path_str(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "n1 = 1, n2 = 2, thresholds = (-inf, inf)");
    let out = medconf(&["predict", "--model", path_str(&model), "--x", "0.5"]);
    assert_eq!(stdout(&out).trim(), "[-inf, inf]");
}

#[test]
fn sampled_dump_recalibrates_to_the_in_memory_thresholds() {
    let dir = TempDir::new().unwrap();
    let data_path = dir.path().join("pdelta.csv");
    let out = medconf(&[
        "sample",
        "--dist",
        "pdelta",
        "--delta",
        "0.01",
        "--n",
        "400",
        "--seed",
        "5",
        "--out",
        path_str(&data_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let model_path = dir.path().join("m.json");
    let out = medconf(&[
        "calibrate",
        "--input",
        path_str(&data_path),
        "--score",
        "zero",
        "--method",
        "median",
        "--seed",
        "5",
        "--out",
        path_str(&model_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let expected_data = SyntheticDistribution::p_delta(0.01)
        .unwrap()
        .sample_dataset(400, &mut stream(5, &[0]));
    let read = read_dataset(std::fs::File::open(&data_path).unwrap(), None).unwrap();
    assert_eq!(read.data, expected_data);
    let split = SplitIndices::random(400, 200, &mut stream(5, &[0])).unwrap();
    let expected =
        ConformalModel::fit_median_interval(&expected_data, &split, &ScoreConfig::Zero, 0.1, derive_seed(5, &[1]))
            .unwrap();
    let artifact = ModelArtifact::load(&model_path).unwrap();
    assert_eq!(artifact.model.thresholds(), expected.thresholds());
    assert_eq!(artifact.model, expected);
}

#[test]
fn nan_cell_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.csv", "x,y\n1,2\n3,NaN\n");
    let out = medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--out",
        path_str(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("row 2, column `y`"), "{}", stderr(&out));
}

#[test]
fn zero_centered_residual_model() {
    let dir = TempDir::new().unwrap();
    let flat = LabeledDataset::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], 1).unwrap();
    let center = BackendConfig::Knn { k: 2 }.fit(&flat, 0).unwrap();
    let model = ConformalModel::from_parts(
        ScorePair::residual(Arc::new(center)),
        Engine::Median {
            alpha: 0.1,
            half_width: 1.0,
        },
        1,
        3,
        10,
    )
    .unwrap();
    let path = dir.path().join("m.json");
    ModelArtifact::new(model, vec!["x".into()], "y".into())
        .save(&path)
        .unwrap();
    let out = medconf(&["predict", "--model", path_str(&path), "--x", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "[-1, 1]\n");
}

#[test]
fn frozen_predictions_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let d = SyntheticDistribution::Dist2;
    let data_path = dir.path().join("d.csv");
    medconf(&[
        "sample",
        "--dist",
        "p2",
        "--n",
        "300",
        "--seed",
        "2",
        "--out",
        path_str(&data_path),
    ]);
    let model_path = dir.path().join("m.json");
    let out = medconf(&[
        "calibrate",
        "--input",
        path_str(&data_path),
        "--score",
        "cdf",
        "--backend",
        "forest",
        "--trees",
        "10",
        "--seed",
        "2",
        "--out",
        path_str(&model_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let mut rng = stream(77, &[]);
    let queries: Vec<Vec<f64>> = (0..40).map(|_| d.sample_covariate(&mut rng)).collect();
    let mut text = String::from("x0\n");
    for q in &queries {
        text += &format!("{}\n", q[0]);
    }
    let query_path = write(&dir, "q.csv", &text);
    let out = medconf(&[
        "predict",
        "--model",
        path_str(&model_path),
        "--input",
        path_str(&query_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let data = d.sample_dataset(300, &mut stream(2, &[0]));
    let split = SplitIndices::random(300, 150, &mut stream(2, &[0])).unwrap();
    let score = ScoreConfig::Cdf {
        backend: BackendConfig::Forest(medconf_core::ForestConfig {
            trees: 10,
            ..Default::default()
        }),
    };
    let spec = medconf_core::QuantileSpec::new(0.5, 0.1, 0.05, 0.05).unwrap();
    let model = ConformalModel::fit_quantile_interval(&data, &split, &score, spec, derive_seed(2, &[1])).unwrap();
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lo,hi"));
    for (q, line) in queries.iter().zip(lines) {
        let (lo, hi) = line.split_once(',').unwrap();
        let (elo, ehi) = model.predict(q).unwrap().bounds().unwrap();
        assert_eq!(parse_value(lo).unwrap().to_bits(), elo.to_bits());
        assert_eq!(parse_value(hi).unwrap().to_bits(), ehi.to_bits());
    }
}

#[test]
fn empty_query_file_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.json");
    let input = write(&dir, "d.csv", "x,y\n1,1\n2,2\n3,3\n4,4\n");
    medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--score",
        "zero",
        "--out",
        path_str(&model),
    ]);
    let empty = write(&dir, "q.csv", "");
    let out = medconf(&["predict", "--model", path_str(&model), "--input", path_str(&empty)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "");
}

#[test]
fn artifact_version_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.json");
    let input = write(&dir, "d.csv", "x,y\n1,1\n2,2\n3,3\n4,4\n");
    medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--score",
        "zero",
        "--out",
        path_str(&model),
    ]);
    let text = std::fs::read_to_string(&model)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 9");
    std::fs::write(&model, text).unwrap();
    let out = medconf(&["predict", "--model", path_str(&model), "--x", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("format version 9"), "{}", stderr(&out));
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.json");
    let input = write(&dir, "d.csv", "x,y\n1,1\n2,2\n3,3\n4,4\n");
    medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--score",
        "zero",
        "--out",
        path_str(&model),
    ]);
    let out = medconf(&["predict", "--model", path_str(&model), "--x", "1,2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_ids_are_enumerated() {
    let out = medconf(&["sample", "--dist", "p9"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for id in ["p1", "p2", "p3", "pdelta", "pdelta-q"] {
        assert!(err.contains(id), "{err}");
    }
    let out = medconf(&["evaluate", "--score", "median"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("residual, normalized, cqr, cdf, log, zero, randomized"));
}

#[test]
fn log_score_on_signed_data_fails_with_data_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "d.csv", "x,y\n1,1\n2,-2\n3,3\n4,4\n");
    let out = medconf(&[
        "calibrate",
        "--input",
        path_str(&input),
        "--score",
        "log",
        "--backend",
        "knn",
        "--k",
        "1",
        "--n1",
        "2",
        "--out",
        path_str(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("not strictly positive"));
}

#[test]
fn evaluate_echo_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a.csv");
    let out = medconf(&[
        "evaluate",
        "--dist",
        "p3,pdelta",
        "--score",
        "residual,cdf",
        "--method",
        "quantile,qrf",
        "--backend",
        "knn",
        "--k",
        "20",
        "--n",
        "200",
        "--trials",
        "3",
        "--test-n",
        "40",
        "--probes",
        "5",
        "--seed",
        "11",
        "--out",
        path_str(&first),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&first).unwrap();
    assert!(text.starts_with("# config: {"));
    assert_eq!(text.lines().count(), 2 + 2 * 3);

    let second = dir.path().join("b.csv");
    let out = medconf(&[
        "evaluate",
        "--config",
        path_str(&first),
        "--jobs",
        "2",
        "--out",
        path_str(&second),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&second).unwrap(), text);

    let out = medconf(&["evaluate", "--config", path_str(&first), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 6);
}

#[test]
fn failed_trials_exit_with_threshold_code() {
    let out = medconf(&[
        "evaluate",
        "--dist",
        "p1",
        "--score",
        "log",
        "--backend",
        "knn",
        "--k",
        "5",
        "--n",
        "100",
        "--trials",
        "2",
        "--test-n",
        "5",
        "--probes",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout(&out).contains("p1,log,quantile,knn"));
}

#[test]
fn overcoverage_and_sharpness_run() {
    let out = medconf(&[
        "overcoverage",
        "--dist",
        "p2,p3",
        "--n",
        "400",
        "--trials",
        "5",
        "--test-n",
        "50",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["result"]["n2"], 21);
        assert_eq!(row["result"]["infinite"], 0);
    }
    let out = medconf(&["sharpness", "--n", "400", "--trials", "4", "--test-n", "50"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().nth(1) == Some("delta,n,alpha,trials,test_n,coverage,se"));
}

#[test]
fn audit_reports_every_floor() {
    let out = medconf(&[
        "audit",
        "--dist",
        "p2",
        "--score",
        "residual",
        "--method",
        "median,quantile",
        "--backend",
        "knn",
        "--n",
        "400",
        "--trials",
        "4",
        "--test-n",
        "100",
        "--probes",
        "0",
    ]);
    let text = stdout(&out);
    let checks: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(checks.len(), 2 + 2 + 3, "{text}");
    assert!(checks.iter().any(|l| l.starts_with("p2,quantile/residual,lower,")));
}

#[test]
fn sampled_dist2_shape() {
    let out = medconf(&["sample", "--dist", "p2", "--n", "10000", "--seed", "1"]);
    assert!(out.status.success());
    let data = read_dataset(out.stdout.as_slice(), None).unwrap().data;
    assert_eq!(data.len(), 10000);
    for (x, y) in data.iter() {
        let f = medconf_core::distributions::dist2_f(x[0]);
        assert!(y > 0.0 && y <= f, "{x:?} {y}");
    }
    let again = medconf(&["sample", "--dist", "p2", "--n", "10000", "--seed", "1"]);
    assert_eq!(again.stdout, out.stdout);
}

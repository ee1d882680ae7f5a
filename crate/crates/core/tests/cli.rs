use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use pkm::datasets::{load_csv, CsvOptions};

fn pkm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkm"))
        .args(args)
        .env("PKM_OUTPUT_DIR", dir)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Drops wall-clock fields so two runs can be compared.
fn strip_times(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| k != "wall_time" && k != "elapsed");
            map.values_mut().for_each(strip_times);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_times),
        _ => {}
    }
}

#[test]
fn cluster_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let run = pkm(
            dir.path(),
            &[
                "cluster",
                "--dataset",
                "iris",
                "--method",
                "pkm-msagp",
                "--seeds",
                "3",
                "--jobs",
                "2",
                "-o",
                out.to_str().unwrap(),
            ],
        );
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        let mut v = read_json(&out);
        strip_times(&mut v);
        reports.push(v);
    }
    assert_eq!(reports[0], reports[1]);
    let best = &reports[0]["best"];
    let j = best["objective"].as_f64().unwrap();
    assert!((j - 78.8557).abs() < 1e-3, "objective {j}");
    assert_eq!(best["labels"].as_array().unwrap().len(), 150);
    assert!(best["metrics"]["nmi"].as_f64().unwrap() > 0.7);
    assert_eq!(reports[0]["runs"].as_array().unwrap().len(), 3);
    assert_eq!(reports[0]["config"]["nmi_normalization"], "geometric_mean");
}

#[test]
fn default_output_goes_to_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let run = pkm(
        dir.path(),
        &["cluster", "--artificial", "3", "--method", "kmeanspp"],
    );
    assert!(run.status.success());
    let v = read_json(&dir.path().join("cluster-artificial.json"));
    assert_eq!(v["dataset"]["n_points"], 310);
    assert_eq!(v["config"]["k"], 4);
}

#[test]
fn compare_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = pkm(
        dir.path(),
        &[
            "compare",
            "--dataset",
            "iris",
            "--methods",
            "pkm-fmsagp,kmeanspp,fcm@2",
            "--seeds",
            "2",
        ],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = read_json(&dir.path().join("compare-iris.json"));
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows
        .iter()
        .map(|r| r["algorithm"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["pkm-fmsagp", "kmeanspp", "fcm@2"]);
    let csv = std::fs::read_to_string(dir.path().join("compare-iris.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn robustness_counts_exact_recoveries() {
    let dir = tempfile::tempdir().unwrap();
    let run = pkm(
        dir.path(),
        &[
            "robustness",
            "--artificial",
            "0",
            "--methods",
            "kmeanspp,fcm@2",
            "--runs",
            "10",
            "--jobs",
            "2",
        ],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = read_json(&dir.path().join("robustness-artificial.json"));
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["runs"], 10);
        assert!(row["correct"].as_u64().unwrap() <= 10);
    }
    assert!(dir.path().join("robustness-artificial.csv").exists());
}

#[test]
fn trace_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let run = pkm(
        dir.path(),
        &[
            "trace",
            "--dataset",
            "iris",
            "--methods",
            "pkm-msagp,pkm-agp@0.1",
        ],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let path = dir.path().join("trace-iris.csv");
    let opts = CsvOptions {
        has_header: true,
        label_column: Some(4),
        ..CsvOptions::default()
    };
    let trace = load_csv(&path, &opts).unwrap();
    assert_eq!(trace.dim(), 4);
    assert_eq!(trace.label_names(), ["pkm-msagp", "pkm-agp@0.1"]);
    let labels = trace.labels().unwrap();
    for alg in 0..2 {
        let objective: Vec<f64> = trace
            .rows()
            .zip(labels)
            .filter(|(_, &l)| l == alg)
            .map(|(r, _)| r[1])
            .collect();
        assert!(objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn loads_user_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("points.txt");
    std::fs::write(&data, "0 0 a\n0 1 a\n1 0 a\n9 9 b\n9 8 b\n8 9 b\n").unwrap();
    let run = pkm(
        dir.path(),
        &[
            "cluster",
            "--data",
            data.to_str().unwrap(),
            "--no-header",
            "--delimiter",
            "ws",
            "--label-col",
            "2",
            "--standardize",
        ],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v = read_json(&dir.path().join("cluster-points.json"));
    assert_eq!(v["config"]["k"], 2);
    assert_eq!(v["dataset"]["standardized"], true);
    assert_eq!(v["best"]["metrics"]["ari"], 1.0);
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3,oops\n").unwrap();
    for args in [
        vec!["cluster", "--dataset", "nope"],
        vec!["cluster", "--data", bad.to_str().unwrap(), "--k", "2"],
        vec!["cluster", "--dataset", "iris", "--method", "bogus"],
        vec!["cluster", "--dataset", "iris", "--k", "0"],
        vec!["cluster", "--dataset", "iris", "--lk-cap", "10"],
    ] {
        let run = pkm(dir.path(), &args);
        assert_eq!(run.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&run.stderr).unwrap();
        assert!(err["error"]["kind"].is_string());
    }
}

#[test]
fn iteration_cap_exits_with_code_4_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = pkm(
        dir.path(),
        &["cluster", "--dataset", "iris", "--max-iterations", "5"],
    );
    assert_eq!(run.status.code(), Some(4));
    let v = read_json(&dir.path().join("cluster-iris.json"));
    assert_eq!(v["best"]["termination"], "not_converged");
}

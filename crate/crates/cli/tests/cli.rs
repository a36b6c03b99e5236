use std::ffi::OsStr;
use std::fmt::Debug;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pedaware::io::{read_plan_csv, read_trace_csv};
use serde_json::Value;
use tempfile::TempDir;

fn fixture(path: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(path)
        .to_string_lossy()
        .into_owned()
}

fn pedaware<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pedaware"))
        .args(args)
        .env_remove("PEDAWARE_OUT_DIR")
        .output()
        .expect("spawn pedaware")
}

fn json_ok<S: AsRef<OsStr> + Debug>(args: &[S]) -> Value {
    let out = pedaware(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn exit_code<S: AsRef<OsStr>>(args: &[S]) -> i32 {
    pedaware(args).status.code().expect("exit code")
}

fn dir_arg(dir: &TempDir) -> &str {
    dir.path().to_str().unwrap()
}

fn predict_args(at: &str, predictor: &str) -> Vec<String> {
    vec![
        "predict".into(),
        "--network".into(),
        fixture("worked/network.json"),
        "--history".into(),
        fixture("worked/history.json"),
        "--at".into(),
        at.into(),
        "--predictor".into(),
        predictor.into(),
    ]
}

#[test]
fn predict_prints_truncated_probabilities() {
    let v = json_ok(&predict_args("r1", "counts"));
    let segs = &v["segment_probs"];
    for (s, want) in [
        ("r1", 1.0),
        ("r2", 0.428571),
        ("r3", 0.142857),
        ("r4", 0.857142),
        ("r5", 0.571428),
    ] {
        assert_eq!(segs[s].as_f64(), Some(want), "{s}");
    }
    let order: Vec<&String> = segs.as_object().unwrap().keys().collect();
    assert_eq!(order, ["r1", "r2", "r3", "r4", "r5"]);
}

#[test]
fn predictors_print_the_same_probabilities() {
    let a = json_ok(&predict_args("r2", "counts"));
    let b = json_ok(&predict_args("r2", "markov"));
    assert_eq!(a["route_probs"], b["route_probs"]);
    assert_eq!(a["segment_probs"], b["segment_probs"]);
}

#[test]
fn unknown_segment_is_a_prediction_error() {
    assert_eq!(exit_code(&predict_args("nowhere", "counts")), 3);
}

#[test]
fn optimize_reports_program_and_plan() {
    let inst = fixture("worked/instance.json");
    let v = json_ok(&["optimize", "--instance", &inst]);
    let raw: Value = serde_json::from_str(&fs::read_to_string(&inst).unwrap()).unwrap();
    let segments = raw["segments"].as_array().unwrap();
    let objective = v["formulation"]["program"]["objective"].as_array().unwrap();
    let row = &v["formulation"]["program"]["constraints"][0]["terms"];
    for (j, s) in segments.iter().enumerate() {
        let (p, d, e) = (
            s["p"].as_f64().unwrap(),
            s["d"].as_f64().unwrap(),
            s["e"].as_f64().unwrap(),
        );
        let got = objective[j]["coefficient"].as_f64().unwrap();
        assert!((got - p * d * e).abs() < 1e-12);
        let got = row[j]["coefficient"].as_f64().unwrap();
        assert!((got - p * e).abs() < 1e-12);
    }
    let spent: f64 = segments
        .iter()
        .map(|s| {
            let id = s["id"].as_str().unwrap();
            s["p"].as_f64().unwrap()
                * s["e"].as_f64().unwrap()
                * v["plan"]["x"][id].as_f64().unwrap()
        })
        .sum();
    assert!(spent <= 0.04 + 1e-12);

    let robust = json_ok(&["optimize", "--instance", &inst, "--problem", "2"]);
    let p1 = v["plan"]["objective"].as_f64().unwrap();
    let p2 = robust["plan"]["objective"].as_f64().unwrap();
    assert!(p2 <= p1 + 1e-12, "{p2} > {p1}");
    assert_eq!(
        robust["formulation"]["program"]["constraints"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn zero_budget_plan_is_all_zero() {
    let inst = fixture("worked/instance.json");
    let v = json_ok(&["optimize", "--instance", &inst, "--budget", "0"]);
    for x in v["plan"]["x"].as_object().unwrap().values() {
        assert_eq!(x.as_f64(), Some(0.0));
    }
}

#[test]
fn optimize_exit_codes() {
    let inst = fixture("worked/instance.json");
    let args = [
        "optimize",
        "--instance",
        &inst,
        "--green",
        "r1,r4",
        "--budget",
        "0.01",
    ];
    assert_eq!(exit_code(&args), 4);

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{").unwrap();
    assert_eq!(
        exit_code(&["optimize", "--instance", bad.to_str().unwrap()]),
        2
    );
    assert_eq!(
        exit_code(&["optimize", "--instance", "/no/such/file.json"]),
        2
    );
}

#[test]
fn plan_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    let inst = fixture("worked/instance.json");
    let v = json_ok(&["optimize", "--instance", &inst, "--out", dir_arg(&dir)]);
    let rows = read_plan_csv(File::open(dir.path().join("plan.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(
            Some(row.x),
            v["plan"]["x"][row.segment_id.as_str()].as_f64()
        );
    }
    let saved: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(saved["plan"], v["plan"]);
}

fn fleet_r3(extra: &[&str]) -> (f64, Value) {
    let dir = TempDir::new().unwrap();
    let scenario = fixture("y_network/scenario.json");
    let mut args = vec!["fleet", &scenario, "--out", dir_arg(&dir)];
    args.extend_from_slice(extra);
    let v = json_ok(&args);
    let saved: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(saved["pollutant_units"], v["pollutant_units"]);
    assert!(dir.path().join("fleet.csv").exists());
    (v["pollutant_units"]["r3"].as_f64().unwrap(), v)
}

#[test]
fn fleet_on_y_network() {
    let (expected, _) = fleet_r3(&[]);
    assert!((expected - 1600.0).abs() < 1e-9, "{expected}");
    let (flow, _) = fleet_r3(&["--policy", "flow"]);
    assert!((flow - 1200.0).abs() < 1e-9, "{flow}");

    let (met, v) = fleet_r3(&["--cap", "r3=800", "--budget", "0.015"]);
    assert!(met <= 800.0 + 1e-9, "{met}");
    assert_eq!(v["cap_status"]["kind"], "satisfied");

    let (over, v) = fleet_r3(&["--cap", "r3=800", "--budget", "0.01"]);
    assert!((over - 1200.0).abs() < 1e-9, "{over}");
    assert_eq!(v["cap_status"]["kind"], "infeasible_cap");
}

#[test]
fn sweep_allocation_follows_density() {
    let dir = TempDir::new().unwrap();
    let scenario = fixture("route/scenario.json");
    json_ok(&["sweep", &scenario, "--out", dir_arg(&dir)]);
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let mut rows: Vec<(f64, f64)> = reader
        .deserialize::<(String, f64, f64, f64, f64)>()
        .map(|r| {
            let (_, _, density, _, electric_s) = r.unwrap();
            (density, electric_s)
        })
        .collect();
    assert_eq!(rows.len(), 19);
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in rows.windows(2) {
        assert!(w[0].1 >= w[1].1 - 1e-12, "{:?} vs {:?}", w[0], w[1]);
    }
}

fn simulate_into(dir: &Path, seed: &str) -> Value {
    let scenario = fixture("route/scenario.json");
    json_ok(&[
        "simulate",
        &scenario,
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn simulate_is_deterministic_and_trace_round_trips() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let sa = simulate_into(a.path(), "11");
    simulate_into(b.path(), "11");
    let ta = fs::read(a.path().join("trace_prius.csv")).unwrap();
    let tb = fs::read(b.path().join("trace_prius.csv")).unwrap();
    assert_eq!(ta, tb);

    let steps = read_trace_csv(ta.as_slice()).unwrap();
    let summary = &sa["vehicles"][0];
    assert_eq!(steps.len() as u64, summary["steps"].as_u64().unwrap());
    let last = steps.last().unwrap();
    assert_eq!(Some(last.soc_kwh), summary["final_soc_kwh"].as_f64());
    let electric: f64 = steps.iter().map(|s| s.electric_kwh).sum();
    assert!(electric <= summary["initial_budget_kwh"].as_f64().unwrap() + 1e-9);
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let scenario = fixture("route/scenario.json");
    let out = Command::new(env!("CARGO_BIN_EXE_pedaware"))
        .args(["compare", &scenario])
        .env("PEDAWARE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    for name in ["comparison.csv", "summary.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn history_synth_and_record() {
    let dir = TempDir::new().unwrap();
    let network = fixture("worked/network.json");
    let hist = dir.path().join("h.json");
    let hist = hist.to_str().unwrap();
    let v = json_ok(&[
        "history",
        "synth",
        "--network",
        &network,
        "--count",
        "R1=2",
        "--count",
        "R3=1",
        "--seed",
        "5",
        "--output",
        hist,
    ]);
    assert_eq!(v["trips"], 3);
    let v = json_ok(&[
        "history",
        "record",
        "--network",
        &network,
        "--history",
        hist,
        "--route",
        "R1",
        "--energy",
        "r1=0.02",
    ]);
    assert_eq!(v["trips"], 4);
    let p = json_ok(&[
        "predict",
        "--network",
        &network,
        "--history",
        hist,
        "--at",
        "r1",
    ]);
    assert_eq!(p["route_probs"]["R1"].as_f64(), Some(0.75));
    assert_eq!(
        exit_code(&[
            "history",
            "record",
            "--network",
            &network,
            "--history",
            hist,
            "--route",
            "R9",
        ]),
        2
    );
}

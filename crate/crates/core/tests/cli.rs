mod common;

use common::fixture;
use serde_json::Value;
use std::process::Command as Process;
use survey_design::cli::{main_with_args, render_json, run, Command, Overrides};
use survey_design::config::{load_config, parse_config, ScenarioConfig};
use survey_design::normal::two_sided_z;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("survey-design").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.extend(["--output", "json"]);
    let (code, out, err) = call(&full);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

/// A fixture with its scenario replaced.
fn with_scenario(file: &str, scenario: Value) -> String {
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(fixture(file)).unwrap()).unwrap();
    doc["scenario"] = scenario;
    doc.to_string()
}

fn count(design: &Value, bits: [u8; 3]) -> i64 {
    design["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["pattern"] == serde_json::json!(bits))
        .map(|e| e["integer_count"].as_i64().unwrap())
        .unwrap_or(0)
}

#[test]
fn fixture_parses() {
    let c = load_config(fixture("rtpcr1600.json")).unwrap();
    let costs: Vec<f64> = c.model.tests.iter().map(|t| t.cost).collect();
    assert_eq!(costs, [450.0, 1600.0, 300.0]);
    assert_eq!(c.budget, Some(1e7));
    assert_eq!(c.currency, "Rs");
    match c.scenario {
        ScenarioConfig::Point(p) => assert_eq!(p.as_slice(), [0.10, 0.30, 0.01]),
        other => panic!("unexpected scenario {}", other.kind()),
    }
}

#[test]
fn table_output_point() {
    let (code, out, _) = call(&["c-optimal", "--config", &fixture("rtpcr1600.json")]);
    assert_eq!(code, 0);
    let line = |bits: &str| -> i64 {
        let l = out.lines().find(|l| l.trim_start().starts_with(bits)).unwrap();
        l.split_whitespace().nth(3).unwrap().parse().unwrap()
    };
    assert!((line("(0,0,1)") - 521).abs() <= 2);
    assert!((line("(1,0,1)") - 13125).abs() <= 2);
    assert_eq!(line("(1,1,1)"), 0);
}

#[test]
fn json_worst_case_and_groups() {
    let r = json(&["worst-case", "--config", &fixture("box_rtpcr100.json")]);
    let d = &r["result"]["design"];
    assert!((count(d, [0, 0, 1]) - 838).abs() <= 5);
    assert!((count(d, [0, 1, 1]) - 24371).abs() <= 5);
    assert!(r["result"]["refined_design"].is_object());

    let g = json(&["groups", "--config", &fixture("symptom_groups.json")]);
    let strata = g["result"]["strata"].as_array().unwrap();
    let s = strata.iter().find(|s| s["name"] == "symptomatic").unwrap();
    assert!((s["share"].as_f64().unwrap() - 0.088).abs() <= 0.003);
    assert!((count(&s["solve"]["design"], [1, 0, 1]) - 1046).abs() <= 5);
}

#[test]
fn budget_closed_form() {
    let r = json(&["budget", "--config", &fixture("rtpcr1600.json"), "--moe", "0.01"]);
    let a = r["result"]["margin"]["objective"].as_f64().unwrap();
    let c = r["result"]["margin"]["budget"].as_f64().unwrap();
    let z = two_sided_z(0.05);
    assert!((c - z * z * a / 1e-4).abs() <= 1e-9 * c);
    let var = r["result"]["solve"]["min_variance"].as_f64().unwrap();
    assert!((z * var.sqrt() - 0.01).abs() < 1e-12);
}

#[test]
fn budget_needs_a_margin() {
    let (code, _, err) = call(&["budget", "--config", &fixture("rtpcr1600.json")]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        with_scenario("rtpcr1600.json", serde_json::json!({"point": {"p": [0.5, 0.6, 0.1]}})),
    )
    .unwrap();
    let (code, _, err) = call(&["c-optimal", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("scenario.point.p"), "{err}");

    // two single tests cannot identify three prevalences: solver failure
    let thin = dir.path().join("thin.json");
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(fixture("rtpcr1600.json")).unwrap()).unwrap();
    doc["patterns"] = serde_json::json!([[1, 0, 0], [0, 0, 1]]);
    std::fs::write(&thin, doc.to_string()).unwrap();
    assert_eq!(call(&["c-optimal", "--config", thin.to_str().unwrap()]).0, 2);

    assert_eq!(call(&["worst-case", "--config", &fixture("rtpcr1600.json")]).0, 1);
    assert_eq!(call(&["nonsense", "--config", &fixture("rtpcr1600.json")]).0, 1);
    assert_eq!(call(&["c-optimal", "--config", "/nonexistent.json"]).0, 1);
    assert_eq!(call(&["--help"]).0, 0);
}

#[test]
fn binary_exit_status() {
    let bin = env!("CARGO_BIN_EXE_survey-design");
    let ok = Process::new(bin)
        .args(["c-optimal", "--config", &fixture("rtpcr100.json")])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("25000"));
    let bad = Process::new(bin)
        .args(["strata", "--config", &fixture("rtpcr100.json")])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn json_is_reproducible() {
    for (cmd, file) in [
        ("worst-case", "box_rtpcr100.json"),
        ("strata", "districts.json"),
        ("c-optimal", "rtpcr1000.json"),
    ] {
        let a = call(&[cmd, "--config", &fixture(file), "--output", "json"]);
        assert_eq!(a.0, 0);
        let b = call(&[cmd, "--config", &fixture(file), "--output", "json"]);
        assert_eq!(a.1, b.1, "{cmd}");
    }
    let sim = [
        "simulate",
        "--config",
        &fixture("rtpcr1600.json"),
        "--replications",
        "100",
        "--output",
        "json",
    ];
    let first = call(&sim);
    assert_eq!(first.0, 0, "{}", first.2);
    assert_eq!(first.1, call(&sim).1);
}

#[test]
fn config_round_trip() {
    for f in [
        "rtpcr1600.json",
        "box_rtpcr100.json",
        "symptom_groups.json",
        "districts.json",
    ] {
        let c = load_config(fixture(f)).unwrap();
        assert_eq!(parse_config(&c.to_json()).unwrap(), c, "{f}");
    }
}

#[test]
fn simulate_a_saved_design() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("report.json");
    let (_, report, _) = call(&[
        "worst-case",
        "--config",
        &fixture("box_rtpcr100.json"),
        "--output",
        "json",
    ]);
    std::fs::write(&saved, report).unwrap();

    // worst-case design, simulated at a point inside the box
    let point = dir.path().join("point.json");
    std::fs::write(
        &point,
        with_scenario(
            "box_rtpcr100.json",
            serde_json::json!({"point": {"p": [0.06, 0.45, 0.0]}}),
        ),
    )
    .unwrap();
    let r = json(&[
        "simulate",
        "--config",
        point.to_str().unwrap(),
        "--design",
        saved.to_str().unwrap(),
        "--replications",
        "100",
    ]);
    assert_eq!(count(&r["result"]["design"], [0, 1, 1]), 24375);
    assert_eq!(r["result"]["variance"]["replications"], 100);
}

#[test]
fn library_run_matches_binary() {
    let c = load_config(fixture("rtpcr1000.json")).unwrap();
    let r = run(&c, Command::COptimal, &Overrides::default()).unwrap();
    let (_, out, _) = call(&["c-optimal", "--config", &fixture("rtpcr1000.json"), "--output", "json"]);
    assert_eq!(render_json(&r), out);
}

#[test]
fn assumption_report() {
    let r = json(&["check-assumptions", "--config", &fixture("districts.json")]);
    assert_eq!(r["result"]["holds"], true);
    assert_eq!(r["result"]["checks"].as_array().unwrap().len(), 3);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flexmm::scheduler::milp::VarKind;
use serde_json::Value;

const WORKLOAD: &str = r#"{
  "layers": [
    {"id": 0, "m": 64, "k": 128, "n": 96},
    {"id": 1, "m": 64, "k": 96, "n": 32},
    {"id": 2, "m": 30, "k": 40, "n": 50, "dtype": "int8"}
  ],
  "edges": [[0, 1]]
}"#;

fn flexmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexmm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn workload(dir: &Path) -> std::path::PathBuf {
    let w = dir.join("w.json");
    fs::write(&w, WORKLOAD).unwrap();
    w
}

fn artifacts(plan: &Path) -> Value {
    let m: Value =
        serde_json::from_str(&fs::read_to_string(plan.join("manifest.json")).unwrap()).unwrap();
    m["artifacts"].clone()
}

#[test]
fn optimize_is_deterministic_for_a_seed() {
    let d = tempfile::tempdir().unwrap();
    let w = workload(d.path());
    for p in ["a", "b"] {
        let o = flexmm(&[
            "optimize",
            "--workload",
            s(&w),
            "--scheduler",
            "ga",
            "--seed",
            "7",
            "--out",
            s(&d.path().join(p)),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = artifacts(&d.path().join("a"));
    assert_eq!(a, artifacts(&d.path().join("b")));
    for name in ["table.json", "schedule.json", "program.bin", "program.asm"] {
        assert!(a[name].is_string(), "{name} missing from manifest");
        let bytes = fs::read(d.path().join("a").join(name)).unwrap();
        assert_eq!(fs::read(d.path().join("b").join(name)).unwrap(), bytes);
    }
}

#[test]
fn simulate_checks_generated_plan() {
    let d = tempfile::tempdir().unwrap();
    let w = workload(d.path());
    let plan = d.path().join("plan");
    assert!(
        flexmm(&["optimize", "--workload", s(&w), "--out", s(&plan)])
            .status
            .success()
    );
    let o = flexmm(&[
        "simulate",
        "--plan",
        s(&plan),
        "--check-functional",
        "--seed",
        "3",
    ]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.contains("functional: PASS"), "{out}");

    // Simulated makespan stays within 5% of the planned one.
    let sched: Value =
        serde_json::from_str(&fs::read_to_string(plan.join("schedule.json")).unwrap()).unwrap();
    let sim: Value =
        serde_json::from_str(&fs::read_to_string(plan.join("sim/sim.json")).unwrap()).unwrap();
    let planned = sched["makespan_ns"].as_f64().unwrap();
    let got = sim["makespan_ns"].as_f64().unwrap();
    assert!(got <= planned * 1.05, "{got} vs {planned}");
    assert!(plan.join("sim/trace.csv").exists());
}

#[test]
fn exact_scheduler_and_lp_export() {
    let d = tempfile::tempdir().unwrap();
    let w = workload(d.path());
    let o = flexmm(&[
        "optimize",
        "--workload",
        s(&w),
        "--scheduler",
        "exact",
        "--budget-sec",
        "30",
        "--out",
        s(&d.path().join("p")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sched: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("p/schedule.json")).unwrap())
            .unwrap();
    assert_eq!(sched["optimal"], Value::Bool(true));

    let o = flexmm(&[
        "export-lp",
        "--workload",
        s(&w),
        "--out",
        s(&d.path().join("lp")),
    ]);
    assert!(o.status.success());
    let lp = fs::read_to_string(d.path().join("lp/model.lp")).unwrap();
    let parsed = flexmm::scheduler::parse_lp(&lp).unwrap();
    assert!(parsed.vars.iter().any(|v| v.kind == VarKind::Binary));
}

#[test]
fn compare_single_workload_writes_gains() {
    let d = tempfile::tempdir().unwrap();
    let w = workload(d.path());
    let out = d.path().join("cmp");
    let o = flexmm(&[
        "compare",
        "--workload",
        s(&w),
        "--baselines",
        "rsn",
        "--ga-iters",
        "50",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"gain_over_rsn"));
    assert!(!header.contains(&"gain_over_charm"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let gain: f64 = row[header.iter().position(|h| *h == "gain_over_rsn").unwrap()]
        .parse()
        .unwrap();
    assert!(gain >= 1.0, "planned design slower than RSN: {gain}");
}

#[test]
fn bad_inputs_exit_with_validation_code() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.json");
    let out = d.path().join("o");
    let o = flexmm(&["optimize", "--workload", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("load failed"));
    assert!(!out.exists());

    let cyclic = d.path().join("c.json");
    fs::write(
        &cyclic,
        r#"{"layers":[{"id":0,"m":8,"k":8,"n":8},{"id":1,"m":8,"k":8,"n":8}],"edges":[[0,1],[1,0]]}"#,
    )
    .unwrap();
    let o = flexmm(&["optimize", "--workload", s(&cyclic), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    let o = flexmm(&["optimize", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = flexmm(&["simulate", "--plan", s(d.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_write_removes_partial_outputs() {
    let d = tempfile::tempdir().unwrap();
    let w = workload(d.path());
    let out = d.path().join("plan");
    // A directory where a file must go makes the write stage fail midway.
    fs::create_dir_all(out.join("program.bin")).unwrap();
    let o = flexmm(&["optimize", "--workload", s(&w), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("write failed"));
    let mut left: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    left.sort();
    assert_eq!(left, vec!["program.bin".to_string()]);
}

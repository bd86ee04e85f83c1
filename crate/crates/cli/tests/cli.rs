mod common;

use std::path::Path;

use cpsdre_cli::commands::{ControlRecord, DecomposeSummary};
use cpsdre_cli::report::{build_report, ComparisonReport};
use cpsdre_core::tensor::read_t3b;
use cpsdre_core::CpFactors;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn tiny() -> Value {
    json!({
        "snapshot": { "ac": { "nx": 21, "nt": 40 }, "n_beta": 4 },
        "decomposition": { "pgs": { "rank_upper": 4 } },
        "control": { "nt": 1001 }
    })
}

fn run_ok(args: &[&str]) -> String {
    let o = common::cpsdre(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_with_two_time_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), json!({}), &out);
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--nt", "2"]);
    let t = read_t3b(&out.join("trajectory.t3b")).unwrap();
    assert_eq!(t.dims(), [101, 2, 1]);
    let ic = cpsdre_core::ac::AcConfig::default().initial_condition().unwrap();
    for i in 0..101 {
        assert_eq!(t.get(i, 0, 0), ic[i]);
    }
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 3);
}

#[test]
fn corrupt_initial_condition_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad_ic.csv"), "x,v\n0,oops\n").unwrap();
    let cfg = common::write_config(dir.path(), json!({"snapshot": {"ac": {"ic": "bad_ic.csv"}}}), &dir.path().join("out"));
    let o = common::cpsdre(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad_ic.csv"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"control": {"nt": 1}}"#).unwrap();
    let o = common::cpsdre(&["pipeline", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = common::cpsdre(&["simulate", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tensor_file_size_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), json!({"snapshot": {"ac": {"nx": 21, "nt": 30}, "n_beta": 1}}), &out);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["build-tensor", "--config", cfg, "--seed", "3"]);
    let path = out.join("snapshots.t3b");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 8 + 24 + 21 * 30 * 8);
    assert_eq!(read_t3b(&path).unwrap().dims(), [21, 30, 1]);
    let first = Sha256::digest(&bytes);
    run_ok(&["build-tensor", "--config", cfg, "--seed", "3", "--jobs", "2"]);
    assert_eq!(Sha256::digest(std::fs::read(&path).unwrap()), first);
}

#[test]
fn decompose_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = tiny();
    c["decomposition"]["method"] = json!("als");
    c["decomposition"]["als"] = json!({"rank": 2});
    let cfg = common::write_config(dir.path(), c, &out);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["build-tensor", "--config", cfg]);
    let stdout = run_ok(&["decompose", "--config", cfg]);
    assert!(stdout.contains("rank estimate: 2"));
    let f = CpFactors::read(&out.join("factors_als.bin")).unwrap();
    assert_eq!((f.x.ncols(), f.y.ncols(), f.z.ncols()), (2, 2, 2));

    let cfg = common::write_config(dir.path(), tiny(), &out);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["decompose", "--config", cfg]);
    let dec: DecomposeSummary = read(&out.join("decompose.json"));
    let names: Vec<&str> = dec.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["pgs", "pgs_als1", "pgs_als2"]);
    let r = dec.rank_estimate;
    assert_eq!(CpFactors::read(&out.join("factors_pgs_als2.bin")).unwrap().rank(), r + 1);
    assert_eq!(CpFactors::read(&out.join("factors_pgs.bin")).unwrap().rank(), r);
}

#[test]
fn decompose_without_tensor_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), tiny(), &dir.path().join("out"));
    let o = common::cpsdre(&["decompose", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("build-tensor"));
}

#[test]
fn pipeline_equals_the_steps_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let cfg_a = common::write_config(&a, tiny(), &a.join("out"));
    let cfg_b = common::write_config(&b, tiny(), &b.join("out"));
    run_ok(&["pipeline", "--config", cfg_a.to_str().unwrap()]);
    for step in ["simulate", "build-tensor", "decompose", "control", "report"] {
        run_ok(&[step, "--config", cfg_b.to_str().unwrap()]);
    }
    assert_eq!(common::differing(&a.join("out"), &b.join("out")), Vec::<String>::new());
    let rep: ComparisonReport = read(&a.join("out/report.json"));
    assert_eq!(rep.rows[0].method, "full");
    assert_eq!(rep.rows[0].cpu_ratio, 1.0);
    for row in &rep.rows[1..] {
        assert!(row.converged_at.is_some(), "{}", row.method);
        assert!(row.care_ratio < 1.0);
    }
}

#[test]
fn zero_initial_state_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("zero.csv"), "x,v\n0,0\n0.5,0\n1,0\n1.5,0\n2,0\n").unwrap();
    let mut c = tiny();
    c["snapshot"]["ac"]["ic"] = json!("zero.csv");
    c["decomposition"] = json!({"method": "als", "als": {"rank": 1}});
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), c, &out);
    let cfg = cfg.to_str().unwrap();
    // a zero tensor has no basis, so decompose a nonzero one for the reduced run
    let mut c2 = tiny();
    c2["decomposition"] = json!({"method": "als", "als": {"rank": 1}});
    let cfg2 = dir.path().join("c2.json");
    c2["output_dir"] = json!(out.to_string_lossy());
    std::fs::write(&cfg2, c2.to_string()).unwrap();
    run_ok(&["build-tensor", "--config", cfg2.to_str().unwrap()]);
    run_ok(&["decompose", "--config", cfg2.to_str().unwrap()]);
    run_ok(&["control", "--config", cfg]);
    for name in ["full", "als"] {
        let rec: ControlRecord = read(&ControlRecord::path(
            &cpsdre_cli::PipelineConfig { output_dir: out.clone(), ..Default::default() },
            name,
        ));
        assert_eq!(rec.summary.j_quadrature, 0.0, "{name}");
        assert_eq!(rec.summary.converged_at, Some(0.0));
    }
}

#[test]
fn report_needs_a_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c["control"]["run_full"] = json!(false);
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), c, &out);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["build-tensor", "--config", cfg]);
    run_ok(&["decompose", "--config", cfg]);
    run_ok(&["control", "--config", cfg]);
    let o = common::cpsdre(&["report", "--config", cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(build_report(&[], None).is_err());
}

#[test]
fn baseline_alone_and_duplicate_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c["snapshot"]["ac"]["nx"] = json!(11);
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), c, &out);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["build-tensor", "--config", cfg]);
    run_ok(&["decompose", "--config", cfg]);
    run_ok(&["control", "--config", cfg]);
    let full: ControlRecord = read(&out.join("control_full.json"));
    let alone = build_report(std::slice::from_ref(&full), None).unwrap();
    assert_eq!(alone.rows.len(), 1);
    assert_eq!(alone.rows[0].j_over_j_full, 1.0);
    assert_eq!(alone.rows[0].cpu_ratio, 1.0);
    let mut twin = full.clone();
    twin.name = "full_again".into();
    twin.summary.wall_ms *= 1.03;
    let rep = build_report(&[full, twin], None).unwrap();
    assert_eq!(rep.rows[1].j_over_j_full, 1.0);
    assert!((rep.rows[1].cpu_ratio - 1.0).abs() < 0.1);
    assert!(rep.timing_note.contains("nondeterministic"));
}

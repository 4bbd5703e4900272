use sfclab::runner::{execute, run, Command, MetricSummary, Overrides};
use sfclab::scenario::{parse_config, Stat};

const SMALL: &str = r#"{
    "name": "small",
    "grid": { "n_steps": 1024 },
    "a": { "type": "fv_anticipative", "g": { "kind": "constant", "value": 1.0 }, "functional": "cos(B(L))" },
    "b": { "type": "deterministic", "g": { "kind": "sine", "frequency": 1.0 } },
    "lil": { "h_max": 0.0625, "node_count": 3, "homogeneity": [2.0], "mask_probe": [1], "drift_probe": { "kind": "constant", "value": 1.0 } },
    "replication": { "count": 6, "base_seed": 5 },
    "outputs": { "node_stride": 32 },
    "tolerances": [ { "metric": "primitive_max_err", "stat": "max", "max": 1e-9 } ]
}"#;

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let mut c = parse_config(SMALL).unwrap();
    let one = execute(&c, Command::Run).unwrap();
    c.replication.parallelism = 4;
    let four = execute(&c, Command::Run).unwrap();
    assert_eq!(one.rows, four.rows);
    assert_eq!(one.summary, four.summary);
    assert_eq!(one.replicates, four.replicates);
    assert!(one.summary.pass, "{:?}", one.summary.checks);
}

#[test]
fn run_reports_every_stage_metric() {
    let c = parse_config(SMALL).unwrap();
    let out = execute(&c, Command::Run).unwrap();
    for m in [
        "primitive_max_err",
        "abs_a_in_band",
        "signed_a_sign_correct",
        "homogeneity_rel_dev",
        "mask_bound_slack",
        "drift_bound_slack",
        "drift_max_err",
        "lcm_idempotence_dev",
    ] {
        let s = out.summary.metric(m).unwrap_or_else(|| panic!("missing {m}"));
        assert!(s.count > 0);
    }
    assert!(out.summary.metric("mask_bound_slack").unwrap().min >= 0.0);
    assert!(out.rows.iter().any(|r| r.stage == "abs_a"));
    assert!(out.rows.iter().any(|r| r.stage == "drift"));
}

#[test]
fn oracle_check_compares_series_and_ibp() {
    let c = parse_config(
        r#"{"grid": {"n_steps": 512},
            "a": {"type": "fv_anticipative", "g": {"kind": "linear", "slope": 1.0}, "functional": "B(L)"},
            "replication": {"count": 4},
            "tolerances": [{"metric": "a.series_minus_ibp", "stat": "max", "max": 1e-9},
                           {"metric": "a.trace_minus_ibp", "stat": "max", "max": 1e-9}]}"#,
    )
    .unwrap();
    let out = execute(&c, Command::OracleCheck).unwrap();
    assert!(out.summary.pass, "{:?}", out.summary.checks);
    assert_eq!(out.summary.metric("a.skorokhod").unwrap().count, 4);
}

#[test]
fn calibration_table_has_one_row_per_grid() {
    let c = parse_config(
        r#"{"grid": {"n_steps": 1024}, "lil": {"h_max": 0.0625, "times": [0.25]},
            "calibrate": {"n_steps": [512, 1024]}, "replication": {"count": 8}}"#,
    )
    .unwrap();
    let out = execute(&c, Command::LilCalibrate).unwrap();
    assert_eq!(out.calibration.len(), 2);
    assert_eq!(out.calibration[0].n_steps, 512);
    assert!(out.calibration.iter().all(|r| r.mean > 0.0 && r.q05 <= r.median && r.median <= r.q95));
}

#[test]
fn basis_diagnose_reports_sweep_and_spread() {
    let c = parse_config(
        r#"{"grid": {"n_steps": 256}, "inner_basis": {"m_max": 64},
            "a": {"type": "fv_anticipative", "g": {"kind": "constant", "value": 1.0}, "functional": "B(L)"},
            "replication": {"count": 2}}"#,
    )
    .unwrap();
    let out = execute(&c, Command::BasisDiagnose).unwrap();
    assert_eq!(out.basis.len(), 64);
    assert!(out.summary.metric("universality_spread").is_some());
    assert!(out.summary.metric("c1_holds").is_some());
}

#[test]
fn files_are_written_with_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(SMALL).unwrap();
    let overrides = Overrides { replicates: Some(2), out: Some(dir.path().to_owned()), ..Default::default() };
    let out = run(c, Command::Run, &overrides).unwrap();
    assert_eq!(out.summary.replicates, 2);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "replicate,stage,node_index,value_re,value_im,truth_re,truth_im,abs_err");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let m = &summary["metrics"]["primitive_max_err"];
    for key in ["mean", "rms", "q05", "q50", "q95", "pass"] {
        assert!(m.get(key).is_some(), "{key}");
    }
    assert!(dir.path().join("timing.json").exists());
    assert!(dir.path().join("replicates.json").exists());
}

#[test]
fn failed_tolerance_fails_the_summary() {
    let mut c = parse_config(SMALL).unwrap();
    c.tolerances[0].max = Some(-1.0);
    let out = execute(&c, Command::Run).unwrap();
    assert!(!out.summary.pass);
    assert_eq!(out.summary.metric("primitive_max_err").unwrap().pass, Some(false));
}

#[test]
fn metric_summary_statistics() {
    let s = MetricSummary::from_values(&[1.0, 2.0, 3.0, 4.0, f64::NAN]);
    assert_eq!(s.count, 4);
    assert_eq!(s.non_finite, 1);
    assert_eq!(s.mean, 2.5);
    assert_eq!(s.q50, 2.5);
    assert!((s.rms - 7.5f64.sqrt()).abs() < 1e-15);
    assert!((s.stat(Stat::Z) - 2.5 / (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    let zero = MetricSummary::from_values(&[0.0, 0.0]);
    assert_eq!(zero.stat(Stat::Z), 0.0);
}

#[test]
fn invalid_documents_are_rejected_before_sampling() {
    let e = parse_config(r#"{"grid": {"n_steps": 64}, "lil": {"h_max": 0.5}}"#).unwrap_err();
    assert_eq!(e.errors[0].field, "lil");
    let e = parse_config(r#"{"grid": {"n_steps": 64}, "replication": {"count": 0}}"#).unwrap_err();
    assert_eq!(e.errors[0].field, "replication.count");
    let e = parse_config("{\"grid\": ").unwrap_err();
    assert!(e.to_string().contains("EOF"), "{e}");
}

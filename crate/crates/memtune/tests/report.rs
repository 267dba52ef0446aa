use memtune::config::bundled_scenario;
use memtune::report::{emit_csv, emit_log, parse_csv, Policy, Report, RunEntry, CSV_HEADER};
use memtune::suite::run_suite;
use memtune_core::baselines::BaselinePolicy;
use memtune_core::controller::{
    BudgetState, ControllerConfig, Knobs, OptimizerMode, Outcome, RecordStatus, RunTrace,
    TraceRecord,
};

#[test]
fn csv_round_trips() {
    let s = bundled_scenario("xavier-gss").unwrap();
    let policies = [
        Policy::Controller,
        Policy::Baseline(BaselinePolicy::MaxA),
        Policy::Baseline(BaselinePolicy::MaxP),
    ];
    let report = run_suite(&s, &policies).unwrap();
    let rows = parse_csv(&emit_csv(&report)).unwrap();
    let records: usize = report.runs.iter().map(|r| r.trace.records.len()).sum();
    assert_eq!(rows.len(), records);
    for (row, (entry, rec)) in rows.iter().zip(
        report
            .runs
            .iter()
            .flat_map(|r| r.trace.records.iter().map(move |x| (r, x))),
    ) {
        assert_eq!(row.scenario, "xavier-gss");
        assert_eq!(row.policy, entry.label);
        assert_eq!(row.experience, rec.experience);
        assert_eq!(row.batch, rec.knobs.batch);
        assert_eq!(row.buffer, rec.knobs.buffer);
        assert_eq!(row.opt_mode, rec.knobs.optimizer_mode.as_str());
        assert_eq!(row.outcome, rec.status.as_str());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1e-12);
        assert!(close(row.mem_peak_mb, rec.memory_peak_mb));
        match (row.latency_s, rec.latency_s()) {
            (Some(a), Some(b)) => assert!(close(a, b)),
            (None, None) => {}
            other => panic!("latency mismatch {other:?}"),
        }
    }
    // MAX-A and MAX-P end in an OOM line with empty metric cells
    assert_eq!(rows.iter().filter(|r| r.outcome == "oom").count(), 2);
    assert!(rows
        .iter()
        .filter(|r| r.outcome == "oom")
        .all(|r| r.score.is_none() && r.plasticity.is_none()));
}

fn one_record_trace() -> RunTrace {
    let knobs = Knobs::new(32, 100, OptimizerMode::Default);
    let cfg = ControllerConfig {
        t0: 0.1,
        delta: 0.0,
        alpha: 0.1,
        beta: 0.1,
        m_batch_mb: 8.0,
        m_df_mb: 0.05,
        mo_default_mb: 4000.0,
        k_opt: 1.0,
        capacity_mb: 8000.0,
        safety_margin: 0.05,
        min_batch: 1,
        min_buffer: 1,
    };
    RunTrace {
        records: vec![TraceRecord {
            experience: 1,
            knobs,
            memory_peak_mb: 9000.0,
            snapshot: None,
            score: None,
            threshold: None,
            budgets: BudgetState::from_knobs(&knobs, &cfg),
            status: RecordStatus::Oom,
        }],
        outcome: Outcome::OomFailed,
    }
}

#[test]
fn single_record_gives_header_plus_one_line() {
    let mut report = Report::new("tiny", "balanced");
    report
        .runs
        .push(RunEntry::new(Policy::Controller, one_record_trace()));
    let csv = String::from_utf8(emit_csv(&report)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert!(
        lines[1].starts_with("tiny,controller,1,32,100,default,"),
        "{}",
        lines[1]
    );
    assert!(lines[1].ends_with(",oom"), "{}", lines[1]);
}

#[test]
fn log_lines_are_json() {
    let s = bundled_scenario("server-er").unwrap();
    let report = run_suite(&s, &[Policy::Controller]).unwrap();
    let log = String::from_utf8(emit_log(&report)).unwrap();
    let values: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(values.len(), s.num_experiences + 1);
    assert_eq!(values[0]["experience"], 1);
    assert_eq!(values[0]["policy"], "controller");
}

#[test]
fn foreign_header_rejected() {
    assert!(parse_csv(b"a,b,c\n1,2,3\n").is_err());
}

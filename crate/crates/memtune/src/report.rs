//! Run reports and their CSV / JSON-lines renderings.

use std::fmt;
use std::str::FromStr;

use memtune_core::baselines::BaselinePolicy;
use memtune_core::controller::{Knobs, Outcome, RunTrace, TraceRecord};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "policy",
    "experience",
    "batch",
    "buffer",
    "opt_mode",
    "score",
    "threshold",
    "latency_s",
    "mem_peak_mb",
    "plasticity",
    "stability",
    "outcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Controller,
    Baseline(BaselinePolicy),
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Controller,
        Policy::Baseline(BaselinePolicy::MaxA),
        Policy::Baseline(BaselinePolicy::MaxP),
        Policy::Baseline(BaselinePolicy::Fixed),
        Policy::Baseline(BaselinePolicy::Oracle),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Controller => "controller",
            Policy::Baseline(p) => p.as_str(),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.to_ascii_lowercase().as_str() {
            "controller" | "adaptive" | "urge" => Ok(Policy::Controller),
            other => other
                .parse::<BaselinePolicy>()
                .map(Policy::Baseline)
                .map_err(|_| {
                    HarnessError::Config(format!(
                        "unknown policy `{s}` (expected controller, max-a, max-p, fixed-proxy or oracle)"
                    ))
                }),
        }
    }
}

/// One run in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    /// Label in reports; oracle grid points carry their knobs.
    pub label: String,
    pub policy: Policy,
    /// Position within the policy (grid index for the oracle).
    pub index: usize,
    pub trace: RunTrace,
}

impl RunEntry {
    pub fn new(policy: Policy, trace: RunTrace) -> Self {
        Self {
            label: policy.name().to_string(),
            policy,
            index: 0,
            trace,
        }
    }

    pub fn grid_point(index: usize, knobs: Knobs, trace: RunTrace) -> Self {
        Self {
            label: format!("oracle-b{}-r{}", knobs.batch, knobs.buffer),
            policy: Policy::Baseline(BaselinePolicy::Oracle),
            index,
            trace,
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            policy: self.label.clone(),
            experiences: self.trace.records.len(),
            total_latency_s: self.trace.total_latency_s(),
            final_plasticity: self.trace.final_plasticity(),
            final_stability: self.trace.final_stability(),
            peak_memory_mb: self.trace.peak_memory_mb(),
            outcome: self.trace.outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: String,
    pub experiences: usize,
    pub total_latency_s: f64,
    pub final_plasticity: Option<f64>,
    pub final_stability: Option<f64>,
    pub peak_memory_mb: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub runs: usize,
    pub oom_count: usize,
    pub best: Option<Knobs>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub preference: String,
    pub runs: Vec<RunEntry>,
    pub oracle: Option<OracleSummary>,
}

impl Report {
    pub fn new(scenario: &str, preference: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            preference: preference.to_string(),
            runs: Vec::new(),
            oracle: None,
        }
    }

    /// Sorts runs by policy name, then by index within the policy.
    pub fn sort(&mut self) {
        self.runs
            .sort_by(|a, b| (a.policy.name(), a.index).cmp(&(b.policy.name(), b.index)));
    }

    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(RunEntry::summary).collect()
    }

    /// The first run of `policy`.
    pub fn run(&self, policy: Policy) -> Option<&RunEntry> {
        self.runs.iter().find(|r| r.policy == policy)
    }

    pub fn run_count(&self, policy: Policy) -> usize {
        self.runs.iter().filter(|r| r.policy == policy).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Log,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "csv" => Ok(Format::Csv),
            "log" | "jsonl" => Ok(Format::Log),
            other => Err(HarnessError::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// Renders `x` with six significant digits, switching to exponent notation
/// for very small or very large magnitudes.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding may carry into the next decade, e.g. 999999.7
    let rounded: f64 = format!("{:.5e}", x).parse().unwrap_or(x);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) {
        exp + 1
    } else {
        exp
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, rounded);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.5e}", x)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

fn csv_fields(scenario: &str, policy: &str, r: &TraceRecord) -> [String; 13] {
    let snap = r.snapshot.as_ref();
    [
        scenario.to_string(),
        policy.to_string(),
        r.experience.to_string(),
        r.knobs.batch.to_string(),
        r.knobs.buffer.to_string(),
        r.knobs.optimizer_mode.as_str().to_string(),
        opt(r.score),
        opt(r.threshold),
        opt(snap.map(|s| s.latency_s)),
        fmt_sig6(r.memory_peak_mb),
        opt(snap.map(|s| s.plasticity)),
        opt(snap.map(|s| s.stability)),
        r.status.as_str().to_string(),
    ]
}

pub fn emit_csv(report: &Report) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("writing to memory");
    for run in &report.runs {
        for r in &run.trace.records {
            w.write_record(csv_fields(&report.scenario, &run.label, r))
                .expect("writing to memory");
        }
    }
    w.into_inner().expect("flushing to memory")
}

#[derive(Serialize)]
struct LogRecord<'a> {
    scenario: &'a str,
    policy: &'a str,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

#[derive(Serialize)]
struct LogSummary<'a> {
    scenario: &'a str,
    preference: &'a str,
    summary: RunSummary,
}

/// One JSON object per trace record, then one summary object per run.
pub fn emit_log(report: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    for run in &report.runs {
        for r in &run.trace.records {
            let line = LogRecord {
                scenario: &report.scenario,
                policy: &run.label,
                record: r,
            };
            serde_json::to_writer(&mut out, &line).expect("serializing to memory");
            out.push(b'\n');
        }
    }
    for run in &report.runs {
        let line = LogSummary {
            scenario: &report.scenario,
            preference: &report.preference,
            summary: run.summary(),
        };
        serde_json::to_writer(&mut out, &line).expect("serializing to memory");
        out.push(b'\n');
    }
    out
}

pub fn emit_report(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => emit_csv(report),
        Format::Log => emit_log(report),
    }
}

/// A parsed CSV line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub scenario: String,
    pub policy: String,
    pub experience: usize,
    pub batch: usize,
    pub buffer: usize,
    pub opt_mode: String,
    pub score: Option<f64>,
    pub threshold: Option<f64>,
    pub latency_s: Option<f64>,
    pub mem_peak_mb: f64,
    pub plasticity: Option<f64>,
    pub stability: Option<f64>,
    pub outcome: String,
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r
        .headers()
        .map_err(|e| HarnessError::Report(e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(HarnessError::Report(format!(
            "unexpected header {header:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::Report(e.to_string())))
        .collect()
}

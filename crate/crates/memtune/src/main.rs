use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use memtune::calibration::{render_fit, CalibrationFile};
use memtune::config::{scenario_from_arg, ModelsFile, BUNDLED_SCENARIOS};
use memtune::report::{emit_report, Format, Policy, Report};
use memtune::suite::{ablate_prefetch, measure_overhead, run_suite};
use memtune::HarnessError;
use memtune_core::baselines::BaselinePolicy;
use memtune_core::controller::Outcome;
use memtune_core::scenario::Scenario;
use memtune_core::urge::Preference;

/// Memory-budget controller and OCL workload simulator.
#[derive(Parser)]
#[command(name = "memtune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the controller and/or baselines on one scenario.
    Run(RunArgs),
    /// Run the 42-point oracle grid.
    Oracle(CommonArgs),
    /// Compare end-to-end latency with and without prefetching.
    AblatePrefetch(CommonArgs),
    /// Measure controller compute time and state size.
    Overhead(CommonArgs),
    /// Fit a response model to calibration targets.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file, or the name of a bundled scenario (e.g. xavier-er).
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or log (JSON lines).
    #[arg(long, default_value = "csv")]
    format: String,
    /// balanced, prefer-latency, prefer-ps, or a comma-separated ordering.
    #[arg(long)]
    prefer: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// controller, max-a, max-p, fixed-proxy, oracle; repeatable.
    #[arg(long = "policy", default_value = "controller")]
    policies: Vec<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration targets file; defaults to the bundled targets.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Models file holding the template profile; defaults to the bundled one.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }
}

fn scenario(args: &CommonArgs) -> Result<Scenario, HarnessError> {
    let mut s = scenario_from_arg(&args.scenario).map_err(|e| {
        HarnessError::Config(format!(
            "{e}\nbundled scenarios: {}",
            BUNDLED_SCENARIOS
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    if let Some(seed) = args.seed {
        s = s.with_seed(seed);
    }
    if let Some(p) = &args.prefer {
        s = s.with_preference(p.parse::<Preference>()?);
    }
    Ok(s)
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn print_summary(report: &Report) {
    eprintln!("scenario {} ({})", report.scenario, report.preference);
    for s in report.summaries() {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "  {:<24} latency {:>10.1} s  P {:>5}  S {:>5}  peak {:>8.0} MB  {}",
            s.policy,
            s.total_latency_s,
            f(s.final_plasticity),
            f(s.final_stability),
            s.peak_memory_mb,
            s.outcome.as_str()
        );
    }
    if let Some(o) = &report.oracle {
        match o.best {
            Some(k) => eprintln!(
                "  oracle best: batch {} buffer {} ({} of {} runs OOM)",
                k.batch, k.buffer, o.oom_count, o.runs
            ),
            None => eprintln!("  oracle infeasible: all {} runs OOM", o.runs),
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let s = scenario(&args.common)?;
    let format: Format = args.common.format.parse()?;
    let policies = args
        .policies
        .iter()
        .map(|p| p.parse::<Policy>())
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_suite(&s, &policies)?;
    write_out(args.common.out.as_deref(), &emit_report(&report, format))?;
    print_summary(&report);
    match report.run(Policy::Controller).map(|r| r.trace.outcome) {
        Some(Outcome::OomFailed) => Err(Failure {
            code: 3,
            error: anyhow::anyhow!("controller run ran out of memory"),
        }),
        Some(Outcome::Infeasible) => Err(Failure {
            code: 4,
            error: anyhow::anyhow!("controller budget became infeasible"),
        }),
        _ => Ok(()),
    }
}

fn oracle(args: CommonArgs) -> Result<(), Failure> {
    let s = scenario(&args)?;
    let format: Format = args.format.parse()?;
    let report = run_suite(&s, &[Policy::Baseline(BaselinePolicy::Oracle)])?;
    write_out(args.out.as_deref(), &emit_report(&report, format))?;
    print_summary(&report);
    Ok(())
}

fn ablate(args: CommonArgs) -> Result<(), Failure> {
    let s = scenario(&args)?;
    let r = ablate_prefetch(&s)?;
    let body = format!("{}\n", serde_json::to_string(&r).context("serializing")?);
    write_out(args.out.as_deref(), body.as_bytes())?;
    eprintln!(
        "{}: {:.1} s with prefetch, {:.1} s without, {:.1}% lower",
        r.scenario,
        r.latency_with_prefetch_s,
        r.latency_without_prefetch_s,
        100.0 * r.reduction
    );
    Ok(())
}

fn overhead(args: CommonArgs) -> Result<(), Failure> {
    let s = scenario(&args)?;
    let o = measure_overhead(&s)?;
    let body = format!("{}\n", serde_json::to_string(&o).context("serializing")?);
    write_out(args.out.as_deref(), body.as_bytes())?;
    eprintln!(
        "{}: controller {:.3} ms/experience, {:.2e} of training time, state {} bytes",
        o.scenario,
        1e3 * o.controller_per_experience_s,
        o.ratio,
        o.state_bytes
    );
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let file = match &args.targets {
        Some(p) => CalibrationFile::load(p)?,
        None => CalibrationFile::bundled(),
    };
    let models = match &args.models {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ModelsFile::parse(&text, &p.display().to_string())?
        }
        None => ModelsFile::bundled(),
    };
    let fit = file.calibrate(&models)?;
    write_out(args.out.as_deref(), render_fit(&fit).as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Oracle(a) => oracle(a),
        Command::AblatePrefetch(a) => ablate(a),
        Command::Overhead(a) => overhead(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

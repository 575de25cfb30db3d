//! `arzftl`: command line front end for the particle solver.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arz_ftl::fields::{density_field, marker_field, velocity_field};
use arz_ftl::harness::{
    convergence_sweep, residual_study, run_case_full, run_case_level, run_table, write_audit_csv,
    write_report_csv, write_residual_csv, Config, RunArtifacts, RunOptions, RunReport, TestCase,
};
use arz_ftl::{solve_riemann, Error, Execution, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arzftl", version, about = "Follow-the-leader particle solver for the ARZ traffic model")]
struct Cli {
    /// TOML experiment file; the built-in convergence table when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One case at one resolution.
    Run(RunArgs),
    /// Every case over its particle counts (convergence table).
    Sweep(SweepArgs),
    /// Sample the exact Riemann fan of a case.
    Exact(ExactArgs),
    /// Weak-residual decay study from the [residual] section.
    Residual(OutArgs),
    /// Invariant suite on a case; exit status 1 on any violation.
    Check(CheckArgs),
}

#[derive(Args)]
struct Resolution {
    /// Number of gaps, `κ = M/N`.
    #[arg(short = 'n', long, conflicts_with = "level")]
    particles: Option<usize>,
    /// Use `2^level` gaps instead.
    #[arg(long)]
    level: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "case")]
    case: String,
    #[command(flatten)]
    resolution: Resolution,
    /// Write rho.csv, v.csv, w.csv (final fields), exact.csv and trajectory.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Points of the exact profile across the window.
    #[arg(long, default_value_t = 801)]
    points: usize,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Restrict to one case.
    #[arg(long = "case")]
    case: Option<String>,
    /// Report CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Extended CSV with config hash, window, gauge offset and invariant verdicts.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Write runtime_ms as 0 so that output is byte-for-byte reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long = "case")]
    case: String,
    /// Sampling time; the case's final time when omitted.
    #[arg(short, long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 801)]
    points: usize,
    /// Sample over the truncation interval instead of the window.
    #[arg(long)]
    full: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// All cases when omitted.
    #[arg(long = "case")]
    case: Option<String>,
    /// Particle count; every count of the case when omitted.
    #[arg(short = 'n', long)]
    particles: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::table1(),
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match &cli.command {
        Command::Run(a) => run(&cfg, a),
        Command::Sweep(a) => sweep(&cfg, exec, a),
        Command::Exact(a) => exact(&cfg, a),
        Command::Residual(a) => residual(&cfg, exec, a),
        Command::Check(a) => check(&cfg, a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    if k < 2 {
        return vec![0.5 * (a + b)];
    }
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

fn run(cfg: &Config, a: &RunArgs) -> Result<()> {
    let case = cfg.case(&a.case)?;
    let opts = RunOptions { timing: !a.no_timing };
    let art = match (a.resolution.particles, a.resolution.level) {
        (_, Some(l)) => run_case_level(case, l, opts)?,
        (Some(n), None) => run_case_full(case, n, opts)?,
        (None, None) => return Err(Error::Config("give --n or --level".into())),
    };
    if let Some(dir) = &a.out_dir {
        write_artifacts(case, &art, dir, a.points)?;
    }
    write_report_csv([&art.report], io::stdout().lock())?;
    summarize(&art.report);
    Ok(())
}

fn write_artifacts(case: &TestCase, art: &RunArtifacts, dir: &Path, points: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let last = &art.trajectory.last().system;
    density_field(last).write_csv(BufWriter::new(File::create(dir.join("rho.csv"))?))?;
    velocity_field(last).write_csv(BufWriter::new(File::create(dir.join("v.csv"))?))?;
    marker_field(last).write_csv(BufWriter::new(File::create(dir.join("w.csv"))?))?;
    art.trajectory
        .write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    let xs = linspace(case.window[0], case.window[1], points);
    art.fan
        .write_profile(art.trajectory.t_final(), &xs, BufWriter::new(File::create(dir.join("exact.csv"))?))?;
    Ok(())
}

fn summarize(r: &RunReport) {
    let i = &r.invariants;
    eprintln!(
        "{} N={} l1_rho={:.3e} d1={:.3e} slack/kappa={:.2e} tv_increase={:.2e} mass_defect={:.1e} gauge={:.4}",
        r.test_id, r.n, r.l1.rho, r.d1, i.min_slack_over_kappa, i.tv_max_increase, i.mass_defect, r.gauge_offset
    );
}

fn sweep(cfg: &Config, exec: Execution, a: &SweepArgs) -> Result<()> {
    let opts = RunOptions { timing: !a.no_timing };
    let results = match &a.case {
        Some(id) => vec![convergence_sweep(cfg.case(id)?, exec, opts)?],
        None => run_table(cfg, exec, opts)?,
    };
    let rows: Vec<&RunReport> = results.iter().flat_map(|s| &s.rows).collect();
    write_report_csv(rows.iter().copied(), output(a.out.as_deref())?)?;
    if let Some(p) = &a.audit {
        write_audit_csv(rows.iter().copied(), BufWriter::new(File::create(p)?))?;
    }
    for s in &results {
        let slope = s.slope.map_or("undefined".to_string(), |v| format!("{v:.3}"));
        eprintln!("{}: slope {slope}, monotone {}", s.test_id, s.monotone);
    }
    Ok(())
}

fn exact(cfg: &Config, a: &ExactArgs) -> Result<()> {
    let case = cfg.case(&a.case)?;
    case.validate()?;
    let datum = case.datum()?;
    let (gauged, _) = datum.with_nonnegative_markers()?;
    let fan = solve_riemann(gauged.law(), case.left, case.right)?.centred_at(case.jump);
    let t = a.t.unwrap_or(case.t_final);
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Config(format!("sampling time {t} must be positive")));
    }
    let [lo, hi] = if a.full { case.truncation } else { case.window };
    let mut out = output(a.out.as_deref())?;
    fan.write_profile(t, &linspace(lo, hi, a.points), &mut out)?;
    out.flush()?;
    Ok(())
}

fn residual(cfg: &Config, exec: Execution, a: &OutArgs) -> Result<()> {
    let study = residual_study(cfg, exec)?;
    write_residual_csv(&study, output(a.out.as_deref())?)?;
    for (r, (m, w)) in study.rows.iter().skip(1).zip(study.ratios()) {
        eprintln!("N={}: ratio mass {m:.3}, momentum {w:.3}", r.n);
    }
    if let Some(r) = study.rows.iter().find(|r| !r.within_bound()) {
        return Err(Error::Invariant(format!("residual exceeds its bound at N = {}", r.n)));
    }
    Ok(())
}

fn check(cfg: &Config, a: &CheckArgs) -> Result<()> {
    let cases: Vec<&TestCase> = match &a.case {
        Some(id) => vec![cfg.case(id)?],
        None => cfg.cases.iter().collect(),
    };
    let mut failed = Vec::new();
    for case in cases {
        let counts = match a.particles {
            Some(n) => vec![n],
            None => case.particles.clone(),
        };
        for n in counts {
            let art = run_case_full(case, n, RunOptions::default())?;
            let r = &art.report;
            let fails = r.invariants.failures();
            let verdict = if fails.is_empty() { "ok".to_string() } else { fails.join(", ") };
            println!("{} N={}: {verdict}", r.test_id, r.n);
            if !fails.is_empty() {
                failed.push(format!("{} N={}", r.test_id, r.n));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(failed.join("; ")))
    }
}

//! Command-line front end.
//!
//! Exit codes: `analyze` returns 0 (certified stable), 1 (stable by the
//! eigenvalue check only), 2 (unstable or marginal); `simulate` returns 0
//! (converged), 1 (bounded but off target), 2 (diverged or infeasible).
//! Any error, including a usage error, returns 3.

pub mod sweep;
pub mod verify;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::scenario::ScenarioFile;
use crate::simulator::{self, write_event_log, write_summary, write_trace_csv, Outcome, TraceSummary};
use crate::stability::{full_report_with_tol, StabilityReport};

pub use sweep::{sweep, write_sweep_csv, Flip, SweepParam, SweepRange, SweepResult, SweepRow};

pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dcmg", version, about = "DC microgrid stability analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability report (maximum load, gain bound, delay margin, eigenvalues).
    Analyze {
        scenario: PathBuf,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Relative zero band for eigenvalues.
        #[arg(long)]
        tol: Option<f64>,
        /// Print a human-readable summary instead of JSON.
        #[arg(long)]
        text: bool,
    },
    /// Time-domain simulation; writes a CSV trace plus JSON sidecars.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Relative voltage / sharing tolerance for the converged outcome.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Re-analyze over a grid of one parameter and report verdict flips.
    Sweep {
        scenario: PathBuf,
        /// One of P, tau, b1, b2.
        #[arg(long)]
        param: String,
        /// lo:hi:steps
        #[arg(long)]
        range: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Seeded randomized checks of the analytic results.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplier on the default trial counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `trace.csv` -> `trace.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6}"))
}

pub fn render_report(rep: &StabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "load            P       = {:.1} W", rep.load_power);
    let _ = writeln!(s, "maximum load    P_sup   = {:.1} W", rep.p_sup);
    let _ = writeln!(s, "                Delta1  = {:.1} W (P_sup - P)", rep.delta1);
    let _ = writeln!(s, "gain ratio      gamma1  = {}", fmt_opt(rep.gamma1));
    let _ = writeln!(s, "  clipped sum           = {}", fmt_opt(rep.gamma1_clipped));
    let _ = writeln!(s, "  square-root weights   = {}", fmt_opt(rep.gamma1_square_root));
    let _ = writeln!(s, "gain bound      b2*g1   = {}", fmt_opt(rep.bound62));
    let _ = writeln!(s, "                Delta2  = {} (b1 - b2*gamma1)", fmt_opt(rep.delta2));
    let _ = writeln!(s, "delay           tau     = {} s, tau_max = {:.6} s", rep.tau, rep.tau_max);
    let _ = writeln!(s, "eigenvalues of J1:");
    let _ = writeln!(s, "  {:>14} {:>14} {:>12} {:>10}", "Re", "Im", "|chi|", "theta");
    for e in &rep.eigenvalues {
        let _ = writeln!(s, "  {:>14.6} {:>14.6} {:>12.6} {:>10.6}", e.re, e.im, e.magnitude, e.theta);
    }
    let verdict = serde_json::to_value(rep.verdict).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let _ = writeln!(s, "verdict: {verdict}");
    for n in &rep.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

pub fn render_summary(sum: &TraceSummary) -> String {
    let mut s = String::new();
    let outcome = serde_json::to_value(sum.outcome).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let _ = writeln!(s, "outcome: {outcome} (stopped at t = {:.4} s)", sum.stop_time);
    if let Some(r) = &sum.stop_reason {
        let _ = writeln!(s, "reason: {r}");
    }
    let _ = writeln!(s, "final u_L: {}", fmt_opt(sum.final_bus_voltage));
    let ratios: Vec<String> = sum.final_current_ratios.iter().map(|r| format!("{r:.4}")).collect();
    let _ = writeln!(s, "final i/k: [{}]", ratios.join(", "));
    let _ = writeln!(s, "voltage error: {}, sharing error: {}", fmt_opt(sum.final_voltage_error), fmt_opt(sum.final_sharing_error));
    for e in &sum.events {
        let _ = writeln!(s, "event at {:.4} s: {}", e.applied_at, e.description);
    }
    s
}

fn analyze(path: &Path, out: Option<&Path>, tol: Option<f64>, text: bool, stdout: &mut dyn Write) -> Result<i32> {
    let file = ScenarioFile::load(path)?;
    let cfg = file.config()?;
    let tol = tol.unwrap_or(file.analysis.eigen_tol);
    let report = full_report_with_tol(&cfg, tol)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{json}")?;
            w.flush()?;
            write!(stdout, "{}", render_report(&report))?;
        }
        None if text => write!(stdout, "{}", render_report(&report))?,
        None => writeln!(stdout, "{json}")?,
    }
    Ok(report.verdict.exit_code())
}

fn simulate(
    path: &Path,
    out: &Path,
    dt: Option<f64>,
    t_end: Option<f64>,
    tol: Option<f64>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let file = ScenarioFile::load(path)?;
    let mut sc = file.scenario()?;
    if let Some(dt) = dt {
        sc.dt = dt;
    }
    if let Some(t) = t_end {
        sc.t_end = t;
    }
    if let Some(tol) = tol {
        sc.convergence_tol = tol;
    }
    let trace = simulator::run(&sc)?;
    let mut w = create(out)?;
    write_trace_csv(&trace, &mut w)?;
    w.flush()?;
    let mut ev = create(&sidecar(out, "events.json"))?;
    write_event_log(&trace.events, &mut ev)?;
    ev.flush()?;
    write_summary(&trace, &sidecar(out, "summary.json"))?;
    write!(stdout, "{}", render_summary(&TraceSummary::of(&trace)))?;
    Ok(match trace.outcome {
        Outcome::Converged => 0,
        Outcome::RunningStable => 1,
        Outcome::Diverged | Outcome::Infeasible => 2,
    })
}

fn run_sweep(
    path: &Path,
    param: &str,
    range: &str,
    out: Option<&Path>,
    tol: Option<f64>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let param: SweepParam = param.parse()?;
    let range: SweepRange = range.parse()?;
    let file = ScenarioFile::load(path)?;
    let cfg = file.config()?;
    let result = sweep(&cfg, param, range, tol.unwrap_or(file.analysis.eigen_tol));
    match out {
        Some(p) => {
            let mut w = create(p)?;
            write_sweep_csv(&result, &mut w)?;
        }
        None => write_sweep_csv(&result, &mut *stdout)?,
    }
    for f in &result.flips {
        writeln!(stderr, "{} flip: {} -> {} between {param} = {} and {}", f.quantity, f.from, f.to, f.lo, f.hi)?;
    }
    if result.flips.is_empty() {
        writeln!(stderr, "no change over the range")?;
    }
    Ok(0)
}

fn run_verify(seed: u64, scale: f64, stdout: &mut dyn Write) -> Result<i32> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput("--scale must be positive".into()));
    }
    let results = verify::run_all(seed, scale);
    let mut ok = true;
    for r in &results {
        ok &= r.passed();
        writeln!(
            stdout,
            "{} {}: {}/{} exercised, {} failures, worst {:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.exercised,
            r.trials,
            r.failures,
            r.worst
        )?;
        for e in &r.examples {
            writeln!(stdout, "    {e}")?;
        }
    }
    Ok(if ok { 0 } else { 1 })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_ERROR,
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze { scenario, out, tol, text } => analyze(scenario, out.as_deref(), *tol, *text, stdout),
        Command::Simulate {
            scenario,
            out,
            dt,
            t_end,
            tol,
        } => simulate(scenario, out, *dt, *t_end, *tol, stdout),
        Command::Sweep {
            scenario,
            param,
            range,
            out,
            tol,
        } => run_sweep(scenario, param, range, out.as_deref(), *tol, stdout, stderr),
        Command::Verify { seed, scale } => run_verify(*seed, *scale, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

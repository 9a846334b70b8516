//! The `heatctl` command line.
//!
//! Exit status: 0 success, 1 validation failure, 2 certification failure
//! (including a failed or uncertified bound check), 3 numerical abort,
//! 64 usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, write_config, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{bound_for, check_bound, compare, run_ensemble, simulate, Run, Verdict};
use crate::kernel::{read_kernel_csv, solve_kernel, write_kernel_csv, Kernel};
use crate::output::{
    bound_report, certificate_json, certificate_report, comparison_report, kernel_report,
    write_coupled_csv, write_ensemble_csv, write_snapshots_csv, write_trajectory_csv,
};
use crate::scenario::{scenario_preset, Mode, Prepared};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CERTIFICATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const MANIFEST: &str = "manifest.cfg";

#[derive(Debug, Parser)]
#[command(
    name = "heatctl",
    version,
    about = "Boundary control of a stochastic heat equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the transform kernel, cache it and report its traces.
    Kernel(Common),
    /// Print the gain certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Also write and print the certificate as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one path and write its trajectory.
    Simulate(Common),
    /// Run an ensemble and check it against the certified bound.
    Mc(Common),
    /// Open and closed loop on common random numbers.
    Compare(Common),
    /// Print the resolved scenario in configuration syntax.
    Scenario(Common),
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// Built-in scenario: section4, remark2 or coupledZeta.
    #[arg(long)]
    preset: Option<String>,
    /// Configuration file (for example a manifest from an earlier run).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Grid nodes on [0, 1].
    #[arg(long)]
    nodes: Option<usize>,
    /// Horizon.
    #[arg(long = "T", allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Noise intensity.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Field snapshot stride in steps.
    #[arg(long)]
    snapshots: Option<usize>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument { .. }
        | Error::Dimension(_)
        | Error::OutsideTriangle { .. }
        | Error::Config { .. }
        | Error::Io(_) => EXIT_VALIDATION,
        Error::NotHurwitz { .. }
        | Error::NotObservable { .. }
        | Error::NotPositiveDefinite
        | Error::LyapunovResidual { .. }
        | Error::Uncertified { .. }
        | Error::DampingTooSmall { .. } => EXIT_CERTIFICATION,
        Error::KernelNotConverged { .. }
        | Error::SingularPivot { .. }
        | Error::NumericalAbort { .. }
        | Error::ExcessiveAborts { .. } => EXIT_NUMERICAL,
    }
}

fn resolve(common: &Common, command: &str, json: bool) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::new(
            scenario_preset(common.preset.as_deref().unwrap_or("section4"))?,
            command,
        ),
    };
    cfg.command = command.to_string();
    let s = &mut cfg.scenario;
    if let Some(v) = common.dt {
        s.dt = v;
    }
    if let Some(v) = common.nodes {
        s.nodes = v;
    }
    if let Some(v) = common.horizon {
        s.horizon = v;
    }
    if let Some(v) = common.sigma {
        s.sigma = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.paths {
        cfg.paths = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if common.snapshots.is_some() {
        cfg.snapshots = common.snapshots;
    }
    cfg.json |= json;

    cfg.scenario.validate()?;
    if matches!(command, "mc" | "compare") && cfg.paths < 2 {
        return Err(Error::invalid(
            "paths",
            format!("need at least 2, got {}", cfg.paths),
        ));
    }
    if cfg.snapshots == Some(0) {
        return Err(Error::invalid("snapshots", "stride must be at least 1"));
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Reuses `kernel.csv` in the output directory when it was solved for the
/// same grid, `c` and `a` samples.
fn cached_kernel(path: &Path, a: &[f64], c: f64) -> Result<(Kernel, bool)> {
    if let Ok(f) = File::open(path) {
        if let Ok(k) = read_kernel_csv(BufReader::new(f)) {
            if k.c == c && k.a_samples == a {
                return Ok((k, true));
            }
        }
    }
    let k = solve_kernel(a, c, a.len())?;
    let mut f = create(path)?;
    write_kernel_csv(&k, &mut f)?;
    f.flush()?;
    Ok((k, false))
}

fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Io(format!("{}: {e}", cfg.out.display())))?;
    write_text(&cfg.out.join(MANIFEST), &write_config(cfg))?;
    let s = &cfg.scenario;
    let out = |name: &str| cfg.out.join(name);

    match cfg.command.as_str() {
        "scenario" => {
            stdout.write_all(write_config(cfg).as_bytes())?;
            Ok(EXIT_OK)
        }
        "kernel" => {
            let a = s.a_samples()?;
            let (k, cached) = cached_kernel(&out("kernel.csv"), &a, s.c)?;
            let report = format!("cached={cached}\n{}", kernel_report(&k));
            write_text(&out("kernel.txt"), &report)?;
            stdout.write_all(report.as_bytes())?;
            Ok(EXIT_OK)
        }
        "certify" => {
            let p = Prepared::new(s)?;
            let cert = p.certified()?;
            let report = certificate_report(cert);
            write_text(&out("certificate.txt"), &report)?;
            stdout.write_all(report.as_bytes())?;
            if cfg.json {
                let doc = certificate_json(cert);
                write_text(&out("certificate.json"), &doc)?;
                stdout.write_all(doc.as_bytes())?;
            }
            Ok(EXIT_OK)
        }
        "simulate" => {
            let p = Prepared::new(s)?;
            match simulate(&p, cfg.seed, cfg.snapshots)? {
                Run::Field(tr) => {
                    let mut f = create(&out("trajectory.csv"))?;
                    write_trajectory_csv(&tr, &mut f)?;
                    f.flush()?;
                    if cfg.snapshots.is_some() {
                        let mut f = create(&out("snapshots.csv"))?;
                        write_snapshots_csv(&tr.snapshots, &mut f)?;
                        f.flush()?;
                    }
                    let last = tr.len() - 1;
                    writeln!(stdout, "mode={}", s.mode.name())?;
                    writeln!(stdout, "records={}", tr.len())?;
                    writeln!(stdout, "norm_sq_0={}", tr.norm_sq[0])?;
                    writeln!(stdout, "norm_sq_T={}", tr.norm_sq[last])?;
                }
                Run::Coupled(tr) => {
                    let mut f = create(&out("coupled.csv"))?;
                    write_coupled_csv(&tr, &mut f)?;
                    f.flush()?;
                    let e = tr.energy();
                    writeln!(stdout, "mode={}", s.mode.name())?;
                    writeln!(stdout, "records={}", tr.t.len())?;
                    writeln!(stdout, "energy_0={}", e[0])?;
                    writeln!(stdout, "energy_T={}", e[e.len() - 1])?;
                }
            }
            Ok(EXIT_OK)
        }
        "mc" => {
            let p = Prepared::new(s)?;
            let e = run_ensemble(&p, cfg.paths, cfg.seed)?;
            let bound = bound_for(&p);
            let mut f = create(&out("ensemble.csv"))?;
            write_ensemble_csv(&e, bound.as_ref().ok().copied().flatten(), &mut f)?;
            f.flush()?;
            let r = check_bound(&e, bound);
            let mut report = bound_report(&e, &r);
            if s.mode == Mode::Open {
                let last = e.t.len() - 1;
                report.push_str(&format!(
                    "mean_ratio_T={}\nse_ratio_T={}\n",
                    e.mean_norm_sq[last] / e.mean_norm_sq[0],
                    e.se[last] / e.mean_norm_sq[0]
                ));
            }
            write_text(&out("bound_report.txt"), &report)?;
            stdout.write_all(report.as_bytes())?;
            Ok(match r.verdict {
                Verdict::Pass | Verdict::NotApplicable => EXIT_OK,
                Verdict::Fail | Verdict::Uncertified => EXIT_CERTIFICATION,
            })
        }
        "compare" => {
            let p = Prepared::new(s)?;
            let c = compare(&p, cfg.paths, cfg.seed)?;
            for (name, e) in [
                ("ensemble_open.csv", &c.open),
                ("ensemble_closed.csv", &c.closed),
            ] {
                let mut f = create(&out(name))?;
                write_ensemble_csv(e, None, &mut f)?;
                f.flush()?;
            }
            let report = comparison_report(&c);
            write_text(&out("comparison.txt"), &report)?;
            stdout.write_all(report.as_bytes())?;
            Ok(EXIT_OK)
        }
        other => Err(Error::invalid(
            "command",
            format!("unknown command `{other}`"),
        )),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status. Reports go to `stdout`, diagnostics to `stderr`.
pub fn dispatch_to<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                ErrorKind::ValueValidation | ErrorKind::InvalidValue => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_VALIDATION
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let (name, common, json) = match &cli.command {
        Command::Kernel(c) => ("kernel", c, false),
        Command::Certify { common, json } => ("certify", common, *json),
        Command::Simulate(c) => ("simulate", c, false),
        Command::Mc(c) => ("mc", c, false),
        Command::Compare(c) => ("compare", c, false),
        Command::Scenario(c) => ("scenario", c, false),
    };
    let result = resolve(common, name, json).and_then(|cfg| run(&cfg, stdout));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}

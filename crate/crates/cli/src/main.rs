use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use polyvar::config::{run_solve, RunConfig, RunOutcome};
use polyvar::exec::Execution;
use polyvar::lab::{default_probe_grid, estimate_gn_constant, default_gn_grid, moser_trudinger_probe};
use polyvar::nonlin::{alpha_m, audit_assumptions, log_sample, EXP_GUARD};
use polyvar::profiles::random_profiles;
use polyvar::report::to_json_pretty;
use polyvar::solver::SolveReport;
use polyvar::verify::verify_candidate;
use polyvar::{Error, RadialFunction};
use serde::Serialize;

const EXIT_PARSE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(name = "polyvar", version, about = "Normalized radial solutions of polyharmonic equations with exponential nonlinearities")]
struct Cli {
    /// Worker threads for seed batteries and validation runs; `solve`
    /// defaults to the config's `workers`, other commands to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write the report and profile.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Solve even when the admissibility gate or the audit refuses.
        #[arg(long)]
        force: bool,
        /// Directory receiving report.json and profile.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the structural assumptions on the nonlinearity.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutFile,
    },
    /// Estimate a Gagliardo–Nirenberg constant.
    Gn {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Size of the random validation battery (0 skips it).
        #[arg(long, default_value_t = 1000)]
        validate: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        out: OutFile,
    },
    /// Moser–Trudinger probe on the concentrating family.
    MtProbe {
        #[arg(long)]
        alpha_ratio: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        family_size: usize,
        #[command(flatten)]
        out: OutFile,
    },
    /// Re-run every check on a saved solve report.
    Verify {
        report: PathBuf,
        #[command(flatten)]
        out: OutFile,
    },
}

#[derive(Args)]
struct OutFile {
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit code and message for a failed command.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let code = match e.downcast_ref::<Error>() {
            Some(Error::Parse(_) | Error::Io(_)) => EXIT_PARSE,
            Some(Error::Precondition(_)) => EXIT_REFUSED,
            _ if e.downcast_ref::<serde_json::Error>().is_some() => EXIT_PARSE,
            _ => EXIT_SOLVER,
        };
        Failure(code, e)
    }
}

fn parse_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure(EXIT_PARSE, e.into())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(parse_failure)
}

fn emit<T: Serialize>(value: &T, out: &OutFile) -> Result<(), Failure> {
    let json = to_json_pretty(value)?;
    match &out.out {
        Some(path) => write_text(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

/// Runs `f` inside a pool of `workers` threads (0 means one per core).
#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: usize, f: impl FnOnce(Execution) -> T + Send) -> Result<T, Failure> {
    let exec = if workers == 1 { Execution::Sequential } else { Execution::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| f(exec)))
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(workers: usize, f: impl FnOnce(Execution) -> T + Send) -> Result<T, Failure> {
    if workers > 1 {
        warn!("built without the parallel feature; running sequentially");
    }
    Ok(f(Execution::Sequential))
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| parse_failure(anyhow::Error::new(e).context(format!("config {}", path.display()))))
}

fn solve(config_path: &Path, force: bool, out: Option<&Path>, workers: Option<usize>) -> Result<u8, Failure> {
    let config = load(config_path)?;
    let workers = workers.unwrap_or(config.workers);
    let (report_path, profile_path) = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(parse_failure)?;
            (Some(dir.join("report.json")), Some(dir.join("profile.csv")))
        }
        None => (config.outputs.report_path.clone(), config.outputs.profile_path.clone()),
    };
    let report = match with_workers(workers, |exec| run_solve(&config, force, exec))?? {
        RunOutcome::Refused { reason, admissibility } => {
            eprintln!("refused: {reason}");
            if let Some(a) = admissibility {
                eprintln!("beta threshold = {:.10e}, eta C_4^4 rho = {:.6}", a.beta_threshold, a.hstrict_value);
            }
            eprintln!("pass --force to solve anyway");
            return Ok(EXIT_REFUSED);
        }
        RunOutcome::Solved(report) => report,
    };
    let json = to_json_pretty(&report)?;
    match &report_path {
        Some(p) => write_text(p, &json)?,
        None => println!("{json}"),
    }
    if let Some(p) = &profile_path {
        let (_, u) = report.rebuild()?;
        write_text(p, &u.to_csv())?;
    }
    info!("lambda = {:.12e}, J = {:.12e}", report.lambda, report.energy);
    let verified = report.verification.as_ref().is_some_and(|v| v.all_ok);
    if !report.is_success() || !verified {
        warn!("verification failed");
        return Ok(EXIT_VERIFY);
    }
    Ok(0)
}

fn audit(config_path: &Path, out: &OutFile, exec: Execution) -> Result<u8, Failure> {
    let config = load(config_path)?;
    let constants = if config.params.needs_constants() { Some(config.constants()?) } else { None };
    let params = config.params.resolve(constants)?;
    let nl = config.nonlinearity.build(&params)?;
    let grid = std::sync::Arc::new(config.build_grid()?);
    let probes = random_profiles(&grid, 10, 7, exec)?;
    let probes: Vec<RadialFunction> = probes.into_iter().map(|u| u.scaled(0.1)).collect();
    let s_max = if params.alpha > 0.0 { (0.5 * EXP_GUARD / params.alpha).sqrt().min(4.0) } else { 4.0 };
    let report = audit_assumptions(nl.as_ref(), &params, &log_sample(1e-4 * s_max, s_max, 200), &probes)?;
    emit(&report, out)?;
    Ok(if report.all_passed { 0 } else { EXIT_VERIFY })
}

fn gn(p: f64, m: usize, iters: usize, count: usize, seed: u64, out: &OutFile, exec: Execution) -> Result<u8, Failure> {
    let mut est = estimate_gn_constant(p, m, default_gn_grid(m)?, iters)?;
    let mut ok = est.converged;
    if count > 0 {
        ok &= est.validate(count, seed, exec)?.violations == 0;
    }
    emit(&est, out)?;
    Ok(if ok { 0 } else { EXIT_VERIFY })
}

fn mt_probe(ratio: f64, m: usize, family_size: usize, out: &OutFile) -> Result<u8, Failure> {
    let report = moser_trudinger_probe(m, ratio * alpha_m(m), default_probe_grid(m)?, family_size)?;
    emit(&report, out)?;
    Ok(0)
}

fn verify(path: &Path, out: &OutFile) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(parse_failure)?;
    let report: SolveReport = serde_json::from_str(&text).map_err(parse_failure)?;
    let (problem, u) = report.rebuild()?;
    let constants = report.admissibility.as_ref().map(|a| (a.c4, a.cp));
    let params = problem.params();
    let constants = constants.filter(|(c4, _)| 0.5 * params.eta * c4.powi(4) * params.rho < 1.0);
    let check = verify_candidate(&problem, &u, report.lambda, Some(report.energy), constants)?;
    emit(&check, out)?;
    Ok(if check.all_ok { 0 } else { EXIT_VERIFY })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let workers = cli.workers.unwrap_or(0);
    match cli.command {
        Command::Solve { config, force, out } => solve(&config, force, out.as_deref(), cli.workers),
        Command::Audit { config, out } => with_workers(workers, |exec| audit(&config, &out, exec))?,
        Command::Gn { p, m, iters, validate, seed, out } => {
            with_workers(workers, |exec| gn(p, m, iters, validate, seed, &out, exec))?
        }
        Command::MtProbe { alpha_ratio, m, family_size, out } => mt_probe(alpha_ratio, m, family_size, &out),
        Command::Verify { report, out } => verify(&report, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLYVAR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

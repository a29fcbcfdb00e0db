//! nlsmod: solve, evolve, verify and sample from a TOML run configuration.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use nlsmod::config::{Format, RunConfig};
use nlsmod::evolution::evolve;
use nlsmod::modulation::newton_solve;
use nlsmod::report::to_json;
use nlsmod::rhp::RhpSolution;
use nlsmod::sample::sample_grid;
use nlsmod::verify::run_suite;
use nlsmod::Error;
use serde::Serialize;

const OK: u8 = 0;
const VERIFY_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const NON_CONVERGENCE: u8 = 3;
const DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nlsmod",
    version,
    about = "g-function and modulation engine for the semiclassical focusing NLS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output file; overrides output.path. Standard output when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Newton solve of the modulation equations at (x, t).
    Solve,
    /// Sweep the branchpoints along x or t.
    Evolve,
    /// Run the verification suite on the configured branchpoints.
    Verify,
    /// Evaluate g, h and K on a grid.
    Sample,
}

/// Exit code for an engine error.
fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnknownIdentifier { .. }
        | Error::Branchpoints(_)
        | Error::Geometry(_)
        | Error::Placement(_)
        | Error::OnContour { .. }
        | Error::Invalid(_) => CONFIG_ERROR,
        Error::Degenerate(_) | Error::IllConditioned { .. } => DEGENERATE,
        Error::NonConvergence { .. }
        | Error::Quadrature { .. }
        | Error::Eval(_)
        | Error::Singular { .. } => NON_CONVERGENCE,
    }
}

struct Run {
    cfg: RunConfig,
    out: Option<PathBuf>,
}

impl Run {
    fn format(&self, default: Format) -> Format {
        self.cfg.output.format.unwrap_or(default)
    }

    /// JSON with the effective config echoed under "config".
    fn json<T: Serialize>(&self, report: &T, cfg: &RunConfig) -> Result<String, Error> {
        let mut v = serde_json::to_value(report).map_err(|e| Error::Invalid(e.to_string()))?;
        if let serde_json::Value::Object(m) = &mut v {
            m.insert(
                "config".into(),
                serde_json::to_value(cfg).map_err(|e| Error::Invalid(e.to_string()))?,
            );
        }
        to_json(&v)
    }

    fn write(&self, text: &str) -> Result<(), Error> {
        let target = self
            .out
            .clone()
            .or_else(|| self.cfg.output.path.as_ref().map(PathBuf::from));
        match target {
            Some(p) => {
                std::fs::write(&p, text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                info!("wrote {}", p.display());
            }
            None => {
                let mut s = std::io::stdout().lock();
                s.write_all(text.as_bytes())
                    .and_then(|_| s.flush())
                    .map_err(|e| Error::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn solve(run: &Run) -> Result<u8, Error> {
    let cfg = &run.cfg;
    let out = newton_solve(
        &cfg.branchpoints()?,
        &cfg.scattering()?,
        cfg.x,
        cfg.t,
        &cfg.engine(),
        &cfg.newton,
    )?;
    let echo = cfg.with_alphas(out.solution.bps());
    run.write(&run.json(&out.report, &echo)?)?;
    if out.report.converged {
        Ok(OK)
    } else {
        error!("{}", out.report.message);
        Ok(NON_CONVERGENCE)
    }
}

fn evolve_cmd(run: &Run) -> Result<u8, Error> {
    let cfg = &run.cfg;
    let sweep = cfg
        .sweep
        .ok_or_else(|| Error::Config("evolve needs a [sweep] table".into()))?;
    let tr = evolve(
        &cfg.branchpoints()?,
        &cfg.scattering()?,
        cfg.x,
        cfg.t,
        &sweep,
        &cfg.engine(),
        &cfg.newton,
        &cfg.evolve,
    )?;
    let text = match run.format(Format::Csv) {
        Format::Csv => tr.to_csv(),
        Format::Json => run.json(&tr, cfg)?,
    };
    run.write(&text)?;
    if tr.truncated {
        error!(
            "sweep stopped early: {}",
            tr.stop_reason
                .as_deref()
                .unwrap_or("degenerate configuration")
        );
        Ok(DEGENERATE)
    } else {
        Ok(OK)
    }
}

/// The configured solution, optionally after a Newton solve.
fn solution(cfg: &RunConfig, solve_first: bool) -> Result<(RhpSolution, RunConfig), Error> {
    let (bps, sd) = (cfg.branchpoints()?, cfg.scattering()?);
    if solve_first {
        let out = newton_solve(&bps, &sd, cfg.x, cfg.t, &cfg.engine(), &cfg.newton)?;
        if !out.report.converged {
            let last = out
                .report
                .residual_history
                .last()
                .copied()
                .unwrap_or(f64::NAN);
            return Err(Error::NonConvergence {
                iterations: out.report.iterations,
                residual: last,
            });
        }
        let echo = cfg.with_alphas(out.solution.bps());
        Ok((out.solution, echo))
    } else {
        Ok((
            RhpSolution::solve(&bps, &sd, cfg.x, cfg.t, &cfg.engine())?,
            cfg.clone(),
        ))
    }
}

fn verify_cmd(run: &Run) -> Result<u8, Error> {
    let (sol, echo) = solution(&run.cfg, run.cfg.verify.solve_first)?;
    let rep = run_suite(&sol, &run.cfg.verify)?;
    for c in &rep.checks {
        info!("{}: {:?}", c.name, c.status);
    }
    run.write(&run.json(&rep, &echo)?)?;
    Ok(if rep.all_passed { OK } else { VERIFY_FAILED })
}

fn sample_cmd(run: &Run) -> Result<u8, Error> {
    let grid = run
        .cfg
        .sample
        .clone()
        .ok_or_else(|| Error::Config("sample needs a [sample] table".into()))?;
    let (sol, echo) = solution(&run.cfg, grid.solve_first)?;
    let rep = sample_grid(&sol, &grid)?;
    let text = match run.format(Format::Csv) {
        Format::Csv => rep.to_csv(),
        Format::Json => run.json(&rep, &echo)?,
    };
    run.write(&text)?;
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    nlsmod::par::configure(cli.jobs);

    let Some(path) = cli.config.as_ref() else {
        error!("--config is required");
        eprintln!("error: --config PATH is required");
        return ExitCode::from(CONFIG_ERROR);
    };
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let run = Run {
        cfg,
        out: cli.out.clone(),
    };
    let result = match cli.command {
        Command::Solve => solve(&run),
        Command::Evolve => evolve_cmd(&run),
        Command::Verify => verify_cmd(&run),
        Command::Sample => sample_cmd(&run),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_for(&e))
        }
    }
}

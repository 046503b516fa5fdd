use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dde_hjb::checks::{self, CheckOutcome, CHECK_NAMES};
use dde_hjb::config::{fmt_num, read_init, read_x, RunConfig};
use dde_hjb::dde::simulate;
use dde_hjb::structural::{build_x1, M2Point};
use dde_hjb::value::value_w;
use dde_hjb::{ControlGrid, Error, InitialTriple};

const EXIT_USAGE: u8 = 1;
const EXIT_CRITERION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "ddehjb", version, about = "Delay-control simulations, penalized value functions and HJB checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the state equation; writes trajectory.csv
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV with columns phi1,omega on the history nodes
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for W_n over the configured n list; writes value.csv
    Value {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "x")]
        init: Option<PathBuf>,
        /// Single-column CSV with header x1 (x0 comes from x.x0)
        #[arg(long)]
        x: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run named checks; writes check.json
    Check {
        #[arg(long)]
        config: PathBuf,
        /// equivalence | legendre | dpp | hjb | rollout | all
        #[arg(long)]
        which: String,
        #[arg(long, conflicts_with = "x")]
        init: Option<PathBuf>,
        #[arg(long)]
        x: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Criterion(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Io { .. } | Error::LengthMismatch { .. } | Error::NonFinite(_) => {
                Failure::Usage(e.to_string())
            }
            Error::InvalidModel(_) | Error::InvalidGrid(_) | Error::OffGrid(_) => Failure::Usage(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, file: &str, body: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| Failure::Usage(format!("stdout: {e}")))
        }
    }
}

fn starting_point(cfg: &RunConfig, init: Option<&Path>, x: Option<&Path>) -> Result<M2Point, Failure> {
    match (init, x) {
        (_, Some(path)) => Ok(read_x(path, cfg)?),
        (Some(path), None) => {
            let triple = read_init(path, cfg)?;
            Ok(build_x1(&cfg.model, &triple, cfg.grid.delta())?)
        }
        (None, None) => Err(Failure::Usage("give --init or --x".into())),
    }
}

fn cmd_simulate(config: &Path, init: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let triple = read_init(init, &cfg)?;
    let traj = simulate(&cfg.model, &cfg.grid, &triple, &cfg.control_grid())?;
    let mut body = String::from("s,k,kdot,output,i,c\n");
    for j in 0..traj.k.len() {
        let row = [traj.times[j], traj.k[j], traj.kdot[j], traj.output[j], traj.investment[j], traj.control[j]];
        body.push_str(&row.map(fmt_num).join(","));
        body.push('\n');
    }
    emit(out, "trajectory.csv", &body)
}

fn cmd_value(config: &Path, init: Option<&Path>, x: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let point = starting_point(&cfg, init, x)?;
    let table = value_w(&cfg.objective(None), &point, &cfg.ns)?;
    let mut body = String::from("n,W_n,iterations,constraint_violation,gap_estimate,converged\n");
    for (n, r) in table.ns.iter().zip(&table.results) {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_num(*n),
            fmt_num(r.value),
            r.iterations,
            fmt_num(r.constraint_violation),
            fmt_num(r.gap_estimate),
            r.converged
        ));
    }
    let tail = table.differences.last().copied().unwrap_or(0.0);
    body.push_str(&format!("W,{},,,{},{}\n", fmt_num(table.estimate), fmt_num(tail), table.monotone));
    emit(out, "value.csv", &body)?;
    let unconverged = table.results.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        eprintln!("warning: {unconverged} solve(s) did not converge (see the converged column)");
    }
    if !table.monotone {
        return Err(Failure::Criterion("W_n is not nonincreasing in n".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Report {
    which: String,
    seed: u64,
    pass: bool,
    criteria: Vec<CheckOutcome>,
}

fn run_check(cfg: &RunConfig, name: &str, point: Option<&M2Point>, init: Option<&Path>, seed: u64) -> Result<CheckOutcome, Failure> {
    let need_point = || point.ok_or_else(|| Failure::Usage(format!("check '{name}' needs --init or --x")));
    let spec = cfg.objective(Some(*cfg.ns.last().expect("nonempty n list")));
    Ok(match name {
        "equivalence" => {
            // zero data unless a history file is given
            let triple = match init {
                Some(path) => read_init(path, cfg)?,
                None => InitialTriple::constant(0.0, 0.0, 0.0, cfg.grid.n_r),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = checks::equivalence(&cfg.model, &cfg.grid, &triple, &cfg.control_grid())?;
            for _ in 0..cfg.samples {
                let c = ControlGrid::new((0..cfg.grid.n_t).map(|_| rng.gen_range(0.0..1.0)).collect());
                let o = checks::equivalence(&cfg.model, &cfg.grid, &triple, &c)?;
                if o.measured > worst.measured {
                    worst = o;
                }
            }
            worst.detail = format!("{} controls, {}", cfg.samples + 1, worst.detail);
            worst
        }
        "legendre" => checks::legendre(&cfg.running, &cfg.ns),
        "dpp" => checks::dpp(&spec, need_point()?, &cfg.splits)?,
        "hjb" => checks::hjb(&spec, need_point()?, cfg.bump)?,
        "rollout" => checks::rollout(&spec, need_point()?, cfg.bump, 5e-2)?,
        other => return Err(Failure::Usage(format!("unknown check '{other}'"))),
    })
}

fn cmd_check(
    config: &Path,
    which: &str,
    init: Option<&Path>,
    x: Option<&Path>,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let names: Vec<&str> = match which {
        "all" => CHECK_NAMES.to_vec(),
        n if CHECK_NAMES.contains(&n) => vec![n],
        other => return Err(Failure::Usage(format!("unknown check '{other}'"))),
    };
    let cfg = RunConfig::load(config)?;
    let point = if init.is_some() || x.is_some() {
        Some(starting_point(&cfg, init, x)?)
    } else {
        None
    };
    let criteria = names
        .iter()
        .map(|n| run_check(&cfg, n, point.as_ref(), init, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = criteria.iter().all(|c| c.pass || !c.hard);
    let report = Report {
        which: which.to_string(),
        seed,
        pass,
        criteria,
    };
    let mut body = serde_json::to_string_pretty(&report).map_err(|e| Failure::Usage(e.to_string()))?;
    body.push('\n');
    emit(out, "check.json", &body)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Criterion("some hard criteria failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, init, out } => cmd_simulate(config, init, out.as_deref()),
        Command::Value { config, init, x, out } => cmd_value(config, init.as_deref(), x.as_deref(), out.as_deref()),
        Command::Check {
            config,
            which,
            init,
            x,
            seed,
            out,
        } => cmd_check(config, which, init.as_deref(), x.as_deref(), *seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Criterion(msg)) => {
            eprintln!("criterion failed: {msg}");
            ExitCode::from(EXIT_CRITERION)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

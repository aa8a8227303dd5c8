//! `rbmpc` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad arguments, unreadable
//! or malformed config, setups that fail validation), 2 for numerical
//! failures during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbmpc::certify::{alpha_hat, beta_bar, certificate, z_n_membership};
use rbmpc::config::{load_experiment, parse_vector};
use rbmpc::scheme::initialize;
use rbmpc::sim::{self, compare_methods, write_comparison, write_outputs};
use rbmpc::{Error, ExperimentConfig, InitMode, InitialStates, IterationSchedule, Method, MpcProblem};

#[derive(Parser)]
#[command(name = "rbmpc", version, about = "Relaxed-barrier MPC with an anytime iteration scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a problem and report horizon, constraint count and Hessian bounds.
    Check(Common),
    /// Run the closed loop for every initial state of the config.
    Simulate(Common),
    /// Mean cost curves of several line-search methods from random initial states.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Number of random initial states.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Certificates for the first initial state: surplus, violation bounds and membership.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Initial state, comma separated; defaults to the first state of the config.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Initialization of the input sequence (zero, gain, optimal).
        #[arg(long)]
        init: Option<InitMode>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Updates per step: an integer, or a comma-separated list cycled over time.
    #[arg(long)]
    schedule: Option<IterationSchedule>,
    #[arg(long)]
    method: Option<Method>,
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_experiment(&common.config)?;
    if let Some(s) = &common.schedule {
        cfg.schedule = s.clone();
    }
    if let Some(m) = common.method {
        cfg.ls.method = m;
    }
    if let (Some(seed), InitialStates::Random { seed: s, .. }) = (common.seed, &mut cfg.x0) {
        *s = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check(common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let problem = MpcProblem::build(cfg.problem)?;
    let cp = &problem.cp;
    let (sigma, l) = cp.constants();
    let beta = beta_bar(&problem.bar_x, &problem.bar_u);
    println!("setup valid");
    println!("n={} m={} N={} q={}", cp.n(), cp.m(), cp.horizon(), cp.q());
    println!("sigma={sigma:.6e} L={l:.6e}");
    println!("beta_x={:.6e} beta_u={:.6e} beta={:.6e}", beta.beta_x, beta.beta_u, beta.beta);
    Ok(())
}

fn simulate(common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let logs = sim::simulate(&cfg)?;
    for (i, log) in logs.iter().enumerate() {
        let last = log.rows.last().map_or(f64::NAN, |r| r.cost);
        let settled = log.settled_step().map_or("-".to_string(), |k| k.to_string());
        println!(
            "trajectory {i}: x0={:?} final_cost={last:.3e} max_violation={:.3e} settled_step={settled}",
            log.x0,
            log.max_violation(&cfg.problem)
        );
    }
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &cfg, &logs)?;
        println!("wrote {} trajectories to {}", logs.len(), dir.display());
    }
    Ok(())
}

fn compare(common: &Common, samples: usize) -> Result<(), Error> {
    let cfg = load(common)?;
    let seed = common.seed.unwrap_or(match cfg.x0 {
        InitialStates::Random { seed, .. } => seed,
        InitialStates::List(_) => 0,
    });
    let methods = match common.method {
        Some(m) => vec![m],
        None => cfg.methods.clone(),
    };
    let summary = compare_methods(&cfg, &methods, samples, seed)?;
    for c in &summary.curves {
        let at = |k: usize| c.mean_cost.get(k).map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!("{:6} mean cost k=0 {} k=20 {} k=50 {}", c.label, at(0), at(20), at(50));
    }
    if let Some(dir) = &cfg.out_dir {
        write_comparison(dir, &summary)?;
        println!("wrote comparison to {}", dir.display());
    }
    Ok(())
}

fn certify(common: &Common, x0: Option<&[f64]>, init: Option<InitMode>) -> Result<(), Error> {
    let cfg = load(common)?;
    let x = match x0 {
        Some(v) => parse_vector(&serde_json::json!(v), "--x0")?,
        None => sim::initial_states(&cfg)?.remove(0),
    };
    if x.len() != cfg.problem.n() {
        return Err(Error::Dimension {
            what: "--x0",
            expected: cfg.problem.n(),
            found: x.len(),
        });
    }
    let eps = cfg.problem.epsilon;
    let problem = MpcProblem::build(cfg.problem.clone())?;
    let state = initialize(init.unwrap_or(cfg.init_mode), &x, &problem)?;
    let beta = beta_bar(&problem.bar_x, &problem.bar_u);
    let alpha = alpha_hat(&problem.cp, &problem.terminal.p_uc, &state.u, &x);
    let member = z_n_membership(&problem.cp, &problem.terminal.p_uc, beta.beta, eps, &state.u, &x);
    let cert = certificate(&problem, &state.u, &x, 0);
    println!("x0={:?}", x.as_slice());
    println!("alpha_hat={alpha:.6e}");
    println!("beta_x={:.6e} beta_u={:.6e} beta={:.6e}", beta.beta_x, beta.beta_u, beta.beta);
    println!("epsilon*beta={:.6e}", eps * beta.beta);
    println!("zx={:?}", cert.zx.as_slice());
    println!("zu={:?}", cert.zu.as_slice());
    println!("membership={member}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Check(c) => check(c),
        Command::Simulate(c) => simulate(c),
        Command::Compare { common, samples } => compare(common, *samples),
        Command::Certify { common, x0, init } => certify(common, x0.as_deref(), *init),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

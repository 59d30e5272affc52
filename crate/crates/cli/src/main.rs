use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use safecampus_core::orchestrator::run_dir_for;
use safecampus_core::{load_config, run_evaluation, run_sweep, run_training, Error, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Train,
    Eval,
    Sweep,
}

/// Tabular Q-learning for campus occupancy under an SI epidemic model.
#[derive(Debug, Parser)]
#[command(name = "safecampus", version)]
struct Args {
    mode: Mode,
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Reward weight on attendance; replaces alpha_r (and the sweep list in sweep mode).
    #[arg(long, value_name = "W")]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; defaults to the config value, then $SAFECAMPUS_OUT, then ./results.
    #[arg(long, value_name = "PATH")]
    out_dir: Option<PathBuf>,
    /// Training episodes for train, evaluation episodes for eval and sweep.
    #[arg(long, value_name = "N")]
    episodes: Option<usize>,
}

enum Failure {
    User(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        if err.is_user_error() {
            Failure::User(err.to_string())
        } else {
            Failure::Runtime(err.to_string())
        }
    }
}

fn resolve(args: &Args) -> Result<RunConfig, Failure> {
    let mut config = load_config(&args.config).map_err(|e| match e {
        Error::Io { .. } => Failure::User(e.to_string()),
        other => other.into(),
    })?;
    if let Some(alpha) = args.alpha {
        config.hp.alpha_r = alpha;
        config.sweep.alphas = vec![alpha];
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        config.output_dir = dir.clone();
    }
    match (args.mode, args.episodes) {
        (_, Some(0)) => return Err(Failure::User("--episodes must be at least 1".into())),
        (Mode::Train, Some(n)) => config.hp.max_episodes = n,
        (_, Some(n)) => config.eval_episodes = n,
        (_, None) => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &Args) -> Result<(), Failure> {
    let config = resolve(args)?;
    match args.mode {
        Mode::Train => {
            let dir = run_training(&config)?;
            println!("trained alpha_r={} seed={} -> {}", config.alpha_r(), config.seed, dir.display());
        }
        Mode::Eval => {
            let dir = run_dir_for(&config);
            let s = run_evaluation(&config, &dir, config.eval_episodes)?;
            println!(
                "alpha_r={} episodes={} mean_allowed={:.3} mean_infected={:.3} mean_reward={:.3}",
                s.alpha_r, s.episodes, s.mean_allowed, s.mean_infected, s.mean_reward
            );
        }
        Mode::Sweep => {
            let report = run_sweep(&config)?;
            for p in &report.points {
                println!("alpha_r={} mean_allowed={:.3} mean_infected={:.3}", p.alpha_r, p.mean_allowed, p.mean_infected);
            }
            let failed: Vec<String> = report
                .failures()
                .map(|c| match &c.outcome {
                    Err(e) => format!("alpha_r={} seed={}: {e}", c.alpha_r, c.seed),
                    Ok(_) => unreachable!(),
                })
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Runtime(format!("{} sweep run(s) failed\n  {}", failed.len(), failed.join("\n  "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

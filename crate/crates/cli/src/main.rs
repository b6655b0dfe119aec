//! `natgrad` — drive the simulator from one TOML configuration: run
//! natural-gradient descent, build and validate measurement plans, report
//! shot-budget bounds, and sweep system sizes. Every output is determined by
//! the configuration and the root seed alone.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::{parse_mode_arg, parse_sizes_arg, parse_theta_arg, Config, ConfigError, EpsMode};

#[derive(Parser)]
#[command(name = "natgrad", version, about = "Measurement-cost analysis for natural-gradient descent")]
struct Cli {
    /// Configuration file (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to $NATGRAD_OUT_DIR, then the current
    /// directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores). Results
    /// are identical at any setting.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run natural-gradient descent and write the per-iteration trace.
    Evolve {
        /// Iteration count, overriding the config file.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Regularization strength, overriding the config file.
        #[arg(long)]
        eta: Option<f64>,
        /// Step size, overriding the config file.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Build a measurement plan at one parameter point.
    Allocate {
        /// Parameter point: "random", "zero", or comma-separated angles.
        #[arg(long)]
        theta: Option<String>,
        /// Absolute accuracy target, overriding the config file.
        #[arg(long)]
        eps: Option<f64>,
        /// Plan mode: uniform, optimal, or optimal_symmetric.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Check a plan's predicted error against repeated simulated sampling.
    Validate {
        /// Parameter point: "random", "zero", or comma-separated angles.
        #[arg(long)]
        theta: Option<String>,
        /// Absolute accuracy target, overriding the config file.
        #[arg(long)]
        eps: Option<f64>,
        /// Plan mode: uniform, optimal, or optimal_symmetric.
        #[arg(long)]
        mode: Option<String>,
        /// Monte-Carlo repetitions (at least 100).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Sweep qubit counts and report metric-vs-gradient cost ratios.
    Scan {
        /// Comma-separated qubit counts, overriding the config file.
        #[arg(long)]
        sizes: Option<String>,
        /// Instances per qubit count, overriding the config file.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Report worst-case and exact shot requirements at one point.
    Bounds {
        /// Parameter point: "random", "zero", or comma-separated angles.
        #[arg(long)]
        theta: Option<String>,
        /// Absolute accuracy target, overriding the config file.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Print the resolved configuration and derived system quantities.
    Inspect,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Configuration problems exit 2; everything else exits 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<natgrad::Error>() {
        if matches!(
            e,
            natgrad::Error::InvalidArgument(_) | natgrad::Error::Parse(_)
        ) {
            return 2;
        }
    }
    1
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError("a configuration file is required (--config <path>)".into()))?;
    let mut cfg = Config::load(path)?;
    apply_overrides(&mut cfg, cli)?;
    cfg.check()?;
    let out = output_dir(cli);
    if !matches!(cli.command, Command::Inspect) {
        std::fs::create_dir_all(&out)
            .map_err(|e| ConfigError(format!("output directory {}: {e}", out.display())))?;
    }
    match &cli.command {
        Command::Evolve { .. } => commands::evolve(&cfg, &out),
        Command::Allocate { .. } => commands::allocate(&cfg, &out),
        Command::Validate { .. } => commands::validate(&cfg, &out),
        Command::Scan { .. } => commands::scan(&cfg, &out),
        Command::Bounds { .. } => commands::bounds(&cfg, &out),
        Command::Inspect => commands::inspect(&cfg),
    }
}

fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    if let Ok(dir) = std::env::var("NATGRAD_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    Path::new(".").to_path_buf()
}

/// Fold command-line flags into the configuration so the echoed config is
/// the one that actually ran.
fn apply_overrides(cfg: &mut Config, cli: &Cli) -> Result<(), ConfigError> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let set_eps = |cfg: &mut Config, eps: &Option<f64>| {
        if let Some(value) = eps {
            cfg.eps.mode = EpsMode::Absolute;
            cfg.eps.value = *value;
        }
    };
    let set_theta = |cfg: &mut Config, theta: &Option<String>| -> Result<(), ConfigError> {
        if let Some(arg) = theta {
            cfg.point = parse_theta_arg(arg)?;
        }
        Ok(())
    };
    match &cli.command {
        Command::Evolve {
            max_iters,
            eta,
            lambda,
        } => {
            if let Some(it) = max_iters {
                cfg.solver.max_iters = *it;
            }
            if let Some(eta) = eta {
                cfg.solver.eta = *eta;
            }
            if let Some(lambda) = lambda {
                cfg.solver.lambda = *lambda;
            }
        }
        Command::Allocate { theta, eps, mode } => {
            set_theta(cfg, theta)?;
            set_eps(cfg, eps);
            if let Some(mode) = mode {
                cfg.allocate.mode = parse_mode_arg(mode)?;
            }
        }
        Command::Validate {
            theta,
            eps,
            mode,
            trials,
        } => {
            set_theta(cfg, theta)?;
            set_eps(cfg, eps);
            if let Some(mode) = mode {
                cfg.validate.mode = parse_mode_arg(mode)?;
            }
            if let Some(trials) = trials {
                cfg.validate.trials = *trials;
            }
        }
        Command::Scan { sizes, instances } => {
            if let Some(sizes) = sizes {
                cfg.scan.sizes = parse_sizes_arg(sizes)?;
            }
            if let Some(instances) = instances {
                cfg.scan.instances = *instances;
            }
        }
        Command::Bounds { theta, eps } => {
            set_theta(cfg, theta)?;
            set_eps(cfg, eps);
        }
        Command::Inspect => {}
    }
    Ok(())
}

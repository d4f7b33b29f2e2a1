use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use mvldp_cli::{config_text_from, exit, parse_config_for, run, CliError, Subcommand};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error
  3  invalid configuration
  4  invalid model or failed assumption check
  5  numerical failure
  6  I/O failure";

#[derive(Parser)]
#[command(name = "mvldp", version, about = "Simulation and rate-function tools for slow-fast McKean-Vlasov systems with jumps", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Simulate the particle system, optionally under a control
    Simulate,
    /// Solve the averaged equation and optionally measure the averaging error
    Average,
    /// Solve the controlled averaged equation for a given control
    Skeleton,
    /// Optimize the endpoint rate function
    Rate,
    /// Estimate tail probabilities by plain or importance-sampled Monte Carlo
    Ldp,
    /// Probe the model's regularity assumptions
    Check,
}

#[derive(Args)]
struct Common {
    /// Config file, or a manifest.json written by an earlier run (required)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `[run] out`
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores)
    #[arg(long, global = true, value_name = "N", env = "MVLDP_THREADS")]
    threads: Option<usize>,
    /// Print errors only
    #[arg(long, global = true)]
    quiet: bool,
}

impl Command {
    fn subcommand(&self) -> Subcommand {
        match self {
            Command::Simulate => Subcommand::Simulate,
            Command::Average => Subcommand::Average,
            Command::Skeleton => Subcommand::Skeleton,
            Command::Rate => Subcommand::Rate,
            Command::Ldp => Subcommand::Ldp,
            Command::Check => Subcommand::Check,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (subcommand, args) = (cli.command.subcommand(), cli.common);
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match execute(subcommand, &args) {
        Ok(()) => exit::OK,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    };
    ExitCode::from(code as u8)
}

fn execute(subcommand: Subcommand, args: &Common) -> Result<(), (i32, String)> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err((exit::USAGE, "--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| (exit::USAGE, e.to_string()))?;
    }
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| (exit::USAGE, "--config PATH is required".to_string()))?;
    let contents =
        std::fs::read_to_string(path).map_err(|e| (exit::IO, format!("cannot read {}: {e}", path.display())))?;
    let text = config_text_from(&contents)
        .ok_or_else(|| (exit::CONFIG, format!("{} is not a config file or manifest", path.display())))?;
    let mut cfg = parse_config_for(&text, Some(subcommand)).map_err(|e| {
        let err = CliError::Config(e);
        (err.exit_code(), format!("{}:\n{err}", path.display()))
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    log::info!("{} with seed {}, writing to {}", subcommand, cfg.seed, cfg.out.display());
    match run(&cfg) {
        Ok(outcome) => {
            if !args.quiet {
                print!("{}", outcome.summary);
            }
            Ok(())
        }
        Err(e) => Err((e.exit_code(), e.to_string())),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use cartpush_cli::commands;
use cartpush_cli::{CliError, CliResult, Suite};
use clap::{Parser, Subcommand};

/// Simulate a balancing robot pushing a wheelchair-like cart.
#[derive(Debug, Parser)]
#[command(name = "cartpush", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $CARTPUSH_OUT).
        #[arg(long, env = "CARTPUSH_OUT")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay the parameter filter over a recorded trace.
    Identify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, env = "CARTPUSH_OUT")]
        out: PathBuf,
        /// Cart geometry and filter settings (default config if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a canned scenario suite and print a pass/fail table.
    Benchmark {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, env = "CARTPUSH_OUT")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let m = commands::simulate(&config, &out, seed)?;
            println!("wrote {} ({} steps analysed)", out.display(), m.steps.len());
        }
        Command::Identify { trace, out, config } => {
            let s = commands::identify(&trace, &out, config.as_deref())?;
            let e = s.estimate;
            println!(
                "m={:.3} kg p=({:.4}, {:.4}) m I={:.4} kg m^2 sigma={:.4} after {} cycles ({} degenerate)",
                e.m_w, e.p_x, e.p_y, e.i_w, e.sigma, s.cycles, s.degenerate_cycles
            );
        }
        Command::Benchmark { suite, out, workers, seed } => {
            let (table, checks) = commands::benchmark(suite, &out, workers, seed)?;
            print!("{table}");
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Criteria(format!("{failed} of {} checks failed", checks.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).single_line());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.single_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qpnet::cli::{self, CmdResult, NetworkSource};

#[derive(Parser)]
#[command(
    name = "qpnet",
    version,
    about = "Delayed projection network QP solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built network (M, N, W, p, box) as JSON
    Build {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
    /// Evaluate the stability margin; exit 5 when it is not negative
    Check {
        #[arg(long, required_unless_present = "network")]
        problem: Option<PathBuf>,
        #[arg(long, required_unless_present = "network")]
        params: Option<PathBuf>,
        /// Network JSON as printed by `build`, instead of problem + params
        #[arg(long, conflicts_with_all = ["problem", "params"])]
        network: Option<PathBuf>,
        #[arg(long)]
        search_alpha: bool,
    },
    /// Integrate the network from random histories; write CSVs and a report
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "qpnet_out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve by active-set enumeration and print the KKT point
    Oracle {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Compare the oracle optimum with the network equilibrium
    Compare {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Build { problem, params } => cli::cmd_build(&problem, &params),
        Command::Check {
            problem,
            params,
            network,
            search_alpha,
        } => {
            let source = match (&network, &problem, &params) {
                (Some(path), _, _) => NetworkSource::Dump(path),
                (None, Some(problem), Some(params)) => NetworkSource::Problem { problem, params },
                _ => unreachable!("clap enforces problem + params or network"),
            };
            cli::cmd_check(source, search_alpha)
        }
        Command::Solve {
            problem,
            params,
            out,
            seed,
        } => cli::cmd_solve(&problem, &params, &out, seed),
        Command::Oracle { problem } => cli::cmd_oracle(&problem),
        Command::Compare {
            problem,
            params,
            out,
            seed,
        } => cli::cmd_compare(&problem, &params, out.as_deref(), seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

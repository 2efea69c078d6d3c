//! Command-line front end: `hamlab run <scenario>` executes every task in a
//! scenario file and writes per-task JSON reports and CSV tables;
//! `hamlab validate <scenario>` parses and statically checks it.
//!
//! Exit codes: 0 all checks pass, 1 a verification failed, 2 configuration
//! error, 3 numerical non-convergence or runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hamlab::scenario::{run_scenario, Overrides, Scenario};
use hamlab::Error;

#[derive(Parser)]
#[command(name = "hamlab", about = "Action-spectrum and loop-monodromy lab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute every task in a scenario file, writing reports and tables.
    Run {
        scenario: PathBuf,
        /// Output directory for <task>.report.json and <task>.csv files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the flow integrator step.
        #[arg(long)]
        step: Option<f64>,
        /// Worker threads for intra-task parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and statically check a scenario file without computing.
    Validate { scenario: PathBuf },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn load(path: &PathBuf) -> Result<Scenario, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    Scenario::load(&text).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Validate { scenario } => match load(&scenario) {
            Ok(_) => {
                println!("ok");
                0
            }
            Err(code) => code,
        },
        Cmd::Run {
            scenario,
            out,
            seed,
            step,
            jobs,
        } => run(&scenario, Overrides { out, seed, step }, jobs),
    };
    ExitCode::from(code)
}

fn run(path: &PathBuf, overrides: Overrides, jobs: Option<usize>) -> u8 {
    if let Some(jobs) = jobs {
        // ignore AlreadyInitialized: only the first configuration wins
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let scn = match load(path) {
        Ok(scn) => scn,
        Err(code) => return code,
    };
    match run_scenario(&scn, &overrides) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            if summary.all_pass {
                0
            } else {
                EXIT_FAIL
            }
        }
        Err(Error::Scenario { line, message }) => {
            eprintln!("error: scenario error at line {line}: {message}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERIC
        }
    }
}

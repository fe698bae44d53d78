use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpcollapse::cli::{self, CommandOutput, Outcome, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_RUNTIME};
use gpcollapse::config::LoadedConfig;

/// Ground states and collapse asymptotics of the planar Gross-Pitaevskii
/// energy with singular potentials and Newtonian self-attraction.
///
/// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
/// usage, 3 finished without convergence or with failed checks.
#[derive(Parser, Debug)]
#[command(name = "gpcollapse", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single worker thread.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Townes profile, a*, D0 and the singular moments.
    SolveQ,
    /// One constrained minimization.
    Minimize,
    /// Minimizations along a list of contact strengths, with the energy fit.
    Sweep,
    /// Blow-up scale and energy predicted by the reduced energies.
    Predict,
    /// The acceptance suite.
    Verify,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let loaded = match &args.config {
        Some(p) => LoadedConfig::load(p),
        None => Ok(LoadedConfig::defaults()),
    };
    let loaded = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gpcollapse: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let threads = if args.deterministic { Some(1) } else { args.threads };
    if let Some(t) = threads {
        if t == 0 {
            eprintln!("gpcollapse: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("gpcollapse: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }

    let run = match args.command {
        Command::SolveQ => cli::solve_q(&loaded),
        Command::Minimize => cli::minimize(&loaded),
        Command::Sweep => cli::sweep_cmd(&loaded),
        Command::Predict => cli::predict_cmd(&loaded),
        Command::Verify => cli::verify_cmd(&loaded),
    };
    let CommandOutput { artifacts, outcome, summary } = match run {
        Ok(o) => o,
        Err(e) => {
            eprintln!("gpcollapse: {e}");
            return ExitCode::from(cli::exit_code(&e));
        }
    };
    for line in &summary {
        println!("{line}");
    }
    let dir = args.out.unwrap_or_else(|| loaded.config.output.directory.clone());
    if let Err(e) = artifacts.write_all(&dir) {
        eprintln!("gpcollapse: writing {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    for name in artifacts.names() {
        println!("wrote {}", dir.join(name).display());
    }
    match outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::NotConverged => ExitCode::from(EXIT_NOT_CONVERGED),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use everrod::calibration::PressureLaw;
use everrod::cli::{self, CliError, FitKind};

#[derive(Parser)]
#[command(name = "everrod", version, about = "Statics of banded eversion-robot tubes")]
struct Args {
    /// Worker threads for batteries, fits and design searches (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Solver overrides, e.g. `nodes=800,moment_tol=1e-10`.
    #[arg(long, global = true, value_name = "KEY=VALUE,...")]
    settings: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one load case or sweep one rod.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the stiffness experiment battery.
    Battery {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fail (exit 1) if an expected stiffness ordering is violated.
        #[arg(long)]
        check_trends: bool,
    },
    /// Identify model parameters from measured data.
    Fit {
        /// Directory with setup.json and curve CSVs, or eversion-pressure CSV(s).
        data: PathBuf,
        #[arg(long, value_enum)]
        kind: FitKind,
        #[arg(long, value_enum, default_value = "power-law")]
        law: PressureLaw,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Search band layouts for maximum stiffness.
    Design {
        problem: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Plot force-displacement CSVs into one SVG.
    Plot {
        #[arg(required = true)]
        curves: Vec<PathBuf>,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    let overrides = args.settings.as_deref();
    match args.command {
        Command::Simulate { scenario, out } => {
            let report = cli::cmd_simulate(&scenario, &out, overrides)?;
            for r in &report.results {
                match r.stiffness_index_n_per_m {
                    Some(k) => println!("{}: k = {k:.6} N/m, F = {:.6} N", r.id, r.terminal_force_n),
                    None => println!("{}: empty stroke, no stiffness index", r.id),
                }
            }
        }
        Command::Battery { scenario, out, check_trends } => {
            let report = cli::cmd_battery(&scenario, &out, check_trends, overrides)?;
            for r in &report.results {
                println!("{:<16} k = {:.6} N/m", r.id, r.stiffness_index_n_per_m.unwrap_or(f64::NAN));
            }
        }
        Command::Fit { data, kind, law, out } => {
            let fit = cli::cmd_fit(&data, kind, &out, law, overrides)?;
            println!("{}", serde_json::to_string(&fit).expect("fit output serializes"));
        }
        Command::Design { problem, out } => {
            let d = cli::cmd_design(&problem, &out, overrides)?;
            println!("k = {:.6} N/m with {} band(s)", d.stiffness_index, d.bands.len());
        }
        Command::Plot { curves, out, title } => {
            cli::cmd_plot(&curves, &out, title.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVERROD_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

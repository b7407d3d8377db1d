use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhocal::experiment::{self, ExperimentConfig, Method, Overrides, Preset};
use qhocal::Error;

#[derive(Parser)]
#[command(name = "qhocal", version, about = "Work statistics of a driven, damped quantum harmonic oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the quantum-jump ensemble and write work estimates.
    Simulate(Common),
    /// Write unitary-limit and perturbative moment curves.
    Analytic(Common),
    /// Integrate the master equation and write level populations.
    Oracle(Common),
    /// Score an estimate file against a reference curve.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ntraj: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of checkpoints on [0, T].
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Estimate CSV from `simulate`.
    simulated: PathBuf,
    /// Reference CSV from `analytic` or another `simulate` run.
    reference: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    /// End of the scoring window; defaults to T/2 for perturbative rows.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> qhocal::Result<ExperimentConfig> {
        let overrides = Overrides {
            preset: self.preset,
            seed: self.seed,
            n_traj: self.ntraj,
            dim: self.dim,
            out: self.out.clone(),
            grid: self.grid,
        };
        experiment::load_config(self.config.as_deref(), &overrides)
    }
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Exit status on success: 0, or 4 when a comparison fails.
fn run(cli: Cli) -> qhocal::Result<u8> {
    match cli.command {
        Command::Simulate(args) => {
            let config = args.load()?;
            let mut out = sink(config.outputs.out.as_deref())?;
            let summary = experiment::run_simulate(&config, &mut out)?;
            out.flush()?;
            eprintln!("{summary}");
        }
        Command::Analytic(args) => {
            let config = args.load()?;
            let mut out = sink(config.outputs.out.as_deref())?;
            experiment::run_analytic(&config, &mut out)?;
            out.flush()?;
        }
        Command::Oracle(args) => {
            let config = args.load()?;
            let mut out = sink(config.outputs.out.as_deref())?;
            let convergence = experiment::run_oracle(&config, &mut out)?;
            out.flush()?;
            eprintln!("truncation_convergence={convergence:.3e}");
        }
        Command::Compare(args) => {
            let report = experiment::run_compare(&args.simulated, &args.reference, args.method, args.t_max)?;
            let mut out = sink(args.out.as_deref())?;
            writeln!(out, "{report}")?;
            out.flush()?;
            if !report.passed() {
                return Ok(4);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}

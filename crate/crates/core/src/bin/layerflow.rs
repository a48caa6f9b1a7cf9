use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use layerflow::experiment::{self, ExperimentConfig, Outcome, Overrides};
use layerflow::{Error, Method};

#[derive(Parser)]
#[command(name = "layerflow", version, about = "Layer-method solver for 2D stochastic Navier-Stokes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March one trajectory and write every layer's coefficients.
    Run(CommonArgs),
    /// Fixed-trajectory error sweep over the configured step sizes.
    Converge(CommonArgs),
    /// Mean-square Monte Carlo error sweep.
    Mc(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Step sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo run count K.
    #[arg(long)]
    runs: Option<u64>,
    /// A, B or C.
    #[arg(long)]
    method: Option<Method>,
    /// model1, model2, custom, or a path to a problem file.
    #[arg(long)]
    model: Option<String>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::load(&self.config).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", self.config.display())),
            other => other,
        })?;
        config.apply(&Overrides {
            h: self.h.clone(),
            seed: self.seed,
            runs: self.runs,
            method: self.method,
            model: self.model.clone(),
            out: self.out.clone(),
        });
        Ok(config)
    }
}

fn execute(cli: &Cli) -> Result<Outcome, Error> {
    let (args, cmd): (&CommonArgs, fn(&ExperimentConfig) -> Result<Outcome, Error>) = match &cli.command {
        Command::Run(a) => (a, experiment::cmd_run),
        Command::Converge(a) => (a, experiment::cmd_converge),
        Command::Mc(a) => (a, experiment::cmd_mc),
    };
    let config = args.config()?;
    let outcome = cmd(&config)?;
    match &config.output.path {
        Some(p) => outcome.write(Some(p))?,
        None => {
            outcome.write(None)?;
            std::io::stdout().write_all(outcome.csv.as_bytes())?;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            if let Some(reason) = &outcome.blow_up {
                eprintln!("layerflow: numerical blow-up at {reason}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("layerflow: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}

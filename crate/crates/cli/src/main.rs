use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roomwave_cli::{
    cmd_landscape, cmd_oracle, cmd_sweep, cmd_train, CliError, DataSource, LandscapeArgs,
    SweepAxis, TOOL_NAME, TOOL_VERSION,
};
use roomwave_core::Normalization;

#[derive(Parser)]
#[command(
    name = "roomwave",
    version,
    about = "PINN runs for damped Helmholtz problems in rectangular rooms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Which {
    Analytic,
    Modal,
    Gf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Norm {
    Filter,
    Global,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment.
    Train { config: PathBuf },
    /// Run the configuration over a list of values of one axis.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Repeat every value with each of these seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write a reference field on the evaluation grid as CSV.
    Oracle {
        config: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the loss on a random plane through a checkpoint.
    Landscape {
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 21)]
        resolution: usize,
        #[arg(long, default_value_t = 1.0)]
        half_range: f64,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1, 2])]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "filter")]
        normalization: Norm,
        /// Power-iteration steps for the top Hessian eigenvalue (0 skips it).
        #[arg(long, default_value_t = 0)]
        hessian_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the tool version.
    Version,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let s = cmd_train(&config)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            jobs,
        } => {
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::config(format!("--jobs: {e}")))?;
            }
            let path = cmd_sweep(&config, axis, &values, seeds.as_deref())?;
            println!("{}", path.display());
        }
        Command::Oracle { config, which, out } => {
            let which = match which {
                Which::Analytic => DataSource::Analytic,
                Which::Modal => DataSource::Modal,
                Which::Gf => DataSource::Gf,
            };
            let path = cmd_oracle(&config, which, &out)?;
            println!("{}", path.display());
        }
        Command::Landscape {
            config,
            checkpoint,
            resolution,
            half_range,
            seeds,
            normalization,
            hessian_iters,
            out,
        } => {
            let args = LandscapeArgs {
                checkpoint,
                resolution,
                half_range,
                seeds: (seeds[0], seeds[1]),
                normalization: match normalization {
                    Norm::Filter => Normalization::FilterNorm,
                    Norm::Global => Normalization::GlobalNorm,
                },
                hessian_iters,
                out_dir: out,
            };
            let g = cmd_landscape(&config, &args)?;
            println!(
                "{}",
                serde_json::json!({ "center_loss": g.center(), "center_is_minimum": g.center_is_minimum() })
            );
        }
        Command::Version => println!("{TOOL_NAME} {TOOL_VERSION}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

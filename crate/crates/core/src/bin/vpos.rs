//! Command-line front end: `run`, `sweep` and `resolve`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vpos::config;
use vpos::pipeline::{resolve, run_scenario, run_sweep, write_artifacts, PipelineError, SweepParam};

#[derive(Parser)]
#[command(name = "vpos", about = "Multi-point vehicle positioning over mmWave SFCW: simulate, synchronize, image, map, score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline once and write the report and point clouds.
    Run {
        config: PathBuf,
        /// `key=value`, dotted keys reach nested fields (e.g. `sfcw.num_freqs=128`).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the phasor tensors as binary dumps.
        #[arg(long)]
        dump: bool,
    },
    /// Monte-Carlo sweep over one parameter; prints the summary CSV.
    Sweep {
        config: PathBuf,
        /// tv_distance, num_mirrors or M.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Directory for `sweep.csv` (and `covariance.csv` for M).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print resolution and sampling figures for a configuration.
    Resolve {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run {
            config,
            mut overrides,
            out,
            seed,
            dump,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let cfg = config::load(&config, &overrides)?;
            let (report, artifacts) = run_scenario(&cfg)?;
            write_artifacts(&out, &report, &artifacts, dump)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "hausdorff {:.4} m, directed {:.4} m, sigma error {:.3e} s -> {}",
                report.hausdorff_m,
                report.directed_hausdorff_m,
                report.sigma_error_s,
                out.display()
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            overrides,
            out,
        } => {
            let param: SweepParam = param.parse()?;
            let cfg = config::load(&config, &overrides)?;
            let outcome = run_sweep(&cfg, param, &values, seeds)?;
            print!("{}", outcome.csv);
            if let Some(cov) = &outcome.covariance_csv {
                print!("{cov}");
            }
            if let Some(dir) = out {
                let io = |e: std::io::Error| PipelineError::Stage {
                    stage: "output",
                    message: e.to_string(),
                };
                std::fs::create_dir_all(&dir).map_err(io)?;
                std::fs::write(dir.join("sweep.csv"), &outcome.csv).map_err(io)?;
                if let Some(cov) = &outcome.covariance_csv {
                    std::fs::write(dir.join("covariance.csv"), cov).map_err(io)?;
                }
            }
        }
        Command::Resolve { config, overrides } => {
            let cfg = config::load(&config, &overrides)?;
            let report = resolve(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

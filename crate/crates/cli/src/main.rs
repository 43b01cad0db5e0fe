use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pepsim_cli::config::{load_config, RunConfig};
use pepsim_cli::pipeline::{run_analyze, run_compare, run_project, run_simulate, PipelineError};

#[derive(Parser)]
#[command(
    name = "pepsim",
    version,
    about = "Simulation and ROI counting analysis for current-driven searches \
             for Pauli-forbidden X-ray transitions"
)]
struct Cli {
    /// Run configuration file; the documented defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides generator.seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate on/off event streams, apply the veto and write binned spectra
    Simulate,
    /// On/off ROI counting analysis of two spectrum files
    Analyze {
        on_spectrum: PathBuf,
        off_spectrum: PathBuf,
    },
    /// Project the limit for the configured future run plan
    Project,
    /// Relative difference of two spectra in the ROI and over the full range
    Compare {
        mc_spectrum: PathBuf,
        data_spectrum: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }

    match &cli.command {
        Command::Simulate => {
            let artifacts = run_simulate(&cfg)?;
            println!("wrote {}", artifacts.events_on.display());
            println!("wrote {}", artifacts.events_off.display());
            println!("wrote {}", artifacts.spectrum_on.display());
            println!("wrote {}", artifacts.spectrum_off.display());
            println!("wrote {}", artifacts.manifest.display());
        }
        Command::Analyze {
            on_spectrum,
            off_spectrum,
        } => {
            let (result, limit_path, report_path) = run_analyze(&cfg, on_spectrum, off_spectrum)?;
            println!("wrote {}", limit_path.display());
            println!("wrote {}", report_path.display());
            println!("beta2/2 upper limit: {:e}", result.beta2_limit);
        }
        Command::Project => {
            let (projection, path) = run_project(&cfg)?;
            println!("wrote {}", path.display());
            println!("projected beta2/2 limit: {:e}", projection.beta2_limit);
        }
        Command::Compare {
            mc_spectrum,
            data_spectrum,
        } => {
            let (roi_diff, full_diff, path) = run_compare(&cfg, mc_spectrum, data_spectrum)?;
            println!("wrote {}", path.display());
            println!("relative difference in ROI: {roi_diff}");
            println!("relative difference full range: {full_diff}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

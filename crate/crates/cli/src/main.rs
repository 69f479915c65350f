use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optistate_cli::{
    cmd_evaluate, cmd_report, cmd_simulate, cmd_train_gru, cmd_train_vit, CliError,
    EvaluateFlags, PipelineConfig, Profile,
};
use optistate_nn::features::InputMask;

/// Trunk-state estimation pipeline: simulate datasets, train the depth
/// autoencoder and the correction network, evaluate against the filter-only
/// baseline, and render reports.
#[derive(Parser)]
#[command(name = "optistate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Key = value config file overriding profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperparameter profile.
    #[arg(long, default_value = "paper", value_parser = parse_profile)]
    profile: Profile,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::from_name(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test dataset grid (16 training trajectories
    /// cycling flat/slippery/incline/rough, one held-out per terrain).
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory (train/ and test/ subdirectories).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the depth-image autoencoder on a dataset directory.
    TrainVit {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of training .ostd files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the correction network (requires a trained ViT checkpoint).
    TrainGru {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
        /// Path to vit.ckpt.
        #[arg(long)]
        vit: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train the variant without the Kalman state input.
        #[arg(long, conflicts_with = "ablate_vision")]
        ablate_kf_input: bool,
        /// Train the variant without the depth-latent input.
        #[arg(long)]
        ablate_vision: bool,
    },
    /// Evaluate trained models against held-out datasets.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of held-out .ostd files.
        #[arg(long)]
        data: PathBuf,
        /// Directory holding vit.ckpt and gru_*.ckpt.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate only the Kalman filter (no checkpoints needed).
        #[arg(long)]
        kf_only: bool,
        /// Also evaluate the no-Kalman-input ablation checkpoint.
        #[arg(long)]
        ablate_kf_input: bool,
        /// Also evaluate the no-vision ablation checkpoint.
        #[arg(long)]
        ablate_vision: bool,
    },
    /// Render the consolidated report (uncertainty bands + tables).
    Report {
        /// Directory produced by `evaluate`.
        #[arg(long)]
        run: PathBuf,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Simulate { common, out } => {
            let config = PipelineConfig::resolve(
                common.profile,
                common.config.as_deref(),
                common.seed,
            )?;
            cmd_simulate(&config, &out)
        }
        Command::TrainVit { common, data, out } => {
            let config = PipelineConfig::resolve(
                common.profile,
                common.config.as_deref(),
                common.seed,
            )?;
            cmd_train_vit(&config, &data, &out)
        }
        Command::TrainGru {
            common,
            data,
            vit,
            out,
            ablate_kf_input,
            ablate_vision,
        } => {
            let config = PipelineConfig::resolve(
                common.profile,
                common.config.as_deref(),
                common.seed,
            )?;
            let mask = if ablate_kf_input {
                InputMask::NoKalman
            } else if ablate_vision {
                InputMask::NoVision
            } else {
                InputMask::Full
            };
            cmd_train_gru(&config, &data, &vit, &out, mask)
        }
        Command::Evaluate {
            common,
            data,
            models,
            out,
            kf_only,
            ablate_kf_input,
            ablate_vision,
        } => {
            let config = PipelineConfig::resolve(
                common.profile,
                common.config.as_deref(),
                common.seed,
            )?;
            cmd_evaluate(
                &config,
                &data,
                &models,
                &out,
                &EvaluateFlags {
                    kf_only,
                    ablate_kf_input,
                    ablate_vision,
                },
            )
            .map(|_| ())
        }
        Command::Report { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            cmd_report(&run, &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

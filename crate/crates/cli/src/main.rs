//! `toothfuse` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toothfuse::pipeline::PipelineError;

#[derive(Parser, Debug)]
#[command(name = "toothfuse", version, about = "Fuse a crown scan with a full-tooth mesh")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every randomized stage; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Extra `key=value` config overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic crown / full-tooth pair with its ground truth.
    Synth {
        /// Tooth seed. Defaults to the run seed.
        #[arg(long)]
        tooth: Option<u64>,
    },
    /// Rigidly align the full mesh onto the crown and write `T.txt`.
    Register {
        #[arg(long)]
        crown: PathBuf,
        #[arg(long)]
        full: PathBuf,
    },
    /// Build the hybrid proxy `H.ply` from the crown and the aligned full mesh.
    Fuse {
        #[arg(long)]
        crown: PathBuf,
        #[arg(long)]
        full: PathBuf,
        /// Transform applied to the full mesh first.
        #[arg(long)]
        transform: Option<PathBuf>,
        /// Root threshold in mm; overrides `fusion.tau`.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Train the shape prior on meshes, or on the synthetic family when none are given.
    TrainSdf {
        /// Training meshes.
        meshes: Vec<PathBuf>,
    },
    /// Fit a latent code to a target mesh.
    Refine {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Extract the zero level set of a model at a latent code.
    Extract {
        #[arg(long)]
        model: PathBuf,
        /// Latent code file.
        #[arg(long, conflicts_with = "index")]
        latent: Option<PathBuf>,
        /// Row of the model's latent table.
        #[arg(long)]
        index: Option<usize>,
        /// Grid resolution per axis; overrides `extract.resolution`.
        #[arg(long)]
        resolution: Option<usize>,
        /// Report holding `normalization.*` lines; identity when absent.
        #[arg(long)]
        norm: Option<PathBuf>,
    },
    /// One-sided distance metrics from a reference to a reconstruction.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Color the reference by its distance to the reconstruction.
    Errormap {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// Saturation distance in mm; overrides `metrics.d_max`.
        #[arg(long)]
        d_max: Option<f64>,
    },
    /// Full reconstruction into a run directory.
    Pipeline {
        #[arg(long)]
        crown: Option<PathBuf>,
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Clean reference mesh for extra metrics.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Fit the full mesh alone, without registration or fusion.
        #[arg(long)]
        baseline: bool,
    },
    /// Compare fused and baseline reconstructions over a synthetic cohort.
    Bench {
        /// Use this model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), PipelineError> {
    let Ok(value) = std::env::var("TOOTHFUSE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| PipelineError::Config(format!("TOOTHFUSE_THREADS must be a count, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| PipelineError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    init_threads()?;
    let cfg = commands::load_config(&cli.common)?;
    std::fs::create_dir_all(&cli.common.out_dir)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", cli.common.out_dir.display())))?;
    let out = &cli.common.out_dir;
    let line = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Synth { tooth } => commands::synth(&cfg, tooth.unwrap_or(cfg.seed), out),
        Command::Register { crown, full } => commands::register(&cfg, &crown, &full, out),
        Command::Fuse {
            crown,
            full,
            transform,
            tau,
        } => commands::fuse(&cfg, &crown, &full, transform.as_deref(), tau, out),
        Command::TrainSdf { meshes } => commands::train_sdf(&cfg, &meshes, out),
        Command::Refine { model, target } => commands::refine(&cfg, &model, &target, out),
        Command::Extract {
            model,
            latent,
            index,
            resolution,
            norm,
        } => commands::extract(&cfg, &model, latent.as_deref(), index, resolution, norm.as_deref(), out),
        Command::Evaluate { reference, recon, json } => {
            commands::evaluate(&cfg, &reference, &recon, json.as_deref(), out)
        }
        Command::Errormap {
            reference,
            recon,
            d_max,
        } => commands::errormap(&cfg, &reference, &recon, d_max, out),
        Command::Pipeline {
            crown,
            full,
            model,
            reference,
            baseline,
        } => commands::pipeline(
            &cfg,
            &line,
            crown.as_deref(),
            &full,
            &model,
            reference.as_deref(),
            baseline,
            out,
        ),
        Command::Bench { model } => commands::bench(&cfg, model.as_deref(), out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

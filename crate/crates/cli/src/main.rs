//! `cranio`: command-line pipeline from landmark templates to validated face
//! predictors.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage: unknown flag, missing argument, invalid parameter |
//! | 3 | file system error |
//! | 4 | malformed input file |
//! | 5 | layout or dimension mismatch |
//! | 6 | numerical or fitting failure |
//! | 7 | geometric failure (empty mesh, unreachable geodesic, failed alignment) |
//! | 8 | any other failure |

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cranio::validation::Method;
use cranio::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cranio::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Other(_) => 8,
            CliError::Core(e) => match e.class() {
                ErrorClass::Parameter => 2,
                ErrorClass::Io => 3,
                ErrorClass::Format => 4,
                ErrorClass::Layout => 5,
                ErrorClass::Numerical => 6,
                ErrorClass::Geometry => 7,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Other(_) => "other",
            CliError::Core(e) => e.kind(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cranio", version, about = "Predict face surfaces from skull landmarks")]
pub struct Cli {
    /// JSON experiment record; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine a landmark triangulation with geodesic midpoints.
    Densify(DensifyArgs),
    /// Register a reference face mesh onto a target surface.
    Register(RegisterArgs),
    /// Build the centred skull/face tables of a dataset.
    Assemble(AssembleArgs),
    /// Fit a joint PCA or latent root regression model.
    Fit(FitArgs),
    /// Predict a face mesh from a skull landmark file.
    Predict(PredictArgs),
    /// Leave-one-out cross-validation of both predictors.
    Crossval(CrossvalArgs),
    /// Generate a synthetic paired dataset with known ground truth.
    Synth(SynthArgs),
    /// Print a cross-validation report and export its distance maps.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DensifyArgs {
    /// Surface the landmarks live on (OBJ or PLY).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Template file with points and triangles.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Refinement passes (default 1).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output template file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Geodesics shorter than this (mm) are skipped.
    #[arg(long, default_value_t = 0.5)]
    pub min_path_length: f64,
    /// Endpoints closer than this many mean edge lengths are skipped.
    #[arg(long, default_value_t = 2.0)]
    pub min_separation_edges: f64,
    /// Largest |x| (mm) along a midplane geodesic; defaults to the mean edge length.
    #[arg(long)]
    pub midplane_tolerance: Option<f64>,
    /// Optional JSON record of added and skipped edges per pass.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Reference mesh (OBJ or PLY).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Target surface.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Deformed reference output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Quality record (forward/backward statistics, convergence, outliers).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// JSON file with registration parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Outlier distance (mm) excluded from the data term.
    #[arg(long)]
    pub outlier: Option<f64>,
    /// Final projection distance (mm).
    #[arg(long)]
    pub snap: Option<f64>,
    /// Number of elastic stiffness levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Stiffness at the first elastic level.
    #[arg(long)]
    pub alpha_start: Option<f64>,
    /// Stiffness at the last elastic level.
    #[arg(long)]
    pub alpha_end: Option<f64>,
    /// Stiffness multiplier at the reference boundary.
    #[arg(long)]
    pub boundary_weight: Option<f64>,
    /// Target mesh with the backward distance map as vertex quality.
    #[arg(long)]
    pub backward_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Dataset directory containing dataset.json.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output table archive directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory (tables are assembled on the fly).
    #[arg(long, conflicts_with = "tables")]
    pub data: Option<PathBuf>,
    /// Table archive written by `assemble`; needs --topology.
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Mesh whose triangles define the face topology (with --tables).
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// pca or lrr.
    #[arg(long)]
    pub method: Option<Method>,
    /// Components to keep (all PCA modes by default; required for lrr).
    #[arg(long)]
    pub components: Option<usize>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also store the full LRR coefficient matrix (large).
    #[arg(long)]
    pub with_coefficients: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Skull landmark file.
    #[arg(long)]
    pub skull: Option<PathBuf>,
    /// Predicted face mesh (OBJ or PLY by extension).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use only the leading components of the model.
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    /// Dataset directory containing dataset.json.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated methods (default pca,lrr).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Largest component count evaluated (default n - 2).
    #[arg(long)]
    pub max_components: Option<usize>,
    /// Histogram bin width in mm (default 0.25).
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Report output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator parameters as JSON; missing fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of entries.
    #[arg(long)]
    pub n: Option<usize>,
    /// Latent dimension.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Noise standard deviation in mm.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Skull template stage: 0, 1 or 2 (65, 220 or 688 coordinates).
    #[arg(long)]
    pub skull_stage: Option<usize>,
    /// Face template vertex count.
    #[arg(long)]
    pub face_vertices: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `crossval`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Where the table and distance-map meshes go (default: the report directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(level: log::LevelFilter) {
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str().to_ascii_lowercase(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .target(env_logger::Target::Stderr)
        .init();
}

fn error_record(err: &CliError) -> String {
    serde_json::json!({
        "error": {
            "kind": err.kind(),
            "exit_code": err.exit_code(),
            "message": err.to_string(),
        }
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("{}", error_record(&CliError::Usage(e.kind().to_string())));
            return ExitCode::from(2);
        }
    };
    init_logging(cli.log_level);
    std::panic::set_hook(Box::new(|info| {
        eprintln!("{}", error_record(&CliError::Other(format!("internal error: {info}"))));
    }));
    let outcome = std::panic::catch_unwind(|| commands::run(cli))
        .unwrap_or_else(|_| Err(CliError::Other("internal error (see the record above)".into())));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code())
        }
    }
}

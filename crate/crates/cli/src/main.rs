//! `stereotac`: simulate captures, calibrate and run the tactile pipeline,
//! run stereo depth and produce evaluation tables.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "stereotac",
    version,
    about = "Visuotactile sensor simulation, reconstruction and evaluation"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; defaults to the config's seed or a fixed constant.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic captures with their ground truth.
    Simulate(SimulateArgs),
    /// Train the gradient regressor from ball presses or a labelled dataset.
    CalibrateTactile(CalibrateArgs),
    /// Turn a tactile frame pair into a depth map in millimetres.
    Reconstruct(ReconstructArgs),
    /// Block-match a rectified pair and reproject it to a point cloud.
    Stereo(StereoArgs),
    /// Run an experiment and write its report tables.
    Evaluate(EvaluateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SimMode {
    Tactile,
    Stereo,
    BallPresses,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: SimMode,
    /// Membrane preset: transparent, semi_reflective, semi_matte, opaque_reflective, opaque_matte.
    #[arg(long, default_value = "semi_reflective")]
    membrane: String,
    /// Override the preset's opacity, in [0, 1].
    #[arg(long)]
    opacity: Option<f64>,
    /// Tactile indenter: `none`, `disk[<diameter mm>]` or `sphere[<radius mm>]`.
    #[arg(long, default_value = "disk13")]
    indenter: String,
    /// Indentation depth in mm.
    #[arg(long, default_value_t = 1.0)]
    depth: f64,
    /// Indenter centre in pixels, `x,y`; defaults to the frame centre.
    #[arg(long, value_parser = parse_pair)]
    center: Option<[f64; 2]>,
    /// Place the leakage scenario's mirror-like object this many mm outside the membrane.
    #[arg(long)]
    reflective_object: Option<f64>,
    /// Stereo plane distance in mm.
    #[arg(long, default_value_t = 200.0)]
    distance: f64,
    /// Number of stereo frames.
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Number of ball presses; defaults to the config's calibration press count.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Directory written by `simulate --mode ball-presses`.
    #[arg(long, conflicts_with = "dataset")]
    presses: Option<PathBuf>,
    /// Labelled CSV dataset (`rb_dx,rb_dy,x,y,dx,dy`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Membrane to simulate presses for when neither input is given.
    #[arg(long, default_value = "semi_reflective")]
    membrane: String,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Directory holding frame_dx/dy.ppm and reference_dx/dy.ppm.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Also write the depth map as a point cloud.
    #[arg(long)]
    ply: bool,
    /// Treat any reconstructed depth as a false contact and flag it.
    #[arg(long)]
    expect_no_contact: bool,
    /// Pixels per mm when the input has no truth.json.
    #[arg(long, default_value_t = 15.0)]
    px_per_mm: f64,
}

#[derive(Args, Debug)]
struct StereoArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Rig JSON, as written by `simulate --mode stereo`.
    #[arg(long)]
    rig: PathBuf,
    /// Statistical outlier removal, `k,std_ratio`.
    #[arg(long, value_parser = parse_outliers)]
    outliers: Option<(usize, f64)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Experiment {
    /// Membrane × distance stereo sweep: Z-accuracy, spatial RMSE, temporal noise.
    StereoSweep,
    /// Repeated disk presses per membrane: plateau depth mean and std.
    TactileDisk,
    /// Lux-meter bench for every membrane.
    Opacity,
    /// Reflective object behind an untouched membrane, per opacity.
    Leakage,
    /// Metrics of existing depth maps of a flat plane.
    Maps,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Frames per stereo cell.
    #[arg(long)]
    frames: Option<usize>,
    /// Plane distances in mm, comma separated.
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
    /// Membranes, comma separated.
    #[arg(long, value_delimiter = ',')]
    membranes: Option<Vec<String>>,
    /// Disk presses per membrane.
    #[arg(long)]
    trials: Option<usize>,
    /// Ground-truth plane distance for `maps`, in mm.
    #[arg(long)]
    gt: Option<f64>,
    /// Membrane label for `maps`.
    #[arg(long, default_value = "unknown")]
    membrane: String,
    /// Depth maps (PFM) for `maps`.
    #[arg(long, num_args = 1..)]
    maps: Vec<PathBuf>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected `x,y`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

fn parse_outliers(s: &str) -> Result<(usize, f64), String> {
    let (k, r) = s.split_once(',').ok_or("expected `k,std_ratio`")?;
    Ok((
        k.trim().parse().map_err(|e| format!("{k:?}: {e}"))?,
        r.trim().parse().map_err(|e| format!("{r:?}: {e}"))?,
    ))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEREOTAC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(stereotac::DEFAULT_SEED);
    config.seed = Some(seed);
    let out = output::OutDir::create(&cli.out)?;
    let ctx = commands::Context { config, seed, out };
    match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::CalibrateTactile(a) => commands::calibrate(&ctx, &a),
        Command::Reconstruct(a) => commands::reconstruct(&ctx, &a),
        Command::Stereo(a) => commands::stereo(&ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
    }
}

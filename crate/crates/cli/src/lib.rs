//! The `depthtrack` command line.
//!
//! Exit codes: 0 success, 1 a `--min-*` threshold was not met, 2 input or
//! output failure, 3 invalid configuration or arguments.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthtrack::sode::DepthMode;
use depthtrack::tracker::MotionSource;
use depthtrack::{AssociationMode, MotionModel, TrackerConfig};

mod ablate;
mod eval;
mod overlay;
mod sode_check;
mod synth;
mod table;
mod track;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] depthtrack::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Threshold(_) => 1,
            CliError::Config(_) => 3,
            CliError::Core(e) if is_config(e) => 3,
            CliError::Core(_) => 2,
        }
    }
}

fn is_config(e: &depthtrack::Error) -> bool {
    match e {
        depthtrack::Error::Config(_) => true,
        depthtrack::Error::AtFrame { source, .. } => is_config(source),
        _ => false,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "depthtrack",
    version,
    about = "Depth-ordered multi-object tracking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every sequence directory and write `<out>/<seq>.txt` plus a
    /// timing report.
    Track(track::TrackArgs),
    /// Score track files against ground truth.
    Eval(eval::EvalArgs),
    /// Render a scenario (TOML file or preset) into sequence directories.
    Synth(synth::SynthArgs),
    /// Measure depth ordering accuracy against the true order file.
    SodeCheck(sode_check::SodeCheckArgs),
    /// Run all motion model and association combinations and tabulate them.
    Ablate(ablate::AblateArgs),
}

/// Tracker settings shared by `track` and `ablate`. Flags override values
/// from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// TOML file with tracker settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Weight of first-order costs.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of second-order costs.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Depth order difference at which overlap stops counting.
    #[arg(long)]
    pub tau_z: Option<f64>,
    /// Fused cost above which a pair can never match.
    #[arg(long)]
    pub tau_gate: Option<f64>,
    /// Cost gap below which a detection is treated as covering two tracks.
    #[arg(long)]
    pub tau_c: Option<f64>,
    /// Consecutive hits before a track is reported.
    #[arg(long)]
    pub min_hits: Option<u32>,
    /// Frames without a match before a track is removed.
    #[arg(long)]
    pub max_age: Option<u32>,
    /// Detections below this confidence are ignored.
    #[arg(long)]
    pub min_confidence: Option<f64>,
    /// Process noise scale of the Kalman filter.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Pixel weight of one depth step.
    #[arg(long, visible_alias = "depth-unit-weight")]
    pub w_z: Option<f64>,
    /// Depth quantization factor.
    #[arg(long, visible_alias = "depth-bins-scale")]
    pub lambda_q: Option<f64>,
    #[arg(long, value_enum)]
    pub depth_mode: Option<DepthModeArg>,
    /// Where the acceleration cue comes from; `flow` reads det/motion.txt.
    #[arg(long, value_enum)]
    pub motion_source: Option<MotionSourceArg>,
    /// Keep both tracks coasting when one detection covers two of them.
    #[arg(long)]
    pub occlusion_handling: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthModeArg {
    Static,
    Moving,
}

impl From<DepthModeArg> for DepthMode {
    fn from(m: DepthModeArg) -> Self {
        match m {
            DepthModeArg::Static => DepthMode::Static,
            DepthModeArg::Moving => DepthMode::Moving,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionSourceArg {
    History,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionArg {
    #[value(name = "2dkf")]
    TwoD,
    #[value(name = "3dkf")]
    ThreeD,
    #[value(name = "a-2dkf")]
    ActiveTwoD,
    #[value(name = "a-3dkf")]
    ActiveThreeD,
}

impl From<MotionArg> for MotionModel {
    fn from(m: MotionArg) -> Self {
        match m {
            MotionArg::TwoD => MotionModel::TwoD,
            MotionArg::ThreeD => MotionModel::ThreeD,
            MotionArg::ActiveTwoD => MotionModel::ActiveTwoD,
            MotionArg::ActiveThreeD => MotionModel::ActiveThreeD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssocArg {
    FirstOrder,
    HighOrder,
}

impl From<AssocArg> for AssociationMode {
    fn from(a: AssocArg) -> Self {
        match a {
            AssocArg::FirstOrder => AssociationMode::FirstOrder,
            AssocArg::HighOrder => AssociationMode::HighOrder,
        }
    }
}

impl TuningArgs {
    /// Config file (or defaults) with `(motion, association)` applied as an
    /// ablation cell, then the individual flags.
    pub fn resolve(
        &self,
        ablation: Option<(MotionModel, AssociationMode)>,
    ) -> CliResult<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrackerConfig::from_toml(&depthtrack::io::read_text(path)?)?,
            None => TrackerConfig::default(),
        };
        if let Some((motion, association)) = ablation {
            cfg.motion = motion;
            cfg.association = association;
            cfg.occlusion_handling =
                TrackerConfig::ablation(motion, association).occlusion_handling;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            alpha,
            beta,
            tau_z,
            tau_gate,
            tau_c,
            min_hits,
            max_age,
            min_confidence,
            sigma,
            lambda_q,
            occlusion_handling
        );
        if self.w_z.is_some() {
            cfg.w_z = self.w_z;
        }
        if let Some(m) = self.depth_mode {
            cfg.depth_mode = m.into();
        }
        if let Some(m) = self.motion_source {
            cfg.motion_source = match m {
                MotionSourceArg::History => MotionSource::History,
                MotionSourceArg::Flow => MotionSource::Flow,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Name of a sequence: its directory name.
pub(crate) fn sequence_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.to_string_lossy().into_owned())
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| depthtrack::Error::io(dir, e).into())
}

/// Worker pool for per-sequence jobs; `None` uses one thread per core.
pub(crate) fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Track(a) => track::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Synth(a) => synth::run(&a),
        Command::SodeCheck(a) => sode_check::run(&a),
        Command::Ablate(a) => ablate::run(&a),
    }
}

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use depthtrack::io::{self, load_sequence, SequencePaths};
use depthtrack::metrics::OrderingScore;
use depthtrack::sode::{order_detections, DEFAULT_LAMBDA_Q};

use crate::eval::check_min;
use crate::{sequence_name, CliError, CliResult, DepthModeArg};

#[derive(Debug, Clone, Args)]
pub struct SodeCheckArgs {
    /// Sequence directories with gt/depth_order.csv.
    #[arg(required = true, value_name = "SEQ_DIR")]
    pub sequences: Vec<PathBuf>,
    /// Per-frame accuracy CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "static")]
    pub depth_mode: DepthModeArg,
    /// Depth quantization factor.
    #[arg(long, visible_alias = "depth-bins-scale", default_value_t = DEFAULT_LAMBDA_Q)]
    pub lambda_q: f64,
    /// Exit with code 1 when the aggregate accuracy (percent) is lower.
    #[arg(long)]
    pub min_accuracy: Option<f64>,
}

pub fn run(args: &SodeCheckArgs) -> CliResult<()> {
    if !(args.lambda_q > 0.0) {
        return Err(CliError::Config("--lambda-q must be positive".into()));
    }
    let mut csv = String::from("sequence,frame,objects,accuracy\n");
    let mut total = OrderingScore::default();
    for dir in &args.sequences {
        let name = sequence_name(dir);
        let data = load_sequence(dir)?;
        let truth = io::parse_truth_order(&SequencePaths::new(dir).truth_order())?;
        let mut score = OrderingScore::default();
        for (&frame, order) in &truth {
            let mut dets = data.detections.get(&frame).cloned().unwrap_or_default();
            let est = order_detections(
                &mut dets,
                &data.camera,
                args.depth_mode.into(),
                args.lambda_q,
            );
            let acc = score.add(frame, order, &est)?;
            total.add(frame, order, &est)?;
            let _ = writeln!(csv, "{name},{frame},{},{acc:.2}", order.len());
        }
        println!(
            "{name}: {:.2}% over {} frames ({} exact)",
            score.accuracy(),
            score.frames,
            score.perfect_frames
        );
    }
    if args.sequences.len() > 1 {
        println!(
            "aggregate: {:.2}% over {} frames",
            total.accuracy(),
            total.frames
        );
    }
    if let Some(path) = &args.out {
        io::write_text(path, &csv)?;
    }
    check_min("ordering accuracy", total.accuracy(), args.min_accuracy)
}

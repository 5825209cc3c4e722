use std::path::PathBuf;

use clap::Args;
use depthtrack::io::{self, load_sequence, SequencePaths};
use depthtrack::metrics::{clear_mot, MotReport};
use depthtrack::{AssociationMode, MotionModel};
use rayon::prelude::*;

use crate::track::track_sequence;
use crate::{pool, table, CliResult, TuningArgs};

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Sequence directories with ground truth.
    #[arg(required = true, value_name = "SEQ_DIR")]
    pub sequences: Vec<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Write the table as CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// IoU needed for a hypothesis to cover a ground truth box.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Sequences tracked in parallel (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(args: &AblateArgs) -> CliResult<()> {
    let mut cells = Vec::new();
    for motion in MotionModel::ALL {
        for association in AssociationMode::ALL {
            cells.push((
                motion,
                association,
                args.tuning.resolve(Some((motion, association)))?,
            ));
        }
    }
    let pool = pool(args.jobs)?;
    // One report per sequence and cell, sequences in parallel.
    let per_seq: Vec<CliResult<Vec<MotReport>>> = pool.install(|| {
        args.sequences
            .par_iter()
            .map(|dir| {
                let data = load_sequence(dir)?;
                let gt = io::parse_gt(&SequencePaths::new(dir).gt())?;
                cells
                    .iter()
                    .map(|(_, _, cfg)| {
                        let out = track_sequence(&data, cfg, false)?;
                        Ok(clear_mot(&gt, &out.records, args.iou)?)
                    })
                    .collect()
            })
            .collect()
    });
    let per_seq = per_seq.into_iter().collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<(Vec<String>, MotReport)> = cells
        .iter()
        .enumerate()
        .map(|(k, (m, a, _))| {
            let agg =
                MotReport::aggregate(per_seq.iter().map(|r| &r[k])).expect("at least one sequence");
            (vec![m.label().to_string(), a.label().to_string()], agg)
        })
        .collect();
    let labels = ["Motion", "Association"];
    print!("{}", table::pretty(&labels, &rows));
    if let Some(path) = &args.out {
        io::write_text(path, &table::csv(&labels, &rows))?;
    }
    Ok(())
}

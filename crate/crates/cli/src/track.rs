use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use depthtrack::io::{self, load_sequence, SequenceData};
use depthtrack::tracker::{run_with, FrameCosts, RunOutput, StageTimes};
use depthtrack::{Tracker, TrackerConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::{create_dir, overlay, pool, sequence_name, AssocArg, CliResult, MotionArg, TuningArgs};

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Sequence directories (seqinfo.ini, det/det.txt, ...).
    #[arg(required = true, value_name = "SEQ_DIR")]
    pub sequences: Vec<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Motion model of the ablation grid; must be given with --ablation-assoc.
    #[arg(long, value_enum, requires = "ablation_assoc")]
    pub ablation_motion: Option<MotionArg>,
    /// Association mode of the ablation grid; must be given with --ablation-motion.
    #[arg(long, value_enum, requires = "ablation_motion")]
    pub ablation_assoc: Option<AssocArg>,
    /// Write one SVG per frame with the tracked boxes to `<out>/<seq>.overlay/`.
    #[arg(long)]
    pub overlay: bool,
    /// Write every frame's cost components to `<out>/<seq>.costs.csv`.
    #[arg(long)]
    pub dump_cost_matrices: bool,
    /// Sequences tracked in parallel (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Serialize)]
struct TimingReport<'a> {
    sequence: &'a str,
    frames_per_second: f64,
    stages: &'a StageTimes,
}

/// Tracks one loaded sequence.
pub(crate) fn track_sequence(
    data: &SequenceData,
    config: &TrackerConfig,
    capture_costs: bool,
) -> CliResult<RunOutput> {
    let provider = config.motion_provider(data.flow.clone())?;
    let tracker = Tracker::new(config.clone(), data.camera)?
        .with_motion_provider(provider)
        .capture_costs(capture_costs);
    Ok(run_with(tracker, &data.detections, &data.info)?)
}

pub fn run(args: &TrackArgs) -> CliResult<()> {
    let ablation = args
        .ablation_motion
        .zip(args.ablation_assoc)
        .map(|(m, a)| (m.into(), a.into()));
    let config = args.tuning.resolve(ablation)?;
    create_dir(&args.out)?;
    let pool = pool(args.jobs)?;
    let results: Vec<CliResult<String>> = pool.install(|| {
        args.sequences
            .par_iter()
            .map(|dir| track_one(dir, &config, args))
            .collect()
    });
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

fn track_one(dir: &Path, config: &TrackerConfig, args: &TrackArgs) -> CliResult<String> {
    let name = sequence_name(dir);
    let data = load_sequence(dir)?;
    let out = track_sequence(&data, config, args.dump_cost_matrices)?;
    io::write_tracks(&args.out.join(format!("{name}.txt")), &out.records)?;
    let timing = TimingReport {
        sequence: &name,
        frames_per_second: out.times.frames_per_second(),
        stages: &out.times,
    };
    let json = serde_json::to_string_pretty(&timing).expect("timing serializes");
    io::write_text(
        &args.out.join(format!("{name}.timing.json")),
        &(json + "\n"),
    )?;
    if args.overlay {
        overlay::write_overlays(
            &args.out.join(format!("{name}.overlay")),
            &data,
            &out.records,
            config,
        )?;
    }
    if args.dump_cost_matrices {
        io::write_text(
            &args.out.join(format!("{name}.costs.csv")),
            &format_costs(&out.costs),
        )?;
    }
    let ids: std::collections::BTreeSet<u32> = out.records.iter().map(|r| r.id).collect();
    Ok(format!(
        "{name}: {} records, {} tracks",
        out.records.len(),
        ids.len()
    ))
}

/// One row per track and detection pair of every frame.
pub(crate) fn format_costs(costs: &[FrameCosts]) -> String {
    let mut out = String::from(
        "frame,track_id,det_index,appearance,diou,spatial,appearance_order,fused,gated\n",
    );
    for fc in costs {
        let c = &fc.components;
        for (i, id) in fc.track_ids.iter().enumerate() {
            for j in 0..c.diou.ncols() {
                let gated = fc.fused.gated[(i, j)];
                let fused = if gated {
                    String::new()
                } else {
                    format!("{:.6}", fc.fused.cost[(i, j)])
                };
                let _ = writeln!(
                    out,
                    "{},{id},{j},{:.6},{:.6},{:.6},{:.6},{fused},{}",
                    fc.frame,
                    c.appearance[(i, j)],
                    c.diou[(i, j)],
                    c.spatial[(i, j)],
                    c.appearance_order[(i, j)],
                    u8::from(gated)
                );
            }
        }
    }
    out
}

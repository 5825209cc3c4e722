use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use depthtrack::io::{self, SequencePaths};
use depthtrack::metrics::{clear_mot, MotReport};

use crate::{sequence_name, table, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Sequence directories holding gt/gt.txt.
    #[arg(required = true, value_name = "SEQ_DIR")]
    pub sequences: Vec<PathBuf>,
    /// Directory with one `<seq>.txt` track file per sequence.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Output layout on stdout.
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Also write the CSV table to this file.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// IoU needed for a hypothesis to cover a ground truth box.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Exit with code 1 when the overall MOTA (in percent) is lower.
    #[arg(long)]
    pub min_mota: Option<f64>,
    /// Exit with code 1 when the overall IDF1 (in percent) is lower.
    #[arg(long)]
    pub min_idf1: Option<f64>,
}

pub(crate) fn evaluate(seq_dir: &Path, tracks: &Path, iou: f64) -> CliResult<MotReport> {
    let gt = io::parse_gt(&SequencePaths::new(seq_dir).gt())?;
    let hyp = io::parse_tracks(tracks)?;
    Ok(clear_mot(&gt, &hyp, iou)?)
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(CliError::Config("--iou must lie in (0, 1]".into()));
    }
    let mut rows = Vec::new();
    for dir in &args.sequences {
        let name = sequence_name(dir);
        let report = evaluate(dir, &args.tracks.join(format!("{name}.txt")), args.iou)?;
        rows.push((vec![name], report));
    }
    let overall = MotReport::aggregate(rows.iter().map(|(_, r)| r)).expect("at least one sequence");
    rows.push((vec!["OVERALL".to_string()], overall.clone()));
    let labels = ["Sequence"];
    match args.format {
        Format::Table => print!("{}", table::pretty(&labels, &rows)),
        Format::Csv => print!("{}", table::csv(&labels, &rows)),
    }
    if let Some(path) = &args.csv {
        io::write_text(path, &table::csv(&labels, &rows))?;
    }
    check_min("MOTA", overall.mota * 100.0, args.min_mota)?;
    check_min("IDF1", overall.idf1 * 100.0, args.min_idf1)
}

pub(crate) fn check_min(name: &str, value: f64, min: Option<f64>) -> CliResult<()> {
    match min {
        Some(m) if value < m => Err(CliError::Threshold(format!(
            "{name} {value:.2} is below the required {m:.2}"
        ))),
        _ => Ok(()),
    }
}

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use depthtrack::io::{self, write_synthetic_sequence};
use depthtrack::synth::{presets, Scenario};

use crate::{create_dir, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Two look-alike pedestrians whose boxes merge for one frame.
    CrossingMerge,
    /// Crowds crossing in front of a swaying camera; one scenario per seed.
    Adversarial,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scenario TOML file.
    #[arg(
        value_name = "SCENARIO",
        required_unless_present = "preset",
        conflicts_with = "preset"
    )]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario instead of a file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Root directory; each scenario is written to `<out>/<name>`.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Overrides the scenario seed; for the adversarial preset, the first seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of adversarial scenarios.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
}

fn scenarios(args: &SynthArgs) -> CliResult<Vec<Scenario>> {
    if let Some(path) = &args.scenario {
        let mut s = Scenario::from_toml(&io::read_text(path)?)?;
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        return Ok(vec![s]);
    }
    match args.preset {
        Some(Preset::CrossingMerge) => {
            let mut s = presets::crossing_merge_fixture();
            if let Some(seed) = args.seed {
                s.seed = seed;
            }
            Ok(vec![s])
        }
        Some(Preset::Adversarial) => {
            let first = args.seed.unwrap_or(0);
            Ok((first..first + args.count)
                .map(presets::adversarial_crossing)
                .collect())
        }
        None => Err(CliError::Config("give a scenario file or --preset".into())),
    }
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let list = scenarios(args)?;
    create_dir(&args.out)?;
    for s in list {
        s.validate()?;
        let dir = args.out.join(&s.name);
        create_dir(&dir)?;
        let seq = s.render();
        write_synthetic_sequence(&dir, &seq)?;
        let dets: usize = seq.frames.iter().map(|f| f.detections.len()).sum();
        println!(
            "{}: {} frames, {} agents, {dets} detections",
            dir.display(),
            s.n_frames,
            s.agents.len()
        );
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scenebias::detect::DetectorConfig;
use scenebias::pipeline::{self, RunConfig, MANIFEST_FILE};
use scenebias::repeat::MatchParams;
use scenebias::xform::ScheduleConfig;
use scenebias::{Error, ErrorClass, Result};

/// Characterize local feature detectors by the scene content they repeat
/// well on.
#[derive(Parser)]
#[command(name = "scenebias", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the transformed image database from a scene directory.
    Generate(GenerateArgs),
    /// Run detectors over every database image and cache the keypoints.
    Detect(DetectArgs),
    /// Compute repeatability records for every non-reference step.
    Evaluate(EvaluateArgs),
    /// Build top/lowest rankings and write the trait-index table.
    Rank(RankArgs),
    /// Write the trait-index table and radar charts.
    Report(RankArgs),
    /// Run generate, evaluate and report in sequence.
    All(AllArgs),
    /// Write a synthetic labelled scene corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory with scene images and labels.csv (`file,f,g,h`).
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file mapping transform kinds to amount lists.
    #[arg(long)]
    schedule_config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct DetectorArgs {
    /// Detector spec, e.g. `harris`, `fast:threshold=30` or
    /// `external:id=sift,dir=path/to/keypoints`. Repeatable; defaults to
    /// all built-ins.
    #[arg(long = "detector")]
    detectors: Vec<String>,
}

impl DetectorArgs {
    fn configs(&self) -> Result<Vec<DetectorConfig>> {
        if self.detectors.is_empty() {
            return Ok(DetectorConfig::builtins());
        }
        self.detectors.iter().map(|s| DetectorConfig::parse(s)).collect()
    }
}

#[derive(Args)]
struct MatchArgs {
    /// Match distance tolerance in pixels.
    #[arg(long, default_value_t = 1.5)]
    epsilon: f64,
    /// Also require ellipse overlap error at most this value.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.4", value_name = "MAX_ERROR")]
    overlap: Option<f64>,
}

impl MatchArgs {
    fn params(&self) -> MatchParams {
        MatchParams {
            epsilon: self.epsilon,
            overlap_max_error: self.overlap.unwrap_or(MatchParams::default().overlap_max_error),
            use_overlap: self.overlap.is_some(),
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    detectors: DetectorArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    detectors: DetectorArgs,
    #[command(flatten)]
    matching: MatchArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Discard existing records instead of resuming.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RankArgs {
    /// Manifest providing the scene labels.
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory holding records.csv; outputs are written here.
    #[arg(long)]
    out: PathBuf,
    /// Ranking length.
    #[arg(long, default_value_t = 20)]
    j: usize,
}

#[derive(Args)]
struct AllArgs {
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    schedule_config: Option<PathBuf>,
    #[command(flatten)]
    detectors: DetectorArgs,
    #[command(flatten)]
    matching: MatchArgs,
    #[arg(long, default_value_t = 20)]
    j: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 160)]
    width: u32,
    #[arg(long, default_value_t = 120)]
    height: u32,
}

fn schedule(path: Option<&Path>) -> Result<ScheduleConfig> {
    path.map_or_else(|| Ok(ScheduleConfig::default()), ScheduleConfig::load)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let m = pipeline::cmd_generate(&a.scenes, &schedule(a.schedule_config.as_deref())?, &a.out, a.force, a.jobs)?;
            println!(
                "{} scenes, {} images -> {}",
                m.scenes.len(),
                m.images.len(),
                a.out.join(MANIFEST_FILE).display()
            );
        }
        Command::Detect(a) => {
            let n = pipeline::cmd_detect(&a.manifest, &a.detectors.configs()?, &a.out, a.jobs)?;
            println!("{n} keypoints cached under {}", a.out.join("keypoints").display());
        }
        Command::Evaluate(a) => {
            let cfg = RunConfig {
                detectors: a.detectors.configs()?,
                params: a.matching.params(),
                jobs: a.jobs,
                ..RunConfig::new(a.manifest, a.out)
            };
            let records = pipeline::cmd_evaluate(&cfg, a.force)?;
            println!("{} records -> {}", records.len(), cfg.records_path().display());
        }
        Command::Rank(a) => {
            let cfg = RunConfig { j: a.j, ..RunConfig::new(a.manifest, a.out) };
            let v = pipeline::cmd_rank(&cfg)?;
            let unavailable = v.iter().filter(|v| !v.available()).count();
            println!(
                "{} rankings ({unavailable} unavailable) -> {}",
                v.len(),
                cfg.out.join(pipeline::TRAIT_TABLE_FILE).display()
            );
        }
        Command::Report(a) => {
            let cfg = RunConfig { j: a.j, ..RunConfig::new(a.manifest, a.out) };
            let files = pipeline::cmd_report(&cfg)?;
            println!("{} files -> {}", files.len(), cfg.out.display());
        }
        Command::All(a) => {
            let dataset = a.out.join("dataset");
            pipeline::cmd_generate(&a.scenes, &schedule(a.schedule_config.as_deref())?, &dataset, a.force, a.jobs)?;
            let cfg = RunConfig {
                detectors: a.detectors.configs()?,
                params: a.matching.params(),
                j: a.j,
                jobs: a.jobs,
                ..RunConfig::new(dataset.join(MANIFEST_FILE), a.out.clone())
            };
            let records = pipeline::cmd_evaluate(&cfg, a.force)?;
            let files = pipeline::cmd_report(&cfg)?;
            println!("{} records, {} report files -> {}", records.len(), files.len(), a.out.display());
        }
        Command::Synth(a) => {
            let scenes = scenebias::synth::write_corpus(&a.out, a.count, a.seed, a.width, a.height)?;
            println!("{} scenes -> {}", scenes.len(), a.out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Io => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

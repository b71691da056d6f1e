use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use autotune::cqt::{cqt, CqtParams};
use autotune::datagen::{build_corpus, CorpusConfig, Split};
use autotune::error::{Error, Result};
use autotune::pipeline::{
    analyze_vocal, cmd_baseline, cmd_clips, cmd_correct, cmd_eval, cmd_train, deviation_stats,
    parse_config_file, read_performance, ClipParams, TrainConfig,
};
use autotune::pitch::hz_to_midi;
use autotune::render::render_spectrogram_png;

#[derive(Parser)]
#[command(
    name = "autotune",
    version,
    about = "Score-free per-note vocal pitch correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a corpus of songs with detuned CQT training versions.
    BuildCorpus(BuildCorpusArgs),
    /// Train the network on a corpus.
    Train(TrainArgs),
    /// Report MSE, cents and sign agreement on a corpus split.
    Eval(EvalArgs),
    /// Correct a vocal against its backing track.
    Correct(CorrectArgs),
    /// Snap each note to the nearest equal-tempered degree.
    Baseline(BaselineArgs),
    /// Per-note cent deviations from reference pitches.
    Stats(StatsArgs),
    /// Sample fixed-length listening clips with enough voiced frames.
    Clips(ClipsArgs),
    /// Render a CQT spectrogram as a grayscale PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct BuildCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    validation: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    versions: Option<usize>,
    /// Melody notes per song.
    #[arg(long)]
    notes: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML or JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    versions: Option<usize>,
    #[arg(long)]
    validation_every: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    target_train_mse: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Full report with per-note residuals.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    vocal: PathBuf,
    #[arg(long)]
    backing: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    vocal: PathBuf,
    /// Accepted for symmetry with `correct`; unused.
    #[arg(long)]
    backing: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    vocal: PathBuf,
    /// JSON array of MIDI pitches, one per detected note. Defaults to the
    /// nearest equal-tempered degree of each note.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClipsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    count: usize,
    #[arg(long, default_value_t = 12.0)]
    length: f64,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Lowest bin shown.
    #[arg(long)]
    bin_lo: Option<usize>,
    /// One past the highest bin shown.
    #[arg(long)]
    bin_hi: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildCorpus(a) => {
            let mut config = CorpusConfig {
                seed: a.seed,
                ..CorpusConfig::default()
            };
            if let Some(v) = a.train {
                config.train = v;
            }
            if let Some(v) = a.validation {
                config.validation = v;
            }
            if let Some(v) = a.test {
                config.test = v;
            }
            if let Some(v) = a.versions {
                config.versions = v;
            }
            if let Some(v) = a.notes {
                config.song.n_notes = v;
            }
            let manifest = build_corpus(&a.out, &config)?;
            log::info!(
                "wrote {} songs to {}",
                manifest.entries.len(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let config = train_config(a)?;
            let summary = cmd_train(&config)?;
            print_json(&summary)?;
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.manifest, a.split.into(), &a.checkpoint)?;
            if let Some(path) = &a.report {
                write_json(&report, path)?;
            }
            println!(
                "notes {} skipped {} mse {:.5} cents {:.1} sign agreement {:.3}",
                report.notes, report.skipped, report.mse, report.cents, report.sign_agreement
            );
        }
        Command::Correct(a) => {
            let report = cmd_correct(
                &a.vocal,
                &a.backing,
                &a.checkpoint,
                &a.out,
                a.report.as_deref(),
            )?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            log::info!("corrected {} notes", report.notes.len());
        }
        Command::Baseline(a) => {
            if a.backing.is_some() {
                log::info!("baseline ignores the backing track");
            }
            let report = cmd_baseline(&a.vocal, &a.out, a.report.as_deref())?;
            log::info!("corrected {} notes", report.notes.len());
        }
        Command::Stats(a) => {
            let vocal = read_performance(&a.vocal)?;
            let (track, notes) = analyze_vocal(&vocal)?;
            let reference: Vec<f64> = match &a.reference {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    serde_json::from_str(&text)?
                }
                None => notes
                    .iter()
                    .map(|n| hz_to_midi(n.median_f0).map(f64::round))
                    .collect::<Result<_>>()?,
            };
            let stats = deviation_stats(&track, &notes, &reference)?;
            match &a.out {
                Some(path) => write_json(&stats, path)?,
                None => print_json(&stats)?,
            }
        }
        Command::Clips(a) => {
            let audio = read_performance(&a.input)?;
            let (track, _) = analyze_vocal(&audio)?;
            let params = ClipParams {
                count: a.count,
                length_secs: a.length,
                threshold: a.threshold,
                seed: a.seed,
                ..ClipParams::default()
            };
            fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
            let selection = cmd_clips(&audio, &track, &params, &a.out_dir)?;
            log::info!(
                "wrote {} clips at voicing threshold {:.2}",
                selection.clips.len(),
                selection.final_threshold()
            );
        }
        Command::Render(a) => {
            let audio = read_performance(&a.input)?;
            let spec = cqt(&audio, &CqtParams::default())?;
            let range = match (a.bin_lo, a.bin_hi) {
                (None, None) => None,
                (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(spec.bins))),
            };
            render_spectrogram_png(&spec, &a.out, range)?;
        }
    }
    Ok(())
}

fn train_config(a: TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &a.config {
        Some(path) => parse_config_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.manifest {
        c.manifest = v;
    }
    if let Some(v) = a.lr {
        c.lr = v;
    }
    if let Some(v) = a.clip {
        c.clip = v;
    }
    if let Some(v) = a.versions {
        c.versions = v;
    }
    if let Some(v) = a.validation_every {
        c.validation_every = v;
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if a.max_steps.is_some() {
        c.max_steps = a.max_steps;
    }
    if a.target_train_mse.is_some() {
        c.target_train_mse = a.target_train_mse;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.checkpoint_dir {
        c.checkpoint_dir = v;
    }
    if a.metrics.is_some() {
        c.metrics = a.metrics;
    }
    c.validate()?;
    Ok(c)
}

//! `genre-igs`: extract features, train classifiers, evaluate and render reports.

mod commands;
mod config;
mod error;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genre_igs::audio_io::Fold;
use genre_igs::igs::Variant;

use crate::config::{Overrides, PipelineConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "genre-igs", version, about = "Music genre classification with inter-genre similarity modelling")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed (fold split, EM initialization, synthetic corpora).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Treat per-clip failures as fatal.
    #[arg(long, global = true)]
    strict: bool,

    /// Classifier variants: flat, igs, iigs, smigs (comma-separated or repeated).
    #[arg(long = "variant", global = true, value_delimiter = ',')]
    variants: Vec<Variant>,

    /// Genre-model mixture counts (comma-separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    mixtures: Vec<usize>,

    /// Number of IGS models for the iterative variant.
    #[arg(long, global = true)]
    iterations: Option<usize>,

    /// Decision windows, e.g. `0.5,1,3,30,whole-clip`.
    #[arg(long, global = true)]
    windows: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic feature corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        genres: Option<usize>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// Decode manifest clips and write one feature dump per clip.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory clip paths are relative to; defaults to the manifest's directory.
        #[arg(long)]
        audio_root: Option<PathBuf>,
    },
    /// Train classifiers per fold, or on all clips with `--no-cv`.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_cv: bool,
    },
    /// Cross-validate, or evaluate saved classifiers, and write report.json and report.txt.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Saved classifier documents; without them a full cross validation runs.
        #[arg(long, num_args = 1..)]
        models: Vec<PathBuf>,
        /// Fold to test saved classifiers on; defaults to the fold they were not trained on.
        #[arg(long)]
        test_fold: Option<Fold>,
        #[arg(long)]
        allow_train_test_overlap: bool,
    },
    /// Render a saved report.json as text.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let windows = g
        .windows
        .as_deref()
        .map(genre_igs::eval::parse_window_list)
        .transpose()?;
    let overrides = Overrides {
        seed: g.seed,
        jobs: g.jobs,
        strict: g.strict,
        variants: (!g.variants.is_empty()).then(|| g.variants.clone()),
        mixtures: (!g.mixtures.is_empty()).then(|| g.mixtures.clone()),
        iterations: g.iterations,
        windows,
    };
    let mut config = PipelineConfig::load(g.config.as_deref(), &overrides)?;
    if let Some(jobs) = config.jobs {
        // a pool already exists when called twice in one process; the first size wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Synth {
            out,
            genres,
            overlap,
            clips,
            seconds,
        } => {
            let s = &mut config.synth;
            s.genres = genres.unwrap_or(s.genres);
            s.overlap = overlap.unwrap_or(s.overlap);
            s.clips_per_genre = clips.unwrap_or(s.clips_per_genre);
            s.seconds_per_clip = seconds.unwrap_or(s.seconds_per_clip);
            commands::synth(&config, &out)
        }
        Command::Extract {
            manifest,
            out,
            audio_root,
        } => commands::extract(&config, &manifest, &out, audio_root.as_deref()),
        Command::Train {
            manifest,
            features,
            out,
            no_cv,
        } => commands::train(&config, &manifest, &features, &out, no_cv),
        Command::Evaluate {
            manifest,
            features,
            out,
            models,
            test_fold,
            allow_train_test_overlap,
        } => commands::evaluate(
            &config,
            &manifest,
            &features,
            &out,
            &models,
            test_fold,
            allow_train_test_overlap,
        ),
        Command::Report { input, out } => commands::report(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}

//! Runs the two-fold synthetic benchmark over several seeds and prints mean CCRs.
//!
//! ```text
//! cargo run --release -p genre-igs --example synthetic_benchmark -- [seeds] [k] [overlap] [first_seed]
//! ```

use std::time::Instant;

use genre_igs::eval::{cross_validate, synth_corpus_with, DecisionWindowSpec, ExperimentConfig, SynthParams};
use genre_igs::igs::{ClassifierConfig, Variant};

fn main() -> genre_igs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let k: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let overlap: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let first: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let windows = vec![
        DecisionWindowSpec::Seconds(0.5),
        DecisionWindowSpec::Seconds(1.0),
        DecisionWindowSpec::Seconds(3.0),
    ];
    let mut sums = vec![vec![0.0; windows.len()]; Variant::ALL.len()];
    let params: SynthParams = match std::env::var("SYNTH") {
        Ok(json) => serde_json::from_str(&json).expect("SYNTH is a SynthParams JSON object"),
        Err(_) => SynthParams::default(),
    };
    let started = Instant::now();
    for seed in first..first + seeds {
        let corpus = synth_corpus_with(5, overlap, 20, 10.0, seed, &params)?;
        let config = ExperimentConfig {
            variants: Variant::ALL.to_vec(),
            mixtures: vec![k],
            windows: windows.clone(),
            split_seed: seed,
            classifier: ClassifierConfig {
                iterations: 3,
                em: genre_igs::gmm::EmConfig {
                    seed,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let report = cross_validate(&corpus, &config)?;
        print!("seed {seed}:");
        for (vi, v) in Variant::ALL.iter().enumerate() {
            print!("  {}", v.column_title());
            for (wi, w) in windows.iter().enumerate() {
                let ccr = report.ccr(*v, k, *w).unwrap_or(f64::NAN);
                sums[vi][wi] += ccr;
                print!(" {ccr:6.2}");
            }
        }
        println!();
        if std::env::var_os("REPORT").is_some() {
            println!("{}", genre_igs::eval::render_report_text(&report));
        }
        for w in &report.warnings {
            println!("    {w}");
        }
    }
    println!("mean over {seeds} seeds, k={k}, overlap={overlap} ({:.1?})", started.elapsed());
    print!("{:<8}", "window");
    for v in Variant::ALL {
        print!("{:>9}", v.column_title());
    }
    println!();
    for (wi, w) in windows.iter().enumerate() {
        print!("{:<8}", w.label());
        for s in &sums {
            print!("{:>9.2}", s[wi] / seeds as f64);
        }
        println!();
    }
    Ok(())
}

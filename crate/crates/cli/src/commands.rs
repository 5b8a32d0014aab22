use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use genre_igs::audio_io::{load_manifest, load_wav, DatasetManifest, Fold};
use genre_igs::dsp::extract_timbral_features;
use genre_igs::eval::{
    combine_fold_reports, cross_validate, evaluate as evaluate_classifier, render_report_text, synth_corpus_with,
    Corpus, EvaluationReport, LabeledClip,
};
use genre_igs::features::{dump_file_name, parse_dump, render_dump, ClipFeatures};
use genre_igs::igs::{train_variants, IgsClassifier, Provenance};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::CliError;

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    load_manifest(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Joins a manifest with the feature dumps in `features`.
fn load_corpus(manifest_path: &Path, features: &Path) -> Result<Corpus, CliError> {
    let manifest = read_manifest(manifest_path)?;
    let frames: Vec<Vec<Vec<f64>>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let path = features.join(dump_file_name(&e.clip_path));
            let text = fs::read_to_string(&path).map_err(|err| CliError::io(&path, err))?;
            let mut clips = parse_dump(&text).map_err(|err| CliError::Data(format!("{}: {err}", path.display())))?;
            if clips.len() != 1 {
                return Err(CliError::Data(format!(
                    "{}: expected one clip, found {}",
                    path.display(),
                    clips.len()
                )));
            }
            Ok(clips.remove(0).frames)
        })
        .collect::<Result<_, CliError>>()?;
    let mut frames = frames.into_iter();
    Ok(Corpus::from_manifest(&manifest, |_| Ok(frames.next().expect("one per entry")))?)
}

pub fn synth(config: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let s = &config.synth;
    let corpus = synth_corpus_with(s.genres, s.overlap, s.clips_per_genre, s.seconds_per_clip, config.seed, &s.params)?
        .with_folds(config.seed)?;
    let features = out.join("features");
    create_dir(&features)?;
    let header = format!("# synthetic corpus config={}\n", serde_json::to_string(&config.to_value()).expect("json"));
    for clip in &corpus.clips {
        let dump = render_dump(&ClipFeatures {
            source_id: clip.id.clone(),
            frames: clip.frames.clone(),
        });
        write_file(&features.join(dump_file_name(&clip.id)), &(header.clone() + &dump))?;
    }
    write_file(&out.join("manifest.tsv"), &corpus.manifest().to_tsv())?;
    println!(
        "wrote {} clips of {} genres to {}",
        corpus.clips.len(),
        corpus.genre_labels.len(),
        out.display()
    );
    Ok(())
}

pub fn extract(config: &PipelineConfig, manifest_path: &Path, out: &Path, audio_root: Option<&Path>) -> Result<(), CliError> {
    let manifest = read_manifest(manifest_path)?;
    let root: PathBuf = match audio_root {
        Some(r) => r.to_path_buf(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(out)?;
    let header = format!("# features dsp={}\n", serde_json::to_string(&config.dsp).expect("json"));
    let results: Vec<Result<(), String>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.clip_path);
            let clip = load_wav(&path).map_err(|err| format!("{}: {err}", path.display()))?;
            let frames = extract_timbral_features(&clip, &config.dsp).map_err(|err| format!("{}: {err}", path.display()))?;
            let dump = render_dump(&ClipFeatures::from_frame_features(e.clip_path.clone(), &frames));
            let target = out.join(dump_file_name(&e.clip_path));
            fs::write(&target, header.clone() + &dump).map_err(|err| format!("{}: {err}", target.display()))
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    for f in &failures {
        warn(format!("extraction failed: {f}"));
    }
    let ok = results.len() - failures.len();
    println!("extracted {ok} of {} clips into {}", results.len(), out.display());
    if !failures.is_empty() {
        if config.strict {
            return Err(CliError::Data(format!(
                "{} clip(s) failed, first: {}",
                failures.len(),
                failures[0]
            )));
        }
        warn(format!("{} clip(s) failed; rerun with --strict to fail the run", failures.len()));
    }
    Ok(())
}

fn model_file_name(c: &IgsClassifier, fold: Option<Fold>) -> String {
    let suffix = fold.map_or_else(|| "all".to_string(), |f| format!("fold{f}"));
    format!("{}-k{}-{suffix}.json", c.variant, c.config.k)
}

pub fn train(config: &PipelineConfig, manifest: &Path, features: &Path, out: &Path, no_cv: bool) -> Result<(), CliError> {
    let mut corpus = load_corpus(manifest, features)?;
    if !no_cv {
        corpus = corpus.with_folds(config.seed)?;
    }
    let splits: Vec<(Option<Fold>, Vec<&LabeledClip>)> = if no_cv {
        vec![(None, corpus.clips.iter().collect())]
    } else {
        [Fold::A, Fold::B].into_iter().map(|f| (Some(f), corpus.fold(f))).collect()
    };
    create_dir(out)?;
    for (fold, clips) in splits {
        let train = corpus.training_set(clips.iter().copied());
        if let Some(g) = train.iter().find(|g| g.frames.is_empty()) {
            let fold = fold.map(|f| format!("fold {f}")).unwrap_or_else(|| "the corpus".into());
            return Err(CliError::Data(format!("{fold} has no '{}' clips", g.label)));
        }
        for &k in &config.mixtures {
            let cfg = config.classifier.clone().with_k(k);
            for mut c in train_variants(&train, &config.variants, &cfg)? {
                for flag in &c.flags {
                    warn(format!("{} k={k}: {flag:?}", c.variant));
                }
                c.provenance = Some(Provenance {
                    training_fold: fold,
                    training_clips: clips.iter().map(|c| c.id.clone()).collect(),
                    pipeline: config.to_value(),
                });
                let path = out.join(model_file_name(&c, fold));
                write_file(&path, &c.to_json())?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn load_classifier(path: &Path) -> Result<IgsClassifier, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    IgsClassifier::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn evaluate_models(
    config: &PipelineConfig,
    corpus: &Corpus,
    models: &[PathBuf],
    test_fold: Option<Fold>,
    allow_overlap: bool,
) -> Result<EvaluationReport, CliError> {
    let corpus = corpus.with_folds(config.seed)?;
    let mut reports = Vec::new();
    for path in models {
        let c = load_classifier(path)?;
        if c.genre_labels != corpus.genre_labels {
            return Err(CliError::Data(format!(
                "{}: genre labels {:?} do not match the manifest's {:?}",
                path.display(),
                c.genre_labels,
                corpus.genre_labels
            )));
        }
        let provenance = c.provenance.clone().unwrap_or_default();
        let fold = test_fold.or(provenance.training_fold.map(Fold::other));
        let test: Vec<&LabeledClip> = match fold {
            Some(f) => corpus.fold(f),
            None => corpus.clips.iter().collect(),
        };
        let trained_on: HashSet<&str> = provenance.training_clips.iter().map(String::as_str).collect();
        let overlap = test.iter().filter(|t| trained_on.contains(t.id.as_str())).count();
        if !allow_overlap && (overlap > 0 || c.provenance.is_none()) {
            let what = fold.map_or_else(|| "all clips".to_string(), |f| format!("fold {f}"));
            let why = if c.provenance.is_none() {
                "it records no training clips".to_string()
            } else {
                format!("{overlap} test clip(s) were used for training")
            };
            return Err(CliError::Usage(format!(
                "refusing to evaluate {} on {what}: {why}; pass --allow-train-test-overlap to override",
                path.display()
            )));
        }
        reports.push(evaluate_classifier(&c, &test, &config.windows, config.dsp.hop_ms)?);
    }
    Ok(combine_fold_reports(&reports)?)
}

pub fn evaluate(
    config: &PipelineConfig,
    manifest: &Path,
    features: &Path,
    out: &Path,
    models: &[PathBuf],
    test_fold: Option<Fold>,
    allow_overlap: bool,
) -> Result<(), CliError> {
    let corpus = load_corpus(manifest, features)?;
    let mut report = if models.is_empty() {
        cross_validate(&corpus, &config.experiment())?
    } else {
        evaluate_models(config, &corpus, models, test_fold, allow_overlap)?
    };
    report.config = config.to_value();
    for w in &report.warnings {
        warn(w);
    }
    for e in report.entries.iter().filter(|e| e.empty) {
        warn(format!(
            "{} k={} window {} produced no windows ({} clip(s) too short)",
            e.variant,
            e.mixtures,
            e.window,
            e.short_clips.len()
        ));
    }
    create_dir(out)?;
    let text = render_report_text(&report);
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn report(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let report = EvaluationReport::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let rendered = render_report_text(&report);
    match out {
        Some(path) => write_file(path, &rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

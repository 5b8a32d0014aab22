//! Flat, IGS, iterative IGS and score-modelling IGS genre classifiers.
//!
//! Every variant decides a window `f_1..f_K` by maximizing, over genres `n`, the
//! weighted mean log-likelihood
//!
//! ```text
//! score_n = Σ_k ω_kn · log p(f_k | genre_n) / Σ_k ω_kn
//! ```
//!
//! and differs only in how the binary frame weights `ω_kn` are chosen:
//!
//! | variant | `ω_kn = 1` iff |
//! |---------|----------------|
//! | flat    | always |
//! | igs     | `log p(f|genre_n) > log p(f|igs)` |
//! | iigs    | `log p(f|genre_n) > max_t log p(f|igs_t)` (or "any t", see [`IigsRule`]) |
//! | smigs   | `log p(s|correct_n) > log p(s|confused_n)` for the score-difference vector `s` |
//!
//! All comparisons are strict: a tie eliminates the frame. When every frame is
//! eliminated for a genre, that genre falls back to its unweighted mean.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::Fold;
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, EmConfig, Gmm};
use crate::rng::derive_seed;

pub const CLASSIFIER_SCHEMA_VERSION: u32 = 1;

const GENRE_SEED_TAG: u64 = 0;
const IGS_SEED_TAG: u64 = 1_000;
const SCORE_SEED_TAG: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Flat,
    Igs,
    Smigs,
    Iigs,
}

impl Variant {
    /// Table column order.
    pub const ALL: [Variant; 4] = [Variant::Flat, Variant::Igs, Variant::Smigs, Variant::Iigs];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Flat => "flat",
            Variant::Igs => "igs",
            Variant::Smigs => "smigs",
            Variant::Iigs => "iigs",
        }
    }

    pub fn column_title(self) -> &'static str {
        match self {
            Variant::Flat => "Flat",
            Variant::Igs => "IGS",
            Variant::Smigs => "SMIGS",
            Variant::Iigs => "IIGS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(Variant::Flat),
            "igs" => Ok(Variant::Igs),
            "iigs" => Ok(Variant::Iigs),
            "smigs" => Ok(Variant::Smigs),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected flat, igs, iigs or smigs)"
            ))),
        }
    }
}

/// How several IGS models combine into one frame weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IigsRule {
    /// Keep a frame only if the genre beats every IGS model.
    #[default]
    MaxOverT,
    /// Keep a frame if the genre beats at least one IGS model.
    AnyT,
}

/// Which score differences feed the SMIGS score models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFeatures {
    /// `(d1, d2, d3)`.
    #[default]
    Full,
    /// `(d1, d2)`; drops the linearly dependent third difference.
    D1D2,
}

impl ScoreFeatures {
    pub fn dim(self) -> usize {
        match self {
            ScoreFeatures::Full => 3,
            ScoreFeatures::D1D2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Mixture count of each genre model.
    pub k: usize,
    /// Mixture count of each IGS model; defaults to `k`.
    pub k_igs: Option<usize>,
    /// Mixture count of each SMIGS score model.
    pub k_score: usize,
    /// Number of IGS models built by the iterative variant.
    pub iterations: usize,
    pub iigs_rule: IigsRule,
    pub score_features: ScoreFeatures,
    /// EM settings shared by every model; `n_components` and `seed` are set per model.
    pub em: EmConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            k: 8,
            k_igs: None,
            k_score: 4,
            iterations: 3,
            iigs_rule: IigsRule::MaxOverT,
            score_features: ScoreFeatures::Full,
            em: EmConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn k_igs(&self) -> usize {
        self.k_igs.unwrap_or(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_igs() == 0 || self.k_score == 0 {
            return Err(Error::Config("mixture counts must be positive".into()));
        }
        self.em.validate()
    }

    fn genre_em(&self, genre: usize) -> EmConfig {
        self.em
            .clone()
            .with_components(self.k)
            .with_seed(derive_seed(self.em.seed, GENRE_SEED_TAG + genre as u64))
    }

    fn igs_em(&self, iteration: usize) -> EmConfig {
        self.em
            .clone()
            .with_components(self.k_igs())
            .with_seed(derive_seed(self.em.seed, IGS_SEED_TAG + iteration as u64))
    }

    fn score_em(&self, genre: usize, correct: bool) -> EmConfig {
        let tag = SCORE_SEED_TAG + 2 * genre as u64 + u64::from(correct);
        self.em
            .clone()
            .with_components(self.k_score)
            .with_seed(derive_seed(self.em.seed, tag))
    }
}

/// Training frames of one genre.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreFrames {
    pub label: String,
    pub frames: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameLabel {
    TrueClassification,
    MisClassification,
    TrueIgs,
}

/// Log-likelihood differences of one frame against its own genre `n`, the best
/// competing genre, and the IGS model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiffVector {
    /// `log p(f|genre_n) - log p(f|best other)`
    pub d1: f64,
    /// `log p(f|genre_n) - log p(f|igs)`
    pub d2: f64,
    /// `log p(f|best other) - log p(f|igs)`
    pub d3: f64,
}

impl ScoreDiffVector {
    pub fn from_scores(own: f64, best_other: f64, igs: f64) -> Self {
        Self {
            d1: own - best_other,
            d2: own - igs,
            d3: best_other - igs,
        }
    }

    pub fn to_features(self, features: ScoreFeatures) -> Vec<f64> {
        match features {
            ScoreFeatures::Full => vec![self.d1, self.d2, self.d3],
            ScoreFeatures::D1D2 => vec![self.d1, self.d2],
        }
    }
}

/// Per-genre SMIGS models over score-difference vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModels {
    /// Trained on frames the IGS pass classified correctly.
    pub correct: Gmm,
    /// Trained on frames the IGS pass mis-classified.
    pub confused: Gmm,
}

/// A model that could not be trained as specified, and what was done instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegeneracyFlag {
    /// Too few mis-classified frames to fit IGS model `iteration`; it is omitted.
    IgsPoolInsufficient { iteration: usize, frames: usize },
    /// A genre had too few true-classified frames; its previous model is kept.
    GenreRefitSkipped { genre: usize, iteration: usize, frames: usize },
    /// Iterative training stopped before reaching the requested number of IGS models.
    IigsEarlyStop { iteration: usize },
    /// No score models for this genre; it uses the single-IGS weight rule.
    ScoreModelFallback { genre: usize, correct_frames: usize, confused_frames: usize },
}

/// Training-time metadata carried in classifier documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub training_fold: Option<Fold>,
    pub training_clips: Vec<String>,
    /// Effective pipeline configuration of the run that produced the classifier.
    pub pipeline: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierDocument", into = "ClassifierDocument")]
pub struct IgsClassifier {
    pub variant: Variant,
    pub genre_labels: Vec<String>,
    pub genre_models: Vec<Gmm>,
    pub igs_models: Vec<Gmm>,
    /// SMIGS only: one entry per genre, `None` where the genre fell back.
    pub score_models: Vec<Option<ScoreModels>>,
    pub flags: Vec<DegeneracyFlag>,
    pub config: ClassifierConfig,
    pub provenance: Option<Provenance>,
}

/// All model scores of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub genre: Vec<f64>,
    pub igs: Vec<f64>,
}

/// Outcome of classifying one decision window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDecision {
    pub genre: usize,
    /// Weighted mean log-likelihood per genre (after the all-eliminated fallback).
    pub scores: Vec<f64>,
    /// Frames with zero weight, per genre.
    pub eliminated: Vec<usize>,
    pub n_frames: usize,
}

/// Index of the maximum, earliest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest score among genres other than `n`, earliest on ties.
fn best_competitor(genre_scores: &[f64], n: usize) -> usize {
    let mut best: Option<usize> = None;
    for (m, s) in genre_scores.iter().enumerate() {
        if m != n && best.is_none_or(|b| *s > genre_scores[b]) {
            best = Some(m);
        }
    }
    best.expect("at least two genres")
}

fn score_frame(models: &[Gmm], f: &[f64]) -> Vec<f64> {
    models.iter().map(|g| g.score(f)).collect()
}

impl IgsClassifier {
    pub fn n_genres(&self) -> usize {
        self.genre_models.len()
    }

    pub fn dim(&self) -> usize {
        self.genre_models[0].dim()
    }

    /// The same genre models deciding with all weights equal to one.
    pub fn as_flat(&self) -> IgsClassifier {
        IgsClassifier {
            variant: Variant::Flat,
            igs_models: Vec::new(),
            score_models: Vec::new(),
            ..self.clone()
        }
    }

    pub fn igs_absent(&self) -> bool {
        self.igs_models.is_empty()
    }

    pub fn frame_scores(&self, f: &[f64]) -> Result<FrameScores> {
        self.check_dim(f)?;
        Ok(self.frame_scores_unchecked(f))
    }

    fn frame_scores_unchecked(&self, f: &[f64]) -> FrameScores {
        FrameScores {
            genre: score_frame(&self.genre_models, f),
            igs: score_frame(&self.igs_models, f),
        }
    }

    fn check_dim(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: f.len(),
            });
        }
        Ok(())
    }

    /// `ω` for genre `n` of a frame with dimension already checked.
    pub fn frame_weight(&self, f: &[f64], n: usize) -> Result<u8> {
        self.check_dim(f)?;
        if n >= self.n_genres() {
            return Err(Error::Config(format!("genre index {n} out of range")));
        }
        Ok(self.weight_from_scores(&self.frame_scores_unchecked(f), n))
    }

    fn igs_weight(own: f64, igs: &[f64], rule: IigsRule) -> u8 {
        if igs.is_empty() {
            return 1;
        }
        let keep = match rule {
            IigsRule::MaxOverT => igs.iter().all(|&s| own > s),
            IigsRule::AnyT => igs.iter().any(|&s| own > s),
        };
        u8::from(keep)
    }

    /// `ω` for genre `n` given the frame's precomputed scores.
    pub fn weight_from_scores(&self, scores: &FrameScores, n: usize) -> u8 {
        let own = scores.genre[n];
        match self.variant {
            Variant::Flat => 1,
            Variant::Igs => Self::igs_weight(own, &scores.igs, IigsRule::MaxOverT),
            Variant::Iigs => Self::igs_weight(own, &scores.igs, self.config.iigs_rule),
            Variant::Smigs => match (self.score_models.get(n).and_then(Option::as_ref), scores.igs.first()) {
                (Some(models), Some(&igs)) => {
                    let other = scores.genre[best_competitor(&scores.genre, n)];
                    let s = ScoreDiffVector::from_scores(own, other, igs)
                        .to_features(self.config.score_features);
                    u8::from(models.correct.score(&s) > models.confused.score(&s))
                }
                _ => Self::igs_weight(own, &scores.igs, IigsRule::MaxOverT),
            },
        }
    }

    /// Decides the genre of a window of frames.
    pub fn classify_window<T: AsRef<[f64]>>(&self, frames: &[T]) -> Result<WindowDecision> {
        if frames.is_empty() {
            return Err(Error::InsufficientData("empty decision window".into()));
        }
        let n = self.n_genres();
        let mut weighted = vec![0.0; n];
        let mut plain = vec![0.0; n];
        let mut kept = vec![0usize; n];
        for f in frames {
            let f = f.as_ref();
            self.check_dim(f)?;
            let scores = self.frame_scores_unchecked(f);
            for g in 0..n {
                let l = scores.genre[g];
                plain[g] += l;
                if self.weight_from_scores(&scores, g) == 1 {
                    weighted[g] += l;
                    kept[g] += 1;
                }
            }
        }
        let k = frames.len();
        let scores: Vec<f64> = (0..n)
            .map(|g| {
                if kept[g] > 0 {
                    weighted[g] / kept[g] as f64
                } else {
                    plain[g] / k as f64
                }
            })
            .collect();
        Ok(WindowDecision {
            genre: argmax(&scores),
            eliminated: kept.iter().map(|&c| k - c).collect(),
            scores,
            n_frames: k,
        })
    }

    pub fn to_document(&self) -> ClassifierDocument {
        self.clone().into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Persistence(e.to_string()))
    }
}

/// Labels each training frame by which model scores it highest.
///
/// Frames are scored against all genre models, then all IGS models; the earliest
/// maximum wins, so genres win ties against IGS models and lower genre indices win
/// ties among genres. With no IGS models the labels are two-way.
pub fn label_frames(genre_models: &[Gmm], igs_models: &[Gmm], train: &[GenreFrames]) -> Vec<Vec<FrameLabel>> {
    let n = genre_models.len();
    train
        .iter()
        .enumerate()
        .map(|(genre, gf)| {
            gf.frames
                .par_iter()
                .map(|f| {
                    let mut scores = score_frame(genre_models, f);
                    scores.extend(score_frame(igs_models, f));
                    let winner = argmax(&scores);
                    if winner == genre {
                        FrameLabel::TrueClassification
                    } else if winner >= n {
                        FrameLabel::TrueIgs
                    } else {
                        FrameLabel::MisClassification
                    }
                })
                .collect()
        })
        .collect()
}

fn validate_training(train: &[GenreFrames], min_frames: usize) -> Result<usize> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 genres, got {}",
            train.len()
        )));
    }
    let dim = train
        .iter()
        .find_map(|g| g.frames.first().map(Vec::len))
        .ok_or_else(|| Error::InsufficientData("no training frames".into()))?;
    for g in train {
        if g.frames.len() < min_frames {
            return Err(Error::InsufficientData(format!(
                "genre '{}' has {} frames, need at least {min_frames}",
                g.label,
                g.frames.len()
            )));
        }
        if let Some(bad) = g.frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
    }
    Ok(dim)
}

fn fit_genre_models(train: &[GenreFrames], config: &ClassifierConfig) -> Result<Vec<Gmm>> {
    train
        .par_iter()
        .enumerate()
        .map(|(n, g)| {
            fit_gmm(&g.frames, &config.genre_em(n)).map_err(|e| match e {
                Error::InsufficientData(msg) => Error::InsufficientData(format!("genre '{}': {msg}", g.label)),
                other => other,
            })
        })
        .collect()
}

fn frames_with_label<'a>(
    train: &'a [GenreFrames],
    labels: &'a [Vec<FrameLabel>],
    genre: usize,
    wanted: FrameLabel,
) -> Vec<&'a [f64]> {
    train[genre]
        .frames
        .iter()
        .zip(&labels[genre])
        .filter(|(_, l)| **l == wanted)
        .map(|(f, _)| f.as_slice())
        .collect()
}

fn pooled_misclassified<'a>(train: &'a [GenreFrames], labels: &'a [Vec<FrameLabel>]) -> Vec<&'a [f64]> {
    (0..train.len())
        .flat_map(|n| frames_with_label(train, labels, n, FrameLabel::MisClassification))
        .collect()
}

/// Refits each genre on its true-classified frames, keeping the current model when
/// the pool is smaller than `k`.
fn refit_genres(
    train: &[GenreFrames],
    labels: &[Vec<FrameLabel>],
    current: &[Gmm],
    config: &ClassifierConfig,
    iteration: usize,
    flags: &mut Vec<DegeneracyFlag>,
) -> Result<Vec<Gmm>> {
    let refits: Vec<Result<Option<Gmm>>> = (0..train.len())
        .into_par_iter()
        .map(|n| {
            let pool = frames_with_label(train, labels, n, FrameLabel::TrueClassification);
            if pool.len() < config.k {
                Ok(None)
            } else {
                fit_gmm(&pool, &config.genre_em(n)).map(Some)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(train.len());
    for (n, r) in refits.into_iter().enumerate() {
        match r? {
            Some(g) => out.push(g),
            None => {
                let frames = labels[n].iter().filter(|l| **l == FrameLabel::TrueClassification).count();
                flags.push(DegeneracyFlag::GenreRefitSkipped { genre: n, iteration, frames });
                out.push(current[n].clone());
            }
        }
    }
    Ok(out)
}

fn fit_igs_model(pool: &[&[f64]], config: &ClassifierConfig, iteration: usize) -> Result<Option<Gmm>> {
    if pool.len() < config.k_igs() {
        return Ok(None);
    }
    fit_gmm(pool, &config.igs_em(iteration)).map(Some)
}

/// Result of single-IGS training, shared by the IGS, IIGS and SMIGS trainers.
#[derive(Debug, Clone)]
pub struct IgsStage {
    pub genre_models: Vec<Gmm>,
    pub igs_model: Option<Gmm>,
    /// Two-way labels of the training frames under the flat models.
    pub labels: Vec<Vec<FrameLabel>>,
    pub flags: Vec<DegeneracyFlag>,
}

/// Single-IGS construction: fit flat genre models, label the training frames, fit
/// the IGS model on the pooled mis-classified frames, refit each genre on its
/// true-classified frames.
pub fn igs_stage(train: &[GenreFrames], config: &ClassifierConfig) -> Result<IgsStage> {
    config.validate()?;
    validate_training(train, config.k)?;
    let flat = fit_genre_models(train, config)?;
    let labels = label_frames(&flat, &[], train);
    let mut flags = Vec::new();
    let pool = pooled_misclassified(train, &labels);
    let igs_model = fit_igs_model(&pool, config, 1)?;
    if igs_model.is_none() {
        flags.push(DegeneracyFlag::IgsPoolInsufficient {
            iteration: 1,
            frames: pool.len(),
        });
    }
    let genre_models = refit_genres(train, &labels, &flat, config, 1, &mut flags)?;
    Ok(IgsStage {
        genre_models,
        igs_model,
        labels,
        flags,
    })
}

fn labels_of(train: &[GenreFrames]) -> Vec<String> {
    train.iter().map(|g| g.label.clone()).collect()
}

pub fn train_flat(train: &[GenreFrames], config: &ClassifierConfig) -> Result<IgsClassifier> {
    config.validate()?;
    validate_training(train, config.k)?;
    Ok(IgsClassifier {
        variant: Variant::Flat,
        genre_labels: labels_of(train),
        genre_models: fit_genre_models(train, config)?,
        igs_models: Vec::new(),
        score_models: Vec::new(),
        flags: Vec::new(),
        config: config.clone(),
        provenance: None,
    })
}

pub fn train_igs(train: &[GenreFrames], config: &ClassifierConfig) -> Result<IgsClassifier> {
    Ok(igs_from_stage(train, config, igs_stage(train, config)?))
}

fn igs_from_stage(train: &[GenreFrames], config: &ClassifierConfig, stage: IgsStage) -> IgsClassifier {
    IgsClassifier {
        variant: Variant::Igs,
        genre_labels: labels_of(train),
        genre_models: stage.genre_models,
        igs_models: stage.igs_model.into_iter().collect(),
        score_models: Vec::new(),
        flags: stage.flags,
        config: config.clone(),
        provenance: None,
    }
}

pub fn train_iigs(train: &[GenreFrames], config: &ClassifierConfig) -> Result<IgsClassifier> {
    if config.iterations == 0 {
        return Err(Error::Config("iterative IGS needs at least 1 iteration".into()));
    }
    iigs_from_stage(train, config, igs_stage(train, config)?)
}

fn iigs_from_stage(train: &[GenreFrames], config: &ClassifierConfig, stage: IgsStage) -> Result<IgsClassifier> {
    if config.iterations == 0 {
        return Err(Error::Config("iterative IGS needs at least 1 iteration".into()));
    }
    let mut flags = stage.flags;
    let mut genre_models = stage.genre_models;
    let mut igs_models: Vec<Gmm> = stage.igs_model.into_iter().collect();
    if igs_models.is_empty() {
        if config.iterations > 1 {
            flags.push(DegeneracyFlag::IigsEarlyStop { iteration: 1 });
        }
    } else {
        for t in 2..=config.iterations {
            let labels = label_frames(&genre_models, &igs_models, train);
            let pool = pooled_misclassified(train, &labels);
            let Some(model) = fit_igs_model(&pool, config, t)? else {
                flags.push(DegeneracyFlag::IgsPoolInsufficient {
                    iteration: t,
                    frames: pool.len(),
                });
                flags.push(DegeneracyFlag::IigsEarlyStop { iteration: t });
                break;
            };
            genre_models = refit_genres(train, &labels, &genre_models, config, t, &mut flags)?;
            igs_models.push(model);
        }
    }
    Ok(IgsClassifier {
        variant: Variant::Iigs,
        genre_labels: labels_of(train),
        genre_models,
        igs_models,
        score_models: Vec::new(),
        flags,
        config: config.clone(),
        provenance: None,
    })
}

/// Score-difference vectors of genre `n`'s frames, paired with whether the frame's
/// label is [`FrameLabel::TrueClassification`].
pub fn build_score_diffs<T: AsRef<[f64]>>(
    genre_models: &[Gmm],
    igs_model: &Gmm,
    frames: &[T],
    n: usize,
    labels: &[FrameLabel],
) -> Result<Vec<(ScoreDiffVector, bool)>> {
    if genre_models.len() < 2 {
        return Err(Error::InsufficientData("score differences need at least 2 genres".into()));
    }
    if labels.len() != frames.len() {
        return Err(Error::Config(format!(
            "{} frames but {} labels",
            frames.len(),
            labels.len()
        )));
    }
    let dim = genre_models[0].dim();
    if let Some(bad) = frames.iter().find(|f| f.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }
    Ok(frames
        .iter()
        .zip(labels)
        .map(|(f, label)| {
            let f = f.as_ref();
            let scores = score_frame(genre_models, f);
            let other = scores[best_competitor(&scores, n)];
            (
                ScoreDiffVector::from_scores(scores[n], other, igs_model.score(f)),
                *label == FrameLabel::TrueClassification,
            )
        })
        .collect())
}

pub fn train_smigs(train: &[GenreFrames], config: &ClassifierConfig) -> Result<IgsClassifier> {
    smigs_from_stage(train, config, igs_stage(train, config)?)
}

fn smigs_from_stage(train: &[GenreFrames], config: &ClassifierConfig, stage: IgsStage) -> Result<IgsClassifier> {
    let mut flags = stage.flags;
    let n_genres = train.len();
    let per_genre: Vec<Result<(Option<ScoreModels>, usize, usize)>> = (0..n_genres)
        .into_par_iter()
        .map(|n| {
            let Some(igs) = stage.igs_model.as_ref() else {
                let correct = stage.labels[n].iter().filter(|l| **l == FrameLabel::TrueClassification).count();
                return Ok((None, correct, stage.labels[n].len() - correct));
            };
            let diffs = build_score_diffs(&stage.genre_models, igs, &train[n].frames, n, &stage.labels[n])?;
            let (correct, confused): (Vec<_>, Vec<_>) = diffs.into_iter().partition(|(_, ok)| *ok);
            let to_rows = |v: Vec<(ScoreDiffVector, bool)>| -> Vec<Vec<f64>> {
                v.into_iter().map(|(s, _)| s.to_features(config.score_features)).collect()
            };
            let (correct, confused) = (to_rows(correct), to_rows(confused));
            if correct.len() < config.k_score || confused.len() < config.k_score {
                return Ok((None, correct.len(), confused.len()));
            }
            let models = ScoreModels {
                correct: fit_gmm(&correct, &config.score_em(n, true))?,
                confused: fit_gmm(&confused, &config.score_em(n, false))?,
            };
            Ok((Some(models), correct.len(), confused.len()))
        })
        .collect();
    let mut score_models = Vec::with_capacity(n_genres);
    for (genre, r) in per_genre.into_iter().enumerate() {
        let (models, correct_frames, confused_frames) = r?;
        if models.is_none() {
            flags.push(DegeneracyFlag::ScoreModelFallback {
                genre,
                correct_frames,
                confused_frames,
            });
        }
        score_models.push(models);
    }
    Ok(IgsClassifier {
        variant: Variant::Smigs,
        genre_labels: labels_of(train),
        genre_models: stage.genre_models,
        igs_models: stage.igs_model.into_iter().collect(),
        score_models,
        flags,
        config: config.clone(),
        provenance: None,
    })
}

pub fn train_variant(train: &[GenreFrames], variant: Variant, config: &ClassifierConfig) -> Result<IgsClassifier> {
    match variant {
        Variant::Flat => train_flat(train, config),
        Variant::Igs => train_igs(train, config),
        Variant::Iigs => train_iigs(train, config),
        Variant::Smigs => train_smigs(train, config),
    }
}

/// Trains several variants, computing the shared IGS stage once.
///
/// Each returned classifier is identical to the one the matching single-variant
/// trainer produces.
pub fn train_variants(train: &[GenreFrames], variants: &[Variant], config: &ClassifierConfig) -> Result<Vec<IgsClassifier>> {
    if variants.contains(&Variant::Iigs) && config.iterations == 0 {
        return Err(Error::Config("iterative IGS needs at least 1 iteration".into()));
    }
    let needs_stage = variants.iter().any(|v| *v != Variant::Flat);
    let stage = if needs_stage { Some(igs_stage(train, config)?) } else { None };
    variants
        .iter()
        .map(|v| match v {
            Variant::Flat => train_flat(train, config),
            Variant::Igs => Ok(igs_from_stage(train, config, stage.clone().expect("stage"))),
            Variant::Iigs => iigs_from_stage(train, config, stage.clone().expect("stage")),
            Variant::Smigs => smigs_from_stage(train, config, stage.clone().expect("stage")),
        })
        .collect()
}

/// Versioned on-disk form of an [`IgsClassifier`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierDocument {
    pub schema_version: u32,
    pub variant: Variant,
    pub genre_labels: Vec<String>,
    pub genre_models: Vec<Gmm>,
    pub igs_models: Vec<Gmm>,
    pub score_models: Vec<Option<ScoreModels>>,
    pub degeneracy_flags: Vec<DegeneracyFlag>,
    pub config: ClassifierConfig,
    pub provenance: Option<Provenance>,
}

impl From<IgsClassifier> for ClassifierDocument {
    fn from(c: IgsClassifier) -> Self {
        ClassifierDocument {
            schema_version: CLASSIFIER_SCHEMA_VERSION,
            variant: c.variant,
            genre_labels: c.genre_labels,
            genre_models: c.genre_models,
            igs_models: c.igs_models,
            score_models: c.score_models,
            degeneracy_flags: c.flags,
            config: c.config,
            provenance: c.provenance,
        }
    }
}

impl TryFrom<ClassifierDocument> for IgsClassifier {
    type Error = Error;

    fn try_from(doc: ClassifierDocument) -> Result<Self> {
        let bad = |msg: String| Err(Error::Persistence(msg));
        if doc.schema_version != CLASSIFIER_SCHEMA_VERSION {
            return bad(format!(
                "unsupported classifier schema_version {} (supported: {CLASSIFIER_SCHEMA_VERSION})",
                doc.schema_version
            ));
        }
        let n = doc.genre_models.len();
        if n < 2 || doc.genre_labels.len() != n {
            return bad(format!("{n} genre models for {} labels", doc.genre_labels.len()));
        }
        let dim = doc.genre_models[0].dim();
        if doc.genre_models.iter().chain(&doc.igs_models).any(|g| g.dim() != dim) {
            return bad("genre and IGS models disagree on dimension".into());
        }
        match doc.variant {
            Variant::Flat if !doc.igs_models.is_empty() || !doc.score_models.is_empty() => {
                return bad("flat classifier carries IGS payload".into())
            }
            Variant::Igs | Variant::Smigs if doc.igs_models.len() > 1 => {
                return bad(format!("{} IGS models for a single-IGS variant", doc.igs_models.len()))
            }
            Variant::Iigs if doc.igs_models.len() > doc.config.iterations => {
                return bad(format!(
                    "{} IGS models exceed {} iterations",
                    doc.igs_models.len(),
                    doc.config.iterations
                ))
            }
            _ => {}
        }
        if doc.variant == Variant::Smigs {
            if doc.score_models.len() != n {
                return bad(format!("{} score model entries for {n} genres", doc.score_models.len()));
            }
            let want = doc.config.score_features.dim();
            for m in doc.score_models.iter().flatten() {
                if m.correct.dim() != want || m.confused.dim() != want {
                    return bad(format!("score models must have dim {want}"));
                }
            }
        } else if !doc.score_models.is_empty() {
            return bad(format!("{} classifier carries score models", doc.variant));
        }
        Ok(IgsClassifier {
            variant: doc.variant,
            genre_labels: doc.genre_labels,
            genre_models: doc.genre_models,
            igs_models: doc.igs_models,
            score_models: doc.score_models,
            flags: doc.degeneracy_flags,
            config: doc.config,
            provenance: doc.provenance,
        })
    }
}

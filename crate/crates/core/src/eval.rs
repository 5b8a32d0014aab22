//! Decision windows, two-fold cross validation, reports, and the synthetic corpus.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{split_two_fold, DatasetManifest, Fold, ManifestEntry};
use crate::dsp::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::igs::{train_variants, ClassifierConfig, GenreFrames, IgsClassifier, Variant, WindowDecision};
use crate::rng::{derive_seed, seeded};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HOP_MS: f64 = 10.0;

/// Length of a decision window.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum DecisionWindowSpec {
    Seconds(f64),
    /// One window spanning the whole clip.
    WholeClip,
}

impl DecisionWindowSpec {
    pub const DEFAULTS: [DecisionWindowSpec; 4] = [
        DecisionWindowSpec::Seconds(0.5),
        DecisionWindowSpec::Seconds(1.0),
        DecisionWindowSpec::Seconds(3.0),
        DecisionWindowSpec::Seconds(30.0),
    ];

    /// Frames per window at the given hop; `None` for whole-clip windows.
    pub fn frames_per_window(&self, hop_ms: f64) -> Result<Option<usize>> {
        match *self {
            DecisionWindowSpec::WholeClip => Ok(None),
            DecisionWindowSpec::Seconds(s) => {
                if !(s > 0.0) || !(hop_ms > 0.0) {
                    return Err(Error::Config(format!("invalid window {s} s at hop {hop_ms} ms")));
                }
                // tolerate representation error such as 0.3 / 0.01 = 29.999...
                let frames = (s * 1000.0 / hop_ms + 1e-9).floor() as usize;
                if frames == 0 {
                    return Err(Error::Config(format!(
                        "window of {s} s is shorter than one {hop_ms} ms frame"
                    )));
                }
                Ok(Some(frames))
            }
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DecisionWindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionWindowSpec::Seconds(s) => write!(f, "{s}s"),
            DecisionWindowSpec::WholeClip => f.write_str("whole-clip"),
        }
    }
}

impl FromStr for DecisionWindowSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("whole-clip") {
            return Ok(DecisionWindowSpec::WholeClip);
        }
        let number = s.strip_suffix('s').unwrap_or(s);
        match number.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(DecisionWindowSpec::Seconds(v)),
            _ => Err(Error::Config(format!("invalid decision window '{s}'"))),
        }
    }
}

impl Serialize for DecisionWindowSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DecisionWindowSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated window list such as `0.5,1,3,30,whole-clip`.
pub fn parse_window_list(s: &str) -> Result<Vec<DecisionWindowSpec>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Consecutive non-overlapping windows of one clip; a trailing partial window is dropped.
pub fn segment_windows<T>(frames: &[T], spec: DecisionWindowSpec, hop_ms: f64) -> Result<Vec<&[T]>> {
    match spec.frames_per_window(hop_ms)? {
        None if frames.is_empty() => Ok(Vec::new()),
        None => Ok(vec![frames]),
        Some(size) => Ok(frames.chunks_exact(size).collect()),
    }
}

/// A labeled clip's feature sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub genre: usize,
    pub fold: Option<Fold>,
    pub frames: Vec<Vec<f64>>,
}

/// Clips with a shared genre label list.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub genre_labels: Vec<String>,
    pub clips: Vec<LabeledClip>,
}

impl Corpus {
    /// Joins a manifest with per-clip features looked up by clip path.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        mut load: impl FnMut(&ManifestEntry) -> Result<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let clips = manifest
            .entries
            .iter()
            .map(|e| {
                Ok(LabeledClip {
                    id: e.clip_path.clone(),
                    genre: manifest.genre_index(&e.genre).expect("genre_set covers entries"),
                    fold: e.fold,
                    frames: load(e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            genre_labels: manifest.genre_set.clone(),
            clips,
        })
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .clips
                .iter()
                .map(|c| ManifestEntry {
                    clip_path: c.id.clone(),
                    genre: self.genre_labels[c.genre].clone(),
                    fold: c.fold,
                })
                .collect(),
            genre_set: self.genre_labels.clone(),
        }
    }

    /// Fills in missing fold letters with [`split_two_fold`].
    pub fn with_folds(&self, seed: u64) -> Result<Corpus> {
        if self.clips.iter().all(|c| c.fold.is_some()) {
            return Ok(self.clone());
        }
        let split = split_two_fold(&self.manifest(), seed)?;
        let mut out = self.clone();
        for (clip, entry) in out.clips.iter_mut().zip(&split.entries) {
            clip.fold = entry.fold;
        }
        Ok(out)
    }

    pub fn fold(&self, fold: Fold) -> Vec<&LabeledClip> {
        self.clips.iter().filter(|c| c.fold == Some(fold)).collect()
    }

    /// Pools frames per genre for training.
    pub fn training_set<'a>(&self, clips: impl IntoIterator<Item = &'a LabeledClip>) -> Vec<GenreFrames> {
        let mut out: Vec<GenreFrames> = self
            .genre_labels
            .iter()
            .map(|l| GenreFrames {
                label: l.clone(),
                frames: Vec::new(),
            })
            .collect();
        for clip in clips {
            out[clip.genre].frames.extend(clip.frames.iter().cloned());
        }
        out
    }
}

/// Anything that can decide a window; lets tests swap in reference decision rules.
pub trait WindowClassifier: Sync {
    fn n_genres(&self) -> usize;
    fn decide(&self, frames: &[Vec<f64>]) -> Result<WindowDecision>;
}

impl WindowClassifier for IgsClassifier {
    fn n_genres(&self) -> usize {
        IgsClassifier::n_genres(self)
    }

    fn decide(&self, frames: &[Vec<f64>]) -> Result<WindowDecision> {
        self.classify_window(frames)
    }
}

/// Window-level results for one decision window length on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEvaluation {
    pub window: DecisionWindowSpec,
    /// `None` when no windows were produced.
    pub ccr: Option<f64>,
    /// `confusion[true][predicted]` window counts.
    pub confusion: Vec<Vec<u64>>,
    /// Per genre model: mean over windows of the fraction of eliminated frames.
    pub eliminated_fraction: Vec<f64>,
    /// Clips too short to yield a single window.
    pub short_clips: Vec<String>,
}

impl WindowEvaluation {
    pub fn windows(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.windows() == 0
    }
}

/// Correct classification rate in percent.
pub fn ccr_from_confusion(confusion: &[Vec<u64>]) -> Option<f64> {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return None;
    }
    let trace: u64 = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    Some(trace as f64 / total as f64 * 100.0)
}

/// Classifies every window of every test clip, for each window spec.
pub fn evaluate_windows<C: WindowClassifier + ?Sized>(
    classifier: &C,
    test: &[&LabeledClip],
    specs: &[DecisionWindowSpec],
    hop_ms: f64,
) -> Result<Vec<WindowEvaluation>> {
    let n = classifier.n_genres();
    if let Some(bad) = test.iter().find(|c| c.genre >= n) {
        return Err(Error::Config(format!(
            "clip '{}' has genre index {} but the classifier knows {n} genres",
            bad.id, bad.genre
        )));
    }
    specs
        .iter()
        .map(|&spec| {
            let mut windows: Vec<(usize, &[Vec<f64>])> = Vec::new();
            let mut short_clips = Vec::new();
            for clip in test {
                let segs = segment_windows(&clip.frames, spec, hop_ms)?;
                if segs.is_empty() {
                    short_clips.push(clip.id.clone());
                }
                windows.extend(segs.into_iter().map(|w| (clip.genre, w)));
            }
            let decisions: Vec<WindowDecision> = windows
                .par_iter()
                .map(|(_, w)| classifier.decide(w))
                .collect::<Result<_>>()?;
            let mut confusion = vec![vec![0u64; n]; n];
            let mut eliminated = vec![0.0; n];
            for ((truth, _), d) in windows.iter().zip(&decisions) {
                confusion[*truth][d.genre] += 1;
                for (acc, e) in eliminated.iter_mut().zip(&d.eliminated) {
                    *acc += *e as f64 / d.n_frames as f64;
                }
            }
            if !decisions.is_empty() {
                eliminated.iter_mut().for_each(|e| *e /= decisions.len() as f64);
            }
            Ok(WindowEvaluation {
                window: spec,
                ccr: ccr_from_confusion(&confusion),
                confusion,
                eliminated_fraction: eliminated,
                short_clips,
            })
        })
        .collect()
}

/// One (variant, mixture count, window) cell of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub variant: Variant,
    pub mixtures: usize,
    pub window: DecisionWindowSpec,
    /// Unweighted mean of the non-empty fold CCRs.
    pub ccr: Option<f64>,
    pub fold_ccrs: Vec<Option<f64>>,
    /// Confusion counts summed over folds.
    pub confusion: Vec<Vec<u64>>,
    pub fold_confusions: Vec<Vec<Vec<u64>>>,
    /// Per genre model, averaged over folds.
    pub eliminated_fraction: Vec<f64>,
    pub short_clips: Vec<String>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub genre_labels: Vec<String>,
    pub entries: Vec<ReportEntry>,
    /// Degeneracy warnings gathered from the evaluated classifiers.
    pub warnings: Vec<String>,
    /// Effective configuration of the producing run.
    pub config: serde_json::Value,
}

impl EvaluationReport {
    pub fn entry(&self, variant: Variant, mixtures: usize, window: DecisionWindowSpec) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.variant == variant && e.mixtures == mixtures && e.window == window)
    }

    pub fn ccr(&self, variant: Variant, mixtures: usize, window: DecisionWindowSpec) -> Option<f64> {
        self.entry(variant, mixtures, window).and_then(|e| e.ccr)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvaluationReport = serde_json::from_str(text).map_err(|e| Error::Persistence(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Persistence(format!(
                "unsupported report schema_version {} (supported: {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

fn warnings_of(classifier: &IgsClassifier, fold: Option<Fold>) -> Vec<String> {
    classifier
        .flags
        .iter()
        .map(|f| {
            let fold = fold.map(|f| format!(" fold {f}")).unwrap_or_default();
            format!("{} k={}{fold}: {f:?}", classifier.variant, classifier.config.k)
        })
        .collect()
}

/// Evaluates one classifier on a test set.
pub fn evaluate(
    classifier: &IgsClassifier,
    test: &[&LabeledClip],
    specs: &[DecisionWindowSpec],
    hop_ms: f64,
) -> Result<EvaluationReport> {
    if let Some(bad) = test.iter().flat_map(|c| c.frames.first()).find(|f| f.len() != classifier.dim()) {
        return Err(Error::DimensionMismatch {
            expected: classifier.dim(),
            actual: bad.len(),
        });
    }
    let evals = evaluate_windows(classifier, test, specs, hop_ms)?;
    let entries = evals
        .into_iter()
        .map(|e| fold_entry(classifier.variant, classifier.config.k, e))
        .collect();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        genre_labels: classifier.genre_labels.clone(),
        entries,
        warnings: warnings_of(classifier, classifier.provenance.as_ref().and_then(|p| p.training_fold)),
        config: serde_json::Value::Null,
    })
}

fn fold_entry(variant: Variant, mixtures: usize, e: WindowEvaluation) -> ReportEntry {
    ReportEntry {
        variant,
        mixtures,
        window: e.window,
        ccr: e.ccr,
        fold_ccrs: vec![e.ccr],
        empty: e.is_empty(),
        fold_confusions: vec![e.confusion.clone()],
        confusion: e.confusion,
        eliminated_fraction: e.eliminated_fraction,
        short_clips: e.short_clips,
    }
}

/// Merges per-fold reports: matching cells are combined, CCRs averaged over folds.
pub fn combine_fold_reports(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("no fold reports to combine".into()))?;
    if reports.iter().any(|r| r.genre_labels != first.genre_labels) {
        return Err(Error::Config("fold reports disagree on genre labels".into()));
    }
    let mut order: Vec<(Variant, usize, String)> = Vec::new();
    let mut cells: BTreeMap<(Variant, usize, String), Vec<&ReportEntry>> = BTreeMap::new();
    for r in reports {
        for e in &r.entries {
            let key = (e.variant, e.mixtures, e.window.label());
            if !cells.contains_key(&key) {
                order.push(key.clone());
            }
            cells.entry(key).or_default().push(e);
        }
    }
    let n = first.genre_labels.len();
    let entries = order
        .into_iter()
        .map(|key| {
            let parts = &cells[&key];
            let fold_ccrs: Vec<Option<f64>> = parts.iter().flat_map(|p| p.fold_ccrs.iter().copied()).collect();
            let present: Vec<f64> = fold_ccrs.iter().flatten().copied().collect();
            let ccr = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            let mut confusion = vec![vec![0u64; n]; n];
            for p in parts {
                for (row, prow) in confusion.iter_mut().zip(&p.confusion) {
                    for (c, v) in row.iter_mut().zip(prow) {
                        *c += v;
                    }
                }
            }
            let non_empty: Vec<&&ReportEntry> = parts.iter().filter(|p| !p.empty).collect();
            let mut eliminated = vec![0.0; n];
            for p in &non_empty {
                for (acc, v) in eliminated.iter_mut().zip(&p.eliminated_fraction) {
                    *acc += v;
                }
            }
            if !non_empty.is_empty() {
                eliminated.iter_mut().for_each(|v| *v /= non_empty.len() as f64);
            }
            ReportEntry {
                variant: key.0,
                mixtures: key.1,
                window: parts[0].window,
                ccr,
                fold_ccrs,
                fold_confusions: parts.iter().flat_map(|p| p.fold_confusions.iter().cloned()).collect(),
                empty: confusion.iter().flatten().sum::<u64>() == 0,
                confusion,
                eliminated_fraction: eliminated,
                short_clips: parts.iter().flat_map(|p| p.short_clips.iter().cloned()).collect(),
            }
        })
        .collect();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        genre_labels: first.genre_labels.clone(),
        entries,
        warnings: reports.iter().flat_map(|r| r.warnings.iter().cloned()).collect(),
        config: first.config.clone(),
    })
}

/// Full experiment settings for [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    /// Genre-model mixture counts; one set of classifiers per entry.
    pub mixtures: Vec<usize>,
    pub windows: Vec<DecisionWindowSpec>,
    pub hop_ms: f64,
    /// Seed for generating missing fold assignments.
    pub split_seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            mixtures: vec![8],
            windows: DecisionWindowSpec::DEFAULTS.to_vec(),
            hop_ms: DEFAULT_HOP_MS,
            split_seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Two-fold cross validation: train on A and test on B, then the reverse.
///
/// Clips without a fold letter are assigned with [`split_two_fold`] seeded by
/// `config.split_seed`.
pub fn cross_validate(corpus: &Corpus, config: &ExperimentConfig) -> Result<EvaluationReport> {
    let corpus = corpus.with_folds(config.split_seed)?;
    let mut reports = Vec::new();
    for train_fold in [Fold::A, Fold::B] {
        let train_clips = corpus.fold(train_fold);
        let test_clips = corpus.fold(train_fold.other());
        for (genre, label) in corpus.genre_labels.iter().enumerate() {
            for (fold, clips) in [(train_fold, &train_clips), (train_fold.other(), &test_clips)] {
                if !clips.iter().any(|c| c.genre == genre) {
                    return Err(Error::InsufficientData(format!("fold {fold} has no '{label}' clips")));
                }
            }
        }
        let train = corpus.training_set(train_clips.iter().copied());
        for &k in &config.mixtures {
            let cfg = config.classifier.clone().with_k(k);
            for c in train_variants(&train, &config.variants, &cfg)? {
                let mut r = evaluate(&c, &test_clips, &config.windows, config.hop_ms)?;
                r.warnings = warnings_of(&c, Some(train_fold));
                reports.push(r);
            }
        }
    }
    let mut report = combine_fold_reports(&reports)?;
    report.config = serde_json::to_value(config).expect("config serializes");
    Ok(report)
}

/// Shape of the synthetic corpus.
///
/// Each genre owns a mixture of `genre_components` Gaussians scattered around a
/// genre centre. Every clip adds its own offset to the genre frames (recording and
/// arrangement variation), so windows from one clip are correlated. Clips are built
/// from segments of geometric length (mean `segment_frames`); each segment picks one
/// component and its frames jitter around a point drawn from it. With probability
/// `overlap` a segment comes from a broader confusable mixture shared by all genres
/// instead, so about that fraction of frames is confusable. Genres use the shared
/// components at different rates, which is what makes the shared material
/// misleading rather than neutral for frame-level likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub dim: usize,
    pub genre_components: usize,
    pub shared_components: usize,
    /// Spread of genre centres around the origin.
    pub genre_spread: f64,
    /// Spread of component means around their genre centre.
    pub component_spread: f64,
    /// Spread of the shared confusable component means around the origin.
    pub shared_spread: f64,
    /// Standard deviation of the per-clip offset.
    pub clip_offset: f64,
    /// Within-component standard deviations are drawn from this range.
    pub component_std: (f64, f64),
    /// Standard deviation range of the shared mixture's components.
    pub shared_std: (f64, f64),
    /// How unevenly genres use the shared components: each genre weights them by
    /// `exp(shared_bias * z)` with standard normal `z`; 0 gives uniform weights.
    pub shared_bias: f64,
    /// Mean length in frames of a segment drawn from a single component.
    pub segment_frames: f64,
    /// Standard deviation of frame-to-frame jitter around a segment's centre.
    pub segment_jitter: f64,
    pub hop_ms: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            dim: FEATURE_DIM,
            genre_components: 4,
            shared_components: 4,
            genre_spread: 0.3,
            component_spread: 1.0,
            shared_spread: 1.0,
            clip_offset: 0.3,
            component_std: (0.4, 0.6),
            shared_std: (1.0, 1.5),
            shared_bias: 2.0,
            segment_frames: 150.0,
            segment_jitter: 0.3,
            hop_ms: DEFAULT_HOP_MS,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.genre_spread,
            self.component_spread,
            self.shared_spread,
            self.clip_offset,
            self.segment_jitter,
            self.shared_bias,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("synthetic spreads, offsets and bias must be finite and >= 0".into()));
        }
        for (lo, hi) in [self.component_std, self.shared_std] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("invalid standard deviation range ({lo}, {hi})")));
            }
        }
        if self.dim == 0 || self.genre_components == 0 || self.shared_components == 0 {
            return Err(Error::Config("dim and component counts must be positive".into()));
        }
        if !(self.segment_frames >= 1.0 && self.segment_frames.is_finite()) {
            return Err(Error::Config(format!("segment_frames {} must be >= 1", self.segment_frames)));
        }
        Ok(())
    }
}

struct DiagMixture {
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

impl DiagMixture {
    fn random(rng: &mut impl Rng, centre: &[f64], spread: f64, n: usize, std_range: (f64, f64)) -> Self {
        let normal = Normal::new(0.0, spread).expect("finite spread");
        let stds = Uniform::new_inclusive(std_range.0, std_range.1).expect("valid std range");
        Self {
            means: (0..n)
                .map(|_| centre.iter().map(|c| c + normal.sample(rng)).collect())
                .collect(),
            stds: (0..n)
                .map(|_| centre.iter().map(|_| stds.sample(rng)).collect())
                .collect(),
        }
    }

    fn sample(&self, rng: &mut impl Rng, offset: &[f64]) -> Vec<f64> {
        let c = rng.random_range(0..self.means.len());
        self.sample_component(rng, c, offset)
    }

    fn sample_component(&self, rng: &mut impl Rng, c: usize, offset: &[f64]) -> Vec<f64> {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        self.means[c]
            .iter()
            .zip(&self.stds[c])
            .zip(offset)
            .map(|((m, s), o)| m + o + s * unit.sample(rng))
            .collect()
    }
}

/// Seeded synthetic labeled corpus with a tunable shared confusable region.
pub fn synth_corpus(
    n_genres: usize,
    overlap: f64,
    clips_per_genre: usize,
    seconds_per_clip: f64,
    seed: u64,
) -> Result<Corpus> {
    synth_corpus_with(n_genres, overlap, clips_per_genre, seconds_per_clip, seed, &SynthParams::default())
}

pub fn synth_corpus_with(
    n_genres: usize,
    overlap: f64,
    clips_per_genre: usize,
    seconds_per_clip: f64,
    seed: u64,
    params: &SynthParams,
) -> Result<Corpus> {
    if n_genres < 2 {
        return Err(Error::Config(format!("need at least 2 genres, got {n_genres}")));
    }
    params.validate()?;
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} outside [0, 1]")));
    }
    if !(seconds_per_clip > 0.0) || !(params.hop_ms > 0.0) {
        return Err(Error::Config("clip length and hop must be positive".into()));
    }
    let frames_per_clip = (seconds_per_clip * 1000.0 / params.hop_ms + 1e-9).floor() as usize;
    let dim = params.dim;
    let mut rng = seeded(derive_seed(seed, 0));
    let origin = vec![0.0; dim];
    let shared = DiagMixture::random(&mut rng, &origin, params.shared_spread, params.shared_components, params.shared_std);
    let centre_dist = Normal::new(0.0, params.genre_spread).expect("finite spread");
    let genres: Vec<DiagMixture> = (0..n_genres)
        .map(|_| {
            let centre: Vec<f64> = (0..dim).map(|_| centre_dist.sample(&mut rng)).collect();
            DiagMixture::random(&mut rng, &centre, params.component_spread, params.genre_components, params.component_std)
        })
        .collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let shared_usage: Vec<WeightedIndex<f64>> = (0..n_genres)
        .map(|_| {
            let w: Vec<f64> = (0..params.shared_components)
                .map(|_| (params.shared_bias * unit.sample(&mut rng)).exp())
                .collect();
            WeightedIndex::new(w).expect("positive weights")
        })
        .collect();
    let offset_dist = Normal::new(0.0, params.clip_offset).expect("finite offset");
    let jitter = Normal::new(0.0, params.segment_jitter).expect("finite jitter");

    let genre_labels: Vec<String> = (0..n_genres).map(|g| format!("genre{g:02}")).collect();
    let mut clips = Vec::with_capacity(n_genres * clips_per_genre);
    for (g, mixture) in genres.iter().enumerate() {
        for c in 0..clips_per_genre {
            let mut rng = seeded(derive_seed(seed, 1 + (g * clips_per_genre + c) as u64));
            let offset: Vec<f64> = (0..dim).map(|_| offset_dist.sample(&mut rng)).collect();
            let mut frames = Vec::with_capacity(frames_per_clip);
            while frames.len() < frames_per_clip {
                let centre = if rng.random::<f64>() < overlap {
                    let c = shared_usage[g].sample(&mut rng);
                    shared.sample_component(&mut rng, c, &origin)
                } else {
                    mixture.sample(&mut rng, &offset)
                };
                // geometric segment length with the configured mean
                let mut len = 1;
                while rng.random::<f64>() > 1.0 / params.segment_frames {
                    len += 1;
                }
                for _ in 0..len.min(frames_per_clip - frames.len()) {
                    frames.push(centre.iter().map(|c| c + jitter.sample(&mut rng)).collect());
                }
            }
            clips.push(LabeledClip {
                id: format!("{}_clip{c:03}", genre_labels[g]),
                genre: g,
                fold: None,
                frames,
            });
        }
    }
    Ok(Corpus { genre_labels, clips })
}

fn fmt_ccr(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Aligned-text tables: one per mixture count, rows are windows and columns are
/// the variants present, in the order Flat, IGS, SMIGS, IIGS. Confusion matrices follow.
pub fn render_report_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let mut mixtures: Vec<usize> = report.entries.iter().map(|e| e.mixtures).collect();
    mixtures.sort_unstable();
    mixtures.dedup();
    for &k in &mixtures {
        let cells: Vec<&ReportEntry> = report.entries.iter().filter(|e| e.mixtures == k).collect();
        let variants: Vec<Variant> = Variant::ALL
            .into_iter()
            .filter(|v| cells.iter().any(|e| e.variant == *v))
            .collect();
        let mut windows: Vec<DecisionWindowSpec> = Vec::new();
        for e in &cells {
            if !windows.contains(&e.window) {
                windows.push(e.window);
            }
        }
        writeln!(out, "Correct Classification Rates (%), {k}-mixture GMM").unwrap();
        write!(out, "{:<12}", "Window").unwrap();
        for v in &variants {
            write!(out, "{:>10}", v.column_title()).unwrap();
        }
        out.push('\n');
        for w in &windows {
            write!(out, "{:<12}", w.label()).unwrap();
            for v in &variants {
                let ccr = cells.iter().find(|e| e.variant == *v && e.window == *w).and_then(|e| e.ccr);
                write!(out, "{:>10}", fmt_ccr(ccr)).unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
    }

    for e in &report.entries {
        writeln!(
            out,
            "Confusion {} k={} window={} (CCR {}, folds [{}]){}",
            e.variant.column_title(),
            e.mixtures,
            e.window,
            fmt_ccr(e.ccr),
            e.fold_ccrs.iter().map(|c| fmt_ccr(*c)).collect::<Vec<_>>().join(", "),
            if e.empty { " EMPTY" } else { "" }
        )
        .unwrap();
        let width = report.genre_labels.iter().map(String::len).max().unwrap_or(4).max(6);
        write!(out, "{:<width$}", "").unwrap();
        for l in &report.genre_labels {
            write!(out, " {l:>width$}").unwrap();
        }
        out.push('\n');
        for (label, row) in report.genre_labels.iter().zip(&e.confusion) {
            write!(out, "{label:<width$}").unwrap();
            for v in row {
                write!(out, " {v:>width$}").unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:<width$}", "elim").unwrap();
        for v in &e.eliminated_fraction {
            write!(out, " {:>width$}", format!("{v:.3}")).unwrap();
        }
        out.push('\n');
        if !e.short_clips.is_empty() {
            writeln!(out, "short clips (no full window): {}", e.short_clips.join(", ")).unwrap();
        }
        out.push('\n');
    }
    if !report.warnings.is_empty() {
        writeln!(out, "Warnings:").unwrap();
        for w in &report.warnings {
            writeln!(out, "  {w}").unwrap();
        }
    }
    out
}

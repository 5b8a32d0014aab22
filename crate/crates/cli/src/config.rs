//! Pipeline configuration: defaults, then the TOML file, then command-line flags.

use std::path::Path;

use genre_igs::dsp::DspConfig;
use genre_igs::eval::{DecisionWindowSpec, ExperimentConfig, SynthParams};
use genre_igs::igs::{ClassifierConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Run seed: fold split, EM initialization and synthetic corpora all derive from it.
    pub seed: u64,
    pub jobs: Option<usize>,
    pub strict: bool,
    pub dsp: DspConfig,
    pub variants: Vec<Variant>,
    pub mixtures: Vec<usize>,
    pub windows: Vec<DecisionWindowSpec>,
    /// `classifier.em.seed` is replaced by `seed`.
    pub classifier: ClassifierConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            strict: false,
            dsp: DspConfig::default(),
            variants: Variant::ALL.to_vec(),
            mixtures: vec![8],
            windows: DecisionWindowSpec::DEFAULTS.to_vec(),
            classifier: ClassifierConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub genres: usize,
    pub overlap: f64,
    pub clips_per_genre: usize,
    pub seconds_per_clip: f64,
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            genres: 5,
            overlap: 0.4,
            clips_per_genre: 20,
            seconds_per_clip: 10.0,
            params: SynthParams::default(),
        }
    }
}

/// Command-line values that override the file; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub strict: bool,
    pub variants: Option<Vec<Variant>>,
    pub mixtures: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub windows: Option<Vec<DecisionWindowSpec>>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if overrides.jobs.is_some() {
            config.jobs = overrides.jobs;
        }
        config.strict |= overrides.strict;
        if let Some(v) = &overrides.variants {
            config.variants = v.clone();
        }
        if let Some(m) = &overrides.mixtures {
            config.mixtures = m.clone();
        }
        if let Some(t) = overrides.iterations {
            config.classifier.iterations = t;
        }
        if let Some(w) = &overrides.windows {
            config.windows = w.clone();
        }
        config.classifier.em.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dsp.validate()?;
        self.classifier.validate()?;
        if self.variants.is_empty() || self.mixtures.is_empty() {
            return Err(CliError::Usage("at least one variant and one mixture count are required".into()));
        }
        if self.mixtures.contains(&0) {
            return Err(CliError::Usage("mixture counts must be positive".into()));
        }
        if self.variants.contains(&Variant::Iigs) && self.classifier.iterations == 0 {
            return Err(CliError::Usage("iterative IGS needs --iterations >= 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        for w in &self.windows {
            w.frames_per_window(self.dsp.hop_ms)?;
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            variants: self.variants.clone(),
            mixtures: self.mixtures.clone(),
            windows: self.windows.clone(),
            hop_ms: self.dsp.hop_ms,
            split_seed: self.seed,
            classifier: self.classifier.clone(),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

//! Short-time timbral texture features.
//!
//! Each 10 ms hop yields one 17-dimensional vector computed over a 25 ms analysis
//! window: 13 MFCCs, zero-crossing rate, spectral centroid, spectral roll-off and
//! spectral flux, in that order.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 17;
pub const N_MFCC: usize = 13;
pub const ZCR_INDEX: usize = 13;
pub const CENTROID_INDEX: usize = 14;
pub const ROLLOFF_INDEX: usize = 15;
pub const FLUX_INDEX: usize = 16;

/// Floor applied to mel filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Which 13 cepstral coefficients populate the MFCC slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MfccIndexing {
    /// Coefficients 0..=12 (c0 carries the log energy).
    #[default]
    ZeroBased,
    /// Coefficients 1..=13.
    OneBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// FFT length; `None` picks the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub n_mels: usize,
    pub rolloff_fraction: f64,
    pub log_floor: f64,
    pub mfcc_indexing: MfccIndexing,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: None,
            n_mels: 26,
            rolloff_fraction: 0.85,
            log_floor: LOG_FLOOR,
            mfcc_indexing: MfccIndexing::ZeroBased,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::Config("frame_ms and hop_ms must be positive".into()));
        }
        if !(self.rolloff_fraction > 0.0 && self.rolloff_fraction < 1.0) {
            return Err(Error::Config(format!(
                "rolloff_fraction {} outside (0, 1)",
                self.rolloff_fraction
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        let needed = match self.mfcc_indexing {
            MfccIndexing::ZeroBased => N_MFCC,
            MfccIndexing::OneBased => N_MFCC + 1,
        };
        if self.n_mels < needed {
            return Err(Error::Config(format!(
                "n_mels {} too small for {:?} MFCC indexing (need {needed})",
                self.n_mels, self.mfcc_indexing
            )));
        }
        Ok(())
    }
}

/// One timbral texture vector: `[mfcc_1..mfcc_13, zcr, centroid_hz, rolloff_hz, flux]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFeatures {
    pub values: [f64; FEATURE_DIM],
    pub frame_index: usize,
}

impl FrameFeatures {
    pub fn mfcc(&self) -> &[f64] {
        &self.values[..N_MFCC]
    }
    pub fn zcr(&self) -> f64 {
        self.values[ZCR_INDEX]
    }
    pub fn centroid_hz(&self) -> f64 {
        self.values[CENTROID_INDEX]
    }
    pub fn rolloff_hz(&self) -> f64 {
        self.values[ROLLOFF_INDEX]
    }
    pub fn flux(&self) -> f64 {
        self.values[FLUX_INDEX]
    }
}

/// Magnitude spectrum over bins `0..=fft_size/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub magnitudes: Vec<f64>,
    pub bin_hz: f64,
}

impl SpectralFrame {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn fft_size(&self) -> usize {
        2 * (self.magnitudes.len() - 1)
    }

    pub fn nyquist_hz(&self) -> f64 {
        (self.magnitudes.len() - 1) as f64 * self.bin_hz
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    fn same_layout(&self, other: &SpectralFrame) -> bool {
        self.magnitudes.len() == other.magnitudes.len() && self.bin_hz == other.bin_hz
    }
}

/// Frame length and hop in samples for a given rate.
pub fn frame_geometry(sample_rate: u32, frame_ms: f64, hop_ms: f64) -> Result<(usize, usize)> {
    let len = (frame_ms * sample_rate as f64 / 1000.0).round() as usize;
    let hop = (hop_ms * sample_rate as f64 / 1000.0).round() as usize;
    if len < 2 || hop == 0 {
        return Err(Error::Config(format!(
            "frame of {frame_ms} ms / hop of {hop_ms} ms at {sample_rate} Hz gives {len}/{hop} samples"
        )));
    }
    Ok((len, hop))
}

/// Splits a clip into overlapping analysis windows. A trailing partial window is dropped.
pub fn frame_signal(clip: &AudioClip, frame_ms: f64, hop_ms: f64) -> Result<Vec<&[f64]>> {
    let (len, hop) = frame_geometry(clip.sample_rate, frame_ms, hop_ms)?;
    if clip.samples.len() < len {
        return Err(Error::TooShort {
            samples: clip.samples.len(),
            needed: len,
        });
    }
    let count = (clip.samples.len() - len) / hop + 1;
    Ok((0..count).map(|i| &clip.samples[i * hop..i * hop + len]).collect())
}

pub fn hamming_coefficients(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

pub fn hamming_window(frame: &[f64]) -> Vec<f64> {
    assert!(frame.len() >= 2, "Hamming window needs at least 2 samples");
    frame
        .iter()
        .zip(hamming_coefficients(frame.len()))
        .map(|(x, w)| x * w)
        .collect()
}

/// FFT magnitude analysis with a fixed transform length.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(fft_size: usize) -> Result<Self> {
        if fft_size < 2 || !fft_size.is_power_of_two() {
            return Err(Error::Config(format!("fft_size {fft_size} is not a power of two >= 2")));
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            fft,
            fft_size,
            buffer: vec![Complex::default(); fft_size],
            scratch,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Zero-pads `frame` to the transform length and returns `|X_k|` for `k = 0..=N/2`.
    pub fn analyze(&mut self, frame: &[f64], sample_rate: u32) -> Result<SpectralFrame> {
        if frame.len() > self.fft_size {
            return Err(Error::Config(format!(
                "fft_size {} smaller than frame length {}",
                self.fft_size,
                frame.len()
            )));
        }
        for (slot, &x) in self.buffer.iter_mut().zip(frame) {
            *slot = Complex::new(x, 0.0);
        }
        for slot in &mut self.buffer[frame.len()..] {
            *slot = Complex::default();
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        Ok(SpectralFrame {
            magnitudes: self.buffer[..=self.fft_size / 2].iter().map(|c| c.norm()).collect(),
            bin_hz: sample_rate as f64 / self.fft_size as f64,
        })
    }
}

/// Magnitude spectrum of a (windowed) frame; squaring the magnitudes gives the power.
pub fn power_spectrum(frame: &[f64], fft_size: usize, sample_rate: u32) -> Result<SpectralFrame> {
    SpectrumAnalyzer::new(fft_size)?.analyze(frame, sample_rate)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and Nyquist.
///
/// Filter weights are evaluated at each bin's exact centre frequency rather than
/// snapped to bin edges, so no filter is empty at small FFT sizes.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_bins: usize, bin_hz: f64) -> Self {
        let nyquist = (n_bins - 1) as f64 * bin_hz;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f >= lo && f <= mid && mid > lo {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f <= hi && hi > mid {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Filter energies of the power spectrum `|X_k|^2`.
    pub fn energies(&self, spec: &SpectralFrame) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                w.iter()
                    .zip(&spec.magnitudes)
                    .map(|(w, m)| w * m * m)
                    .sum()
            })
            .collect()
    }
}

/// Orthonormal DCT-II as a precomputed basis.
#[derive(Debug, Clone)]
pub struct Dct2 {
    basis: Vec<Vec<f64>>,
}

impl Dct2 {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let n = n_in as f64;
        let basis = (0..n_out)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..n_in)
                    .map(|m| scale * (PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)).cos())
                    .collect()
            })
            .collect();
        Self { basis }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| row.iter().zip(x).map(|(b, v)| b * v).sum())
            .collect()
    }
}

/// Filterbank and DCT sized for one spectrum layout.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    filterbank: MelFilterbank,
    dct: Dct2,
    log_floor: f64,
    n_bins: usize,
    bin_hz: f64,
}

impl MfccExtractor {
    pub fn new(n_bins: usize, bin_hz: f64, n_mels: usize, n_coeffs: usize, log_floor: f64) -> Result<Self> {
        if n_coeffs > n_mels || n_mels == 0 {
            return Err(Error::Config(format!(
                "n_coeffs {n_coeffs} must not exceed n_mels {n_mels}"
            )));
        }
        Ok(Self {
            filterbank: MelFilterbank::new(n_mels, n_bins, bin_hz),
            dct: Dct2::new(n_mels, n_coeffs),
            log_floor,
            n_bins,
            bin_hz,
        })
    }

    pub fn log_mel_energies(&self, spec: &SpectralFrame) -> Vec<f64> {
        self.filterbank
            .energies(spec)
            .into_iter()
            .map(|e| e.max(self.log_floor).ln())
            .collect()
    }

    pub fn cepstrum_from_log_energies(&self, log_energies: &[f64]) -> Vec<f64> {
        self.dct.apply(log_energies)
    }

    pub fn compute(&self, spec: &SpectralFrame) -> Result<Vec<f64>> {
        if spec.n_bins() != self.n_bins || spec.bin_hz != self.bin_hz {
            return Err(Error::Config("spectrum layout differs from filterbank layout".into()));
        }
        Ok(self.cepstrum_from_log_energies(&self.log_mel_energies(spec)))
    }
}

/// Cepstral coefficients `0..n_coeffs` of one spectrum.
pub fn mfcc(spec: &SpectralFrame, n_mels: usize, n_coeffs: usize) -> Result<Vec<f64>> {
    MfccExtractor::new(spec.n_bins(), spec.bin_hz, n_mels, n_coeffs, LOG_FLOOR)?.compute(spec)
}

/// Fraction of adjacent sample pairs whose signs differ; zero counts as non-negative.
pub fn zero_crossing_rate(frame: &[f64]) -> f64 {
    assert!(frame.len() >= 2, "zero-crossing rate needs at least 2 samples");
    let changes = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    changes as f64 / (frame.len() - 1) as f64
}

pub fn spectral_centroid(spec: &SpectralFrame) -> f64 {
    let total: f64 = spec.magnitudes.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = spec
        .magnitudes
        .iter()
        .enumerate()
        .map(|(i, m)| spec.bin_frequency(i) * m)
        .sum();
    weighted / total
}

/// Frequency of the first bin whose cumulative magnitude reaches `fraction` of the total.
pub fn spectral_rolloff(spec: &SpectralFrame, fraction: f64) -> f64 {
    let total: f64 = spec.magnitudes.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let threshold = fraction * total;
    let mut cumulative = 0.0;
    for (i, m) in spec.magnitudes.iter().enumerate() {
        cumulative += m;
        if cumulative >= threshold {
            return spec.bin_frequency(i);
        }
    }
    spec.nyquist_hz()
}

fn unit_normalized(m: &[f64]) -> Vec<f64> {
    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        m.iter().map(|v| v / norm).collect()
    } else {
        vec![0.0; m.len()]
    }
}

/// Squared distance between consecutive L2-normalized magnitude spectra; 0 for the first frame.
pub fn spectral_flux(spec: &SpectralFrame, prev: Option<&SpectralFrame>) -> Result<f64> {
    let Some(prev) = prev else {
        return Ok(0.0);
    };
    if !spec.same_layout(prev) {
        return Err(Error::Config(format!(
            "spectral flux across different bin layouts ({} bins @ {} Hz vs {} bins @ {} Hz)",
            spec.n_bins(),
            spec.bin_hz,
            prev.n_bins(),
            prev.bin_hz
        )));
    }
    let a = unit_normalized(&spec.magnitudes);
    let b = unit_normalized(&prev.magnitudes);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Computes one timbral texture vector per analysis frame of `clip`.
///
/// Per frame: Hamming window, magnitude spectrum, then MFCC, centroid, roll-off and
/// flux from the spectrum. The zero-crossing rate uses the un-windowed samples.
pub fn extract_timbral_features(clip: &AudioClip, config: &DspConfig) -> Result<Vec<FrameFeatures>> {
    config.validate()?;
    let frames = frame_signal(clip, config.frame_ms, config.hop_ms)?;
    let frame_len = frames[0].len();
    let fft_size = match config.fft_size {
        Some(n) if n < frame_len => {
            return Err(Error::Config(format!(
                "fft_size {n} smaller than frame length {frame_len}"
            )))
        }
        Some(n) => n,
        None => frame_len.next_power_of_two(),
    };
    let mut analyzer = SpectrumAnalyzer::new(fft_size)?;
    let window = hamming_coefficients(frame_len);
    let bin_hz = clip.sample_rate as f64 / fft_size as f64;
    let (n_coeffs, skip) = match config.mfcc_indexing {
        MfccIndexing::ZeroBased => (N_MFCC, 0),
        MfccIndexing::OneBased => (N_MFCC + 1, 1),
    };
    let mfcc = MfccExtractor::new(fft_size / 2 + 1, bin_hz, config.n_mels, n_coeffs, config.log_floor)?;

    let mut out = Vec::with_capacity(frames.len());
    let mut prev: Option<SpectralFrame> = None;
    let mut windowed = vec![0.0; frame_len];
    for (frame_index, frame) in frames.into_iter().enumerate() {
        for ((slot, x), w) in windowed.iter_mut().zip(frame).zip(&window) {
            *slot = x * w;
        }
        let spec = analyzer.analyze(&windowed, clip.sample_rate)?;
        let mut values = [0.0; FEATURE_DIM];
        let cepstrum = mfcc.compute(&spec)?;
        values[..N_MFCC].copy_from_slice(&cepstrum[skip..skip + N_MFCC]);
        values[ZCR_INDEX] = zero_crossing_rate(frame);
        values[CENTROID_INDEX] = spectral_centroid(&spec);
        values[ROLLOFF_INDEX] = spectral_rolloff(&spec, config.rolloff_fraction);
        values[FLUX_INDEX] = spectral_flux(&spec, prev.as_ref())?;
        out.push(FrameFeatures { values, frame_index });
        prev = Some(spec);
    }
    Ok(out)
}

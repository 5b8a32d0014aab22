//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct O(N^2) DFT magnitudes for bins 0..=n/2 of `x` zero-padded to `n`.
pub fn dft_magnitudes(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Triangle filter weight for frequency `f` written straight from the mel definition.
pub fn mel_weight(m: usize, n_mels: usize, nyquist: f64, f: f64) -> f64 {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv = |mel: f64| 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
    let edge = |i: usize| inv(mel(nyquist) * i as f64 / (n_mels + 1) as f64);
    let (lo, mid, hi) = (edge(m), edge(m + 1), edge(m + 2));
    if f < lo || f > hi {
        0.0
    } else if f <= mid {
        (f - lo) / (mid - lo)
    } else {
        (hi - f) / (hi - mid)
    }
}

/// MFCCs from magnitudes via a fresh filterbank, log floor and direct DCT-II sum.
pub fn mfcc(mags: &[f64], bin_hz: f64, n_mels: usize, n_coeffs: usize, floor: f64) -> Vec<f64> {
    let nyquist = (mags.len() - 1) as f64 * bin_hz;
    let logs: Vec<f64> = (0..n_mels)
        .map(|m| {
            let e: f64 = mags
                .iter()
                .enumerate()
                .map(|(b, v)| mel_weight(m, n_mels, nyquist, b as f64 * bin_hz) * v * v)
                .sum();
            e.max(floor).ln()
        })
        .collect();
    dct2(&logs, n_coeffs)
}

pub fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI / n * (i as f64 + 0.5) * k as f64).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

pub fn zcr(x: &[f64]) -> f64 {
    let mut changes = 0;
    for i in 1..x.len() {
        let a = x[i - 1] < 0.0;
        let b = x[i] < 0.0;
        if a != b {
            changes += 1;
        }
    }
    changes as f64 / (x.len() - 1) as f64
}

pub fn centroid(mags: &[f64], bin_hz: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (b, m) in mags.iter().enumerate() {
        num += b as f64 * bin_hz * m;
        den += m;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Linear scan for the smallest bin whose prefix sum reaches `fraction` of the total.
pub fn rolloff(mags: &[f64], bin_hz: f64, fraction: f64) -> f64 {
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    for b in 0..mags.len() {
        let prefix: f64 = mags[..=b].iter().sum();
        if prefix >= fraction * total {
            return b as f64 * bin_hz;
        }
    }
    (mags.len() - 1) as f64 * bin_hz
}

pub fn flux(cur: &[f64], prev: &[f64]) -> f64 {
    let na = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = prev.iter().map(|v| v * v).sum::<f64>().sqrt();
    cur.iter()
        .zip(prev)
        .map(|(a, b)| {
            let a = if na > 0.0 { a / na } else { 0.0 };
            let b = if nb > 0.0 { b / nb } else { 0.0 };
            (a - b).powi(2)
        })
        .sum()
}

/// Log density of a diagonal GMM by direct summation of component densities.
pub fn gmm_log_density(weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..weights.len() {
        let mut d = 1.0;
        for i in 0..x.len() {
            let v = vars[c][i];
            d *= (-(x[i] - means[c][i]).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        }
        total += weights[c] * d;
    }
    total.ln()
}

pub fn normal_samples(rng: &mut impl Rng, n: usize, mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            mean.iter()
                .zip(std)
                .map(|(m, s)| m + s * gaussian(rng))
                .collect()
        })
        .collect()
}

/// Box-Muller standard normal.
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Reference weighted-mean decision: `scores[n][k]` log-likelihoods, `weights[n][k]` in {0,1}.
pub fn weighted_decision(scores: &[Vec<f64>], weights: &[Vec<u8>]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for n in 0..scores.len() {
        let kept: Vec<f64> = scores[n]
            .iter()
            .zip(&weights[n])
            .filter(|(_, w)| **w == 1)
            .map(|(s, _)| *s)
            .collect();
        let score = if kept.is_empty() {
            scores[n].iter().sum::<f64>() / scores[n].len() as f64
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        };
        if score > best_score {
            best = n;
            best_score = score;
        }
    }
    best
}

pub mod tiny {
    //! Small single-component classifiers whose decisions can be evaluated by hand.

    use genre_igs::gmm::Gmm;
    use genre_igs::igs::{ClassifierConfig, IgsClassifier, ScoreModels, Variant};
    use rand::Rng;

    /// Mean and variance per dimension of a one-component model.
    #[derive(Debug, Clone)]
    pub struct Gauss {
        pub mean: Vec<f64>,
        pub var: Vec<f64>,
    }

    impl Gauss {
        pub fn random(rng: &mut impl Rng, dim: usize) -> Self {
            Self {
                mean: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                var: (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
            }
        }

        pub fn log_pdf(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.mean)
                .zip(&self.var)
                .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
                .sum()
        }

        pub fn model(&self) -> Gmm {
            Gmm::new(vec![1.0], vec![self.mean.clone()], vec![self.var.clone()], None).unwrap()
        }
    }

    pub struct Instance {
        pub genres: Vec<Gauss>,
        pub igs: Vec<Gauss>,
        /// Per genre `(correct, confused)` score models over `(d1, d2, d3)`.
        pub score: Vec<(Gauss, Gauss)>,
        pub frames: Vec<Vec<f64>>,
    }

    impl Instance {
        pub fn random(rng: &mut impl Rng, variant: Variant) -> Self {
            let n = rng.random_range(2..=3);
            let k = rng.random_range(1..=5);
            let t = match variant {
                Variant::Flat => 0,
                Variant::Igs | Variant::Smigs => 1,
                Variant::Iigs => rng.random_range(1..=3),
            };
            let genres = (0..n).map(|_| Gauss::random(rng, 1)).collect();
            let igs = (0..t).map(|_| Gauss::random(rng, 1)).collect();
            let score = if variant == Variant::Smigs {
                (0..n)
                    .map(|_| {
                        let mut a = Gauss::random(rng, 3);
                        let mut b = Gauss::random(rng, 3);
                        a.mean.iter_mut().for_each(|m| *m *= 2.0);
                        b.mean.iter_mut().for_each(|m| *m *= 2.0);
                        (a, b)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let frames = (0..k).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
            Self { genres, igs, score, frames }
        }

        pub fn classifier(&self, variant: Variant) -> IgsClassifier {
            IgsClassifier {
                variant,
                genre_labels: (0..self.genres.len()).map(|i| format!("g{i}")).collect(),
                genre_models: self.genres.iter().map(Gauss::model).collect(),
                igs_models: self.igs.iter().map(Gauss::model).collect(),
                score_models: self
                    .score
                    .iter()
                    .map(|(a, b)| Some(ScoreModels { correct: a.model(), confused: b.model() }))
                    .collect(),
                flags: Vec::new(),
                config: ClassifierConfig { iterations: self.igs.len().max(1), ..Default::default() },
                provenance: None,
            }
        }

        /// Weights written directly from the elimination rules.
        pub fn weights(&self, variant: Variant) -> Vec<Vec<u8>> {
            let n = self.genres.len();
            (0..n)
                .map(|g| {
                    self.frames
                        .iter()
                        .map(|f| {
                            let own = self.genres[g].log_pdf(f);
                            let keep = match variant {
                                Variant::Flat => true,
                                Variant::Igs | Variant::Iigs => self.igs.iter().all(|m| own > m.log_pdf(f)),
                                Variant::Smigs => {
                                    let mut other = f64::NEG_INFINITY;
                                    for m in 0..n {
                                        if m != g {
                                            other = other.max(self.genres[m].log_pdf(f));
                                        }
                                    }
                                    let igs = self.igs[0].log_pdf(f);
                                    let s = [own - other, own - igs, other - igs];
                                    self.score[g].0.log_pdf(&s) > self.score[g].1.log_pdf(&s)
                                }
                            };
                            u8::from(keep)
                        })
                        .collect()
                })
                .collect()
        }

        pub fn scores(&self) -> Vec<Vec<f64>> {
            self.genres
                .iter()
                .map(|g| self.frames.iter().map(|f| g.log_pdf(f)).collect())
                .collect()
        }
    }
}

//! Audio decoding, the labeled clip manifest, and the two-fold corpus split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MIN_SAMPLE_RATE: u32 = 8000;

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(sample_rate: u32, samples: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::UnsupportedFormat {
                field: "sample_rate",
                value: sample_rate.to_string(),
            });
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            sample_rate,
            samples,
            source_id: source_id.into(),
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Decodes a RIFF/WAVE container holding 16-bit mono PCM.
///
/// Integer samples are mapped to `[-1, 1]` by dividing by 32768. Chunks other than
/// `fmt ` and `data` are skipped. The returned clip has an empty `source_id`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(Error::Decode("missing RIFF magic".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Decode("missing WAVE form type".into()));
    }

    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::Decode(format!(
                    "chunk '{}' declares {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Decode(format!("fmt chunk too short ({} bytes)", body.len())));
                }
                format = Some((
                    read_u16(body, 0),
                    read_u16(body, 2),
                    read_u32(body, 4),
                    read_u16(body, 14),
                ));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format_tag, channels, sample_rate, bits) =
        format.ok_or_else(|| Error::Decode("missing fmt chunk".into()))?;
    if format_tag != 1 {
        return Err(Error::UnsupportedFormat {
            field: "format_tag",
            value: format_tag.to_string(),
        });
    }
    if channels != 1 {
        return Err(Error::UnsupportedFormat {
            field: "channels",
            value: channels.to_string(),
        });
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat {
            field: "bits_per_sample",
            value: bits.to_string(),
        });
    }
    if sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::UnsupportedFormat {
            field: "sample_rate",
            value: sample_rate.to_string(),
        });
    }
    let data = data.ok_or_else(|| Error::Decode("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(Error::Decode(format!("odd data chunk length {}", data.len())));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioClip {
        sample_rate,
        samples,
        source_id: String::new(),
    })
}

/// Reads and decodes a WAV file; the clip's `source_id` is the path as given.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut clip = decode_wav(&bytes)?;
    clip.source_id = path.display().to_string();
    Ok(clip)
}

/// Encodes 16-bit mono PCM samples as a canonical 44-byte-header WAV file.
pub fn encode_wav(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Quantizes an amplitude in [-1, 1] back to a 16-bit sample.
pub fn quantize(amplitude: f64) -> i16 {
    (amplitude * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Fold {
    A,
    B,
}

impl Fold {
    pub fn other(self) -> Fold {
        match self {
            Fold::A => Fold::B,
            Fold::B => Fold::A,
        }
    }
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fold::A => "A",
            Fold::B => "B",
        })
    }
}

impl FromStr for Fold {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "A" => Ok(Fold::A),
            "B" => Ok(Fold::B),
            other => Err(format!("fold letter '{other}' is not A or B")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_path: String,
    pub genre: String,
    pub fold: Option<Fold>,
}

/// Labeled clip inventory. `genre_set` lists labels in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub genre_set: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest from entries, rejecting duplicate clip paths.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut genre_set: Vec<String> = Vec::new();
        for e in &entries {
            if !seen.insert(e.clip_path.as_str()) {
                return Err(Error::DuplicateEntry(e.clip_path.clone()));
            }
            if !genre_set.contains(&e.genre) {
                genre_set.push(e.genre.clone());
            }
        }
        Ok(Self { entries, genre_set })
    }

    pub fn genre_index(&self, genre: &str) -> Option<usize> {
        self.genre_set.iter().position(|g| g == genre)
    }

    pub fn is_fully_assigned(&self) -> bool {
        self.entries.iter().all(|e| e.fold.is_some())
    }

    pub fn fold_entries(&self, fold: Fold) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.fold == Some(fold))
    }

    /// Renders the manifest in the tab-separated text format read by [`load_manifest`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.clip_path);
            out.push('\t');
            out.push_str(&e.genre);
            if let Some(fold) = e.fold {
                out.push('\t');
                out.push_str(&fold.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Parses `clip_path<TAB>genre[<TAB>fold]` records, one per line.
///
/// Blank lines and lines starting with `#` are ignored.
pub fn load_manifest(text: &str) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::ManifestFormat {
                line: line_no,
                message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::ManifestFormat {
                line: line_no,
                message: "empty clip path or genre label".into(),
            });
        }
        let fold = match fields.get(2) {
            None | Some(&"") => None,
            Some(letter) => Some(letter.parse::<Fold>().map_err(|message| Error::ManifestFormat {
                line: line_no,
                message,
            })?),
        };
        entries.push(ManifestEntry {
            clip_path: fields[0].to_string(),
            genre: fields[1].to_string(),
            fold,
        });
    }
    DatasetManifest::from_entries(entries)
}

/// Assigns every entry to fold A or B so that each genre is halved.
///
/// Within a genre, entries are sorted by clip path, shuffled with a generator seeded
/// from `seed`, then assigned alternately A, B, A, ... Genres are visited in sorted
/// label order, so the result does not depend on manifest line order.
pub fn split_two_fold(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let mut by_genre: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_genre.entry(e.genre.as_str()).or_default().push(i);
    }
    let mut out = manifest.clone();
    let mut rng = rng::seeded(seed);
    for (genre, mut idx) in by_genre {
        if idx.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "genre '{genre}' has {} clip(s), need at least 2 for a two-fold split",
                idx.len()
            )));
        }
        idx.sort_by(|&a, &b| manifest.entries[a].clip_path.cmp(&manifest.entries[b].clip_path));
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            out.entries[i].fold = Some(if pos % 2 == 0 { Fold::A } else { Fold::B });
        }
    }
    Ok(out)
}

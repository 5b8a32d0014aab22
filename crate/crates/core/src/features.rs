//! Text dump format for per-clip feature sequences.
//!
//! ```text
//! #clip <source_id> <n_frames> <dim>
//! v_1<TAB>v_2<TAB>...<TAB>v_dim
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a dump
//! parses back to bit-identical values.

use std::fmt::Write as _;

use crate::dsp::FrameFeatures;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub source_id: String,
    pub frames: Vec<Vec<f64>>,
}

impl ClipFeatures {
    pub fn from_frame_features(source_id: impl Into<String>, frames: &[FrameFeatures]) -> Self {
        Self {
            source_id: source_id.into(),
            frames: frames.iter().map(|f| f.values.to_vec()).collect(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.frames.first().map(Vec::len)
    }
}

pub fn render_dump(clip: &ClipFeatures) -> String {
    let dim = clip.dim().unwrap_or(crate::dsp::FEATURE_DIM);
    let mut out = String::new();
    writeln!(out, "#clip {} {} {}", clip.source_id, clip.frames.len(), dim).unwrap();
    for frame in &clip.frames {
        for (i, v) in frame.iter().enumerate() {
            if i > 0 {
                out.push('\t');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses one or more `#clip` blocks.
pub fn parse_dump(text: &str) -> Result<Vec<ClipFeatures>> {
    let err = |line: usize, msg: String| Error::FeatureDump(format!("line {line}: {msg}"));
    let mut clips = Vec::new();
    let mut current: Option<(ClipFeatures, usize, usize)> = None;

    let finish = |c: Option<(ClipFeatures, usize, usize)>, clips: &mut Vec<ClipFeatures>| -> Result<()> {
        if let Some((clip, expected, _)) = c {
            if clip.frames.len() != expected {
                return Err(Error::FeatureDump(format!(
                    "clip '{}' declares {expected} frames but has {}",
                    clip.source_id,
                    clip.frames.len()
                )));
            }
            clips.push(clip);
        }
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix("#clip ") {
            finish(current.take(), &mut clips)?;
            // source ids may contain spaces; the two counts are the last fields
            let mut parts = header.rsplitn(3, ' ');
            let dim = parts.next().and_then(|s| s.parse::<usize>().ok());
            let n_frames = parts.next().and_then(|s| s.parse::<usize>().ok());
            let id = parts.next();
            match (id, n_frames, dim) {
                (Some(id), Some(n), Some(d)) if d > 0 => {
                    current = Some((
                        ClipFeatures {
                            source_id: id.to_string(),
                            frames: Vec::with_capacity(n),
                        },
                        n,
                        d,
                    ));
                }
                _ => return Err(err(line_no, format!("malformed header '{line}'"))),
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let Some((clip, _, dim)) = current.as_mut() else {
            return Err(err(line_no, "frame values before any #clip header".into()));
        };
        let values = line
            .split('\t')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| err(line_no, e.to_string()))?;
        if values.len() != *dim {
            return Err(err(line_no, format!("expected {dim} values, found {}", values.len())));
        }
        clip.frames.push(values);
    }
    finish(current, &mut clips)?;
    Ok(clips)
}

/// File name under which a manifest clip's features are stored.
pub fn dump_file_name(clip_path: &str) -> String {
    let flat: String = clip_path
        .chars()
        .map(|c| match c {
            '/' | '\\' | ':' => '_',
            c => c,
        })
        .collect();
    format!("{flat}.feat")
}

use serde::{Deserialize, Serialize};

use super::ManifestEntry;
use crate::audio::AudioClip;
use crate::error::{KwsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipVariant {
    /// Word samples centered in silence.
    Silence,
    /// One second of the surrounding recording centered on the word.
    Context,
}

/// One-second training clip with the keyword centered.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordClip {
    pub audio: AudioClip,
    pub label: String,
    pub variant: ClipVariant,
}

/// Clip length in samples at `rate`.
pub fn clip_samples(rate: u32) -> usize {
    rate as usize
}

/// Cuts the word described by `entry` out of `source`.
pub fn extract_clip(source: &AudioClip, entry: &ManifestEntry, variant: ClipVariant) -> Result<KeywordClip> {
    let rate = source.sample_rate as f64;
    if entry.duration() > super::MAX_WORD_SECONDS {
        return Err(KwsError::OutOfRange {
            what: "word duration",
            value: entry.duration(),
            min: 0.0,
            max: super::MAX_WORD_SECONDS,
        });
    }
    let start = (entry.start * rate).round() as i64;
    let end = (entry.end * rate).round() as i64;
    if entry.start < 0.0 || end > source.len() as i64 || end <= start {
        return Err(KwsError::invalid(format!(
            "word interval [{}, {}] outside {:.3} s of audio",
            entry.start,
            entry.end,
            source.duration()
        )));
    }
    let len = clip_samples(source.sample_rate);
    let mut out = vec![0.0f32; len];
    match variant {
        ClipVariant::Silence => {
            let n = ((end - start) as usize).min(len);
            let offset = (len - n) / 2;
            out[offset..offset + n].copy_from_slice(&source.samples[start as usize..start as usize + n]);
        }
        ClipVariant::Context => {
            let first = ((entry.midpoint() - 0.5) * rate).round() as i64;
            for (i, o) in out.iter_mut().enumerate() {
                let src = first + i as i64;
                if src >= 0 && (src as usize) < source.len() {
                    *o = source.samples[src as usize];
                }
            }
        }
    }
    Ok(KeywordClip {
        audio: AudioClip {
            samples: out,
            sample_rate: source.sample_rate,
        },
        label: entry.word.clone(),
        variant,
    })
}

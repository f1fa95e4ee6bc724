use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};

/// Longest word kept at ingest, in seconds.
pub const MAX_WORD_SECONDS: f64 = 1.0;
/// Words must have strictly more characters than this.
pub const MIN_WORD_CHARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One aligned word occurrence inside a source recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_path: PathBuf,
    pub word: String,
    pub language: String,
    /// Word start in seconds within the source audio.
    pub start: f64,
    pub end: f64,
    pub speaker: String,
    pub split: Split,
}

impl ManifestEntry {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Length and character filters applied at ingest.
    pub fn passes_filter(&self) -> bool {
        self.word.chars().count() > MIN_WORD_CHARS && self.duration() <= MAX_WORD_SECONDS
    }
}

/// Entries kept after filtering plus the number dropped by the filters.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub filtered: usize,
}

impl Manifest {
    /// Parses line-delimited JSON records. Blank lines are skipped; audio
    /// paths are resolved relative to `base` when given.
    pub fn parse(text: &str, origin: &str, base: Option<&Path>) -> Result<Self> {
        let mut out = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| KwsError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let mut e: ManifestEntry = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if !(e.start.is_finite() && e.end.is_finite()) || e.start < 0.0 || e.end <= e.start {
                return Err(err(format!("invalid word interval [{}, {}]", e.start, e.end)));
            }
            if e.word.trim().is_empty() {
                return Err(err("empty word".into()));
            }
            e.word = e.word.trim().to_lowercase();
            if let Some(b) = base {
                if e.audio_path.is_relative() {
                    e.audio_path = b.join(&e.audio_path);
                }
            }
            if e.passes_filter() {
                out.entries.push(e);
            } else {
                out.filtered += 1;
            }
        }
        Ok(out)
    }

    /// Reads a manifest file; relative audio paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    pub fn to_jsonl(entries: &[ManifestEntry]) -> Result<String> {
        let mut s = String::new();
        for e in entries {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Sorted distinct words.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.entries.iter().map(|e| e.word.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"audio_path":"a.wav","word":"Hello","language":"en","start":1.0,"end":1.5,"speaker":"s1","split":"train"}"#;

    #[test]
    fn parses_and_normalizes() {
        let m = Manifest::parse(LINE, "m.jsonl", Some(Path::new("/data"))).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].word, "hello");
        assert_eq!(m.entries[0].audio_path, PathBuf::from("/data/a.wav"));
    }

    #[test]
    fn filters_short_and_long_words() {
        let short = LINE.replace("Hello", "the");
        let long = LINE.replace("\"end\":1.5", "\"end\":2.2");
        let text = format!("{LINE}\n\n{short}\n{long}\n");
        let m = Manifest::parse(&text, "m.jsonl", None).unwrap();
        assert_eq!((m.entries.len(), m.filtered), (1, 2));
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = format!("{LINE}\n{{not json\n");
        let err = Manifest::parse(&text, "m.jsonl", None).unwrap_err();
        assert!(err.to_string().starts_with("m.jsonl:2:"), "{err}");
        let bad = LINE.replace("\"end\":1.5", "\"end\":0.5");
        assert!(Manifest::parse(&bad, "m.jsonl", None).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let m = Manifest::parse(LINE, "m.jsonl", None).unwrap();
        let s = Manifest::to_jsonl(&m.entries).unwrap();
        assert_eq!(Manifest::parse(&s, "x", None).unwrap().entries, m.entries);
    }
}

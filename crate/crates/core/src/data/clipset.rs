use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClipVariant, KeywordClip, Split};
use crate::audio::read_wav;
use crate::error::{KwsError, Result};

/// Index file name inside a prepared clip directory.
pub const CLIP_INDEX: &str = "clips.jsonl";

/// One prepared 1 s clip; `path` is relative to the clip directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub path: String,
    pub word: String,
    pub language: String,
    pub speaker: String,
    pub split: Split,
    pub variant: ClipVariant,
}

/// A directory of prepared clips with its JSONL index.
#[derive(Debug, Clone)]
pub struct ClipSet {
    pub root: PathBuf,
    pub records: Vec<ClipRecord>,
}

impl ClipSet {
    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let origin = root.join(CLIP_INDEX).display().to_string();
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ClipRecord = serde_json::from_str(line).map_err(|e| KwsError::Parse {
                path: origin.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(Self {
            root: root.to_path_buf(),
            records,
        })
    }

    pub fn load(root: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(&root.join(CLIP_INDEX))?, root)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Writes the index atomically; clip files must already exist.
    pub fn save_index(&self) -> Result<()> {
        crate::io::write_atomic(&self.root.join(CLIP_INDEX), self.to_jsonl()?.as_bytes())
    }

    /// Records in `split` (all when `None`), in index order.
    pub fn select(&self, split: Option<Split>) -> Vec<&ClipRecord> {
        self.records.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect()
    }

    /// Sorted distinct words.
    pub fn words(&self) -> Vec<String> {
        let mut w: Vec<String> = self.records.iter().map(|r| r.word.clone()).collect();
        w.sort();
        w.dedup();
        w
    }

    /// Reads the audio of `records`, labeled by word.
    pub fn read(&self, records: &[&ClipRecord]) -> Result<Vec<KeywordClip>> {
        records
            .par_iter()
            .map(|r| {
                Ok(KeywordClip {
                    audio: read_wav(&self.root.join(&r.path))?,
                    label: r.word.clone(),
                    variant: r.variant,
                })
            })
            .collect()
    }

    /// Record indices grouped by word, in index order.
    pub fn by_word(&self, split: Option<Split>) -> BTreeMap<String, Vec<usize>> {
        let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if split.is_none_or(|s| r.split == s) {
                m.entry(r.word.clone()).or_default().push(i);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_and_errors() {
        let root = Path::new("/tmp/x");
        let text = r#"{"path":"a.wav","word":"hello","language":"en","speaker":"s1","split":"train","variant":"silence"}
{"path":"b.wav","word":"world","language":"en","speaker":"s2","split":"val","variant":"context"}
"#;
        let set = ClipSet::parse(text, root).unwrap();
        assert_eq!(set.to_jsonl().unwrap(), text);
        assert_eq!(set.select(Some(Split::Val)).len(), 1);
        assert_eq!(set.words(), vec!["hello", "world"]);
        assert_eq!(set.by_word(Some(Split::Train))["hello"], vec![0]);
        let err = ClipSet::parse("\n{bad", root).unwrap_err();
        assert!(err.to_string().contains("clips.jsonl:2:"), "{err}");
    }
}

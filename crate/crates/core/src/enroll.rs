//! Keyword profiles built from example embeddings or phoneme sequences.

use std::path::Path;

use crate::autodiff::{Archive, Tensor};
use crate::error::{KwsError, Result};
use crate::model::{Embedding, P2EModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    Audio,
    Phoneme,
}

impl ProfileSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Audio => "audio",
            Self::Phoneme => "phoneme",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordProfile {
    pub keyword: String,
    /// Unit-length mean direction.
    pub embedding: Embedding,
    pub n_examples: usize,
    pub source: ProfileSource,
}

/// Mean of the L2-normalized examples, normalized again.
pub fn enroll(keyword: &str, examples: &[Embedding]) -> Result<KeywordProfile> {
    let first = examples
        .first()
        .ok_or_else(|| KwsError::InsufficientData(format!("no enrollment examples for `{keyword}`")))?;
    let d = first.dim();
    let mut mean = vec![0.0; d];
    for e in examples {
        if e.dim() != d {
            return Err(KwsError::shape("enroll", d, e.dim()));
        }
        for (m, v) in mean.iter_mut().zip(e.normalized()?.values()) {
            *m += v;
        }
    }
    Ok(KeywordProfile {
        keyword: keyword.to_string(),
        embedding: Embedding::new(mean)?.normalized()?,
        n_examples: examples.len(),
        source: ProfileSource::Audio,
    })
}

pub fn enroll_from_phonemes(keyword: &str, phonemes: &[usize], p2e: &P2EModel) -> Result<KeywordProfile> {
    Ok(KeywordProfile {
        keyword: keyword.to_string(),
        embedding: p2e.embed(phonemes)?.normalized()?,
        n_examples: 0,
        source: ProfileSource::Phoneme,
    })
}

/// Cosine similarity between the profile and a test embedding.
pub fn score(profile: &KeywordProfile, test: &Embedding) -> Result<f64> {
    profile.embedding.cosine(test)
}

/// Decision rule: strictly above the threshold.
pub fn accepts(similarity: f64, threshold: f64) -> bool {
    similarity > threshold
}

/// Ordered collection of profiles, persisted as a tensor archive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileStore {
    profiles: Vec<KeywordProfile>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the profile for its keyword.
    pub fn insert(&mut self, profile: KeywordProfile) {
        match self.profiles.iter_mut().find(|p| p.keyword == profile.keyword) {
            Some(slot) => *slot = profile,
            None => self.profiles.push(profile),
        }
    }

    pub fn get(&self, keyword: &str) -> Option<&KeywordProfile> {
        self.profiles.iter().find(|p| p.keyword == keyword)
    }

    pub fn profiles(&self) -> &[KeywordProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new();
        for p in &self.profiles {
            let e = p.embedding.values();
            a.push(format!("profile.{}.embedding", p.keyword), Tensor::new(vec![e.len()], e.to_vec())?)?;
            let source = match p.source {
                ProfileSource::Audio => 0.0,
                ProfileSource::Phoneme => 1.0,
            };
            a.push(format!("profile.{}.source", p.keyword), Tensor::scalar(source))?;
            a.push(format!("profile.{}.n_examples", p.keyword), Tensor::scalar(p.n_examples as f64))?;
        }
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let mut store = Self::new();
        for (name, t) in a.entries() {
            let Some(keyword) = name.strip_prefix("profile.").and_then(|r| r.strip_suffix(".embedding")) else {
                continue;
            };
            let source = match a.require(&format!("profile.{keyword}.source"))?.item()? {
                s if s == 0.0 => ProfileSource::Audio,
                s if s == 1.0 => ProfileSource::Phoneme,
                s => return Err(KwsError::Checkpoint(format!("unknown profile source {s}"))),
            };
            let n = a.require(&format!("profile.{keyword}.n_examples"))?.item()? as usize;
            store.insert(KeywordProfile {
                keyword: keyword.to_string(),
                // stored values are single precision; renormalize
                embedding: Embedding::new(t.data().to_vec())?.normalized()?,
                n_examples: n,
                source,
            });
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::audio::{FeatureMap, Frontend};
use crate::data::{augment, AugmentAssets, AugmentPolicy, KeywordClip};
use crate::error::{KwsError, Result};
use crate::eval::LabeledEmbedding;
use crate::model::{Embedding, EmbeddingModel};

/// Labeled one-second clips; labels index the sorted class names.
#[derive(Debug, Clone, Default)]
pub struct ClipDataset {
    pub clips: Vec<KeywordClip>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl ClipDataset {
    pub fn from_clips(clips: Vec<KeywordClip>) -> Self {
        let mut classes: Vec<String> = clips.iter().map(|c| c.label.clone()).collect();
        classes.sort();
        classes.dedup();
        Self::with_classes(clips, classes).expect("classes cover every clip")
    }

    /// Uses a fixed class list so train and validation share label ids.
    pub fn with_classes(clips: Vec<KeywordClip>, classes: Vec<String>) -> Result<Self> {
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let labels = clips
            .iter()
            .map(|c| {
                index
                    .get(c.label.as_str())
                    .copied()
                    .ok_or_else(|| KwsError::invalid(format!("label `{}` not in class list", c.label)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { clips, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Augmentation policy with its loaded assets.
#[derive(Debug, Clone, Default)]
pub struct Augmenter {
    pub policy: AugmentPolicy,
    pub assets: AugmentAssets,
}

impl Augmenter {
    pub fn new(policy: AugmentPolicy) -> Result<Self> {
        policy.validate()?;
        let assets = AugmentAssets::load(&policy)?;
        Ok(Self { policy, assets })
    }

    pub fn apply(&self, clip: &KeywordClip, seed: u64) -> Result<KeywordClip> {
        Ok(augment(clip, &self.policy, &self.assets, seed)?.clip)
    }
}

/// SplitMix64 finalizer over a tuple of stream coordinates.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Features for `indices`, each optionally augmented with its own seed.
/// Order follows `indices`, so results do not depend on thread count.
pub fn batch_features(
    ds: &ClipDataset,
    indices: &[usize],
    augmenter: Option<&Augmenter>,
    frontend: &Frontend,
    seed: u64,
) -> Result<Vec<FeatureMap>> {
    indices
        .par_iter()
        .enumerate()
        .map(|(pos, &i)| {
            let clip = &ds.clips[i];
            match augmenter {
                Some(a) => frontend.compute(&a.apply(clip, mix_seed(seed, pos as u64, i as u64))?.audio),
                None => frontend.compute(&clip.audio),
            }
        })
        .collect()
}

/// Inference embeddings in chunks of `chunk` feature maps.
pub fn embed_all(model: &EmbeddingModel, feats: &[FeatureMap], chunk: usize) -> Result<Vec<Embedding>> {
    let chunks: Vec<&[FeatureMap]> = feats.chunks(chunk.max(1)).collect();
    let parts: Vec<Vec<Embedding>> = chunks
        .par_iter()
        .map(|c| model.embed(&c.iter().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn labeled_embeddings(ds: &ClipDataset, embeddings: Vec<Embedding>, language: &str) -> Vec<LabeledEmbedding> {
    embeddings
        .into_iter()
        .zip(&ds.labels)
        .map(|(e, &l)| LabeledEmbedding {
            word: ds.classes[l].clone(),
            language: language.to_string(),
            embedding: e,
        })
        .collect()
}

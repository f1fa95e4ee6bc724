//! Manifest ingestion, clip extraction, augmentation, samplers and a
//! synthetic toy corpus.

mod augment;
mod clips;
mod clipset;
mod manifest;
mod sampler;
pub mod synth;
pub mod toy;

pub use augment::{augment, fit_length, AugmentAssets, AugmentCategory, AugmentOutcome, AugmentPolicy, CategoryWeights};
pub use clipset::{ClipRecord, ClipSet, CLIP_INDEX};
pub use clips::{clip_samples, extract_clip, ClipVariant, KeywordClip};
pub use manifest::{Manifest, ManifestEntry, Split, MAX_WORD_SECONDS, MIN_WORD_CHARS};
pub use sampler::{balanced_batches, pk_batches, BALANCED_BATCH_SIZE, PK_K, PK_P};

//! Classification pre-training, circle-loss fine-tuning, P2E regression
//! and the 3-class fine-tuning baseline.

mod baseline;
mod config;
mod dataset;
mod embedding;
mod p2e;
mod report;

pub use baseline::{
    baseline_scores, build_baseline_set, finetune_baseline3, BaselineSet, BACKGROUND, BASELINE_COUNTS, TARGET, UNKNOWN,
};
pub use config::{lr_schedule, TrainConfig};
pub use dataset::{batch_features, embed_all, labeled_embeddings, mix_seed, Augmenter, ClipDataset};
pub use embedding::{
    classification_accuracy, finetune_circle, finetune_circle_current, train_classifier, validation_eer, TrainData,
    CIRCLE_TRAINABLE,
};
pub use p2e::{evaluate_p2e, train_p2e, P2EEval, P2EPair};
pub use report::{EpochRecord, TrainReport};

#[cfg(test)]
mod tests;

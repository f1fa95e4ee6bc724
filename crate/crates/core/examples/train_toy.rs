//! Classification pre-training followed by circle-loss fine-tuning on the
//! synthetic toy corpus, with 5-shot enrollment EER after each stage.
//!
//! cargo run --release --example train_toy -- [words] [epochs] [circle_epochs] [out.kwsm]

use std::path::Path;

use qbe_kws::audio::{Frontend, FrontendConfig, SAMPLE_RATE};
use qbe_kws::data::toy::{toy_corpus, ToyVocabulary};
use qbe_kws::data::AugmentPolicy;
use qbe_kws::model::{save_embedding_model, ClassifierHead, EmbeddingModel, EmbeddingModelSpec};
use qbe_kws::train::{
    batch_features, finetune_circle, train_classifier, validation_eer, Augmenter, ClipDataset, TrainConfig, TrainData,
};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> qbe_kws::Result<()> {
    let words: usize = arg(1, 20);
    let epochs: usize = arg(2, 8);
    let circle_epochs: usize = arg(3, 5);

    let vocab = ToyVocabulary::generate(words, 4, 7)?;
    let (train, val) = toy_corpus(&vocab, 100, 25, SAMPLE_RATE, 1);
    let train = ClipDataset::from_clips(train);
    let val = ClipDataset::with_classes(val, train.classes.clone())?;
    let augmenter = Augmenter::new(AugmentPolicy::default())?;
    let data = TrainData {
        train: &train,
        val: Some(&val),
        augmenter: Some(&augmenter),
    };

    let spec = EmbeddingModelSpec {
        channels: [8, 8, 16, 32, 64],
        blocks: [1, 1, 1, 1],
        embedding_dim: 128,
        n_mels: 40,
    };
    let mut model = EmbeddingModel::new(spec, 1)?;
    let mut head = ClassifierHead::new(128, words, 2)?;
    println!("{} train / {} held-out clips, {} weights", train.len(), val.len(), model.parameter_count());

    let mut cfg = TrainConfig::classification();
    cfg.epochs = epochs;
    cfg.anneal_start = epochs / 2;
    cfg.batch_size = 32;
    cfg.progress = true;
    train_classifier(&mut model, &mut head, &data, &cfg)?;

    let frontend = Frontend::new(FrontendConfig::default())?;
    let val_feats = batch_features(&val, &(0..val.len()).collect::<Vec<_>>(), None, &frontend, 0)?;
    let before = validation_eer(&model, &val, &val_feats, 5, 0)?.unwrap_or(f64::NAN);

    let mut circle = TrainConfig::circle();
    circle.epochs = circle_epochs;
    circle.anneal_start = 1;
    circle.pk_p = 16;
    circle.pk_k = 5;
    circle.progress = true;
    finetune_circle(&mut model, &data, &circle)?;
    let after = validation_eer(&model, &val, &val_feats, 5, 0)?.unwrap_or(f64::NAN);
    println!("5-shot EER: classifier {before:.4}, after circle loss {after:.4}");

    if let Some(out) = std::env::args().nth(4) {
        save_embedding_model(Path::new(&out), &model, None)?;
        println!("saved {out}");
    }
    Ok(())
}

use super::*;
use crate::audio::AudioClip;
use crate::data::toy::{toy_clip, ToyVocabulary};
use crate::data::AugmentPolicy;
use crate::error::KwsError;
use crate::model::{ClassifierHead, Embedding, EmbeddingModel, EmbeddingModelSpec, P2EModel, P2ESpec};

fn tiny_spec() -> EmbeddingModelSpec {
    EmbeddingModelSpec {
        channels: [4, 4, 4, 4, 8],
        blocks: [1, 1, 1, 1],
        embedding_dim: 8,
        n_mels: 40,
    }
}

fn tiny_dataset(words: usize, per_word: u64) -> ClipDataset {
    let vocab = ToyVocabulary::generate(words, 4, 11).unwrap();
    let clips = vocab
        .words
        .iter()
        .enumerate()
        .flat_map(|(wi, w)| (0..per_word).map(move |k| toy_clip(w, 16000, 100 * k + wi as u64)))
        .collect();
    ClipDataset::from_clips(clips)
}

fn quick(mut cfg: TrainConfig, epochs: usize) -> TrainConfig {
    cfg.epochs = epochs;
    cfg.anneal_start = epochs.min(cfg.anneal_start);
    cfg
}

#[test]
fn zero_epochs_is_rejected() {
    let ds = tiny_dataset(2, 2);
    let mut model = EmbeddingModel::new(tiny_spec(), 0).unwrap();
    let mut head = ClassifierHead::new(8, 2, 0).unwrap();
    let data = TrainData { train: &ds, val: None, augmenter: None };
    let mut cfg = TrainConfig::classification();
    cfg.epochs = 0;
    assert!(train_classifier(&mut model, &mut head, &data, &cfg).is_err());
}

#[test]
fn head_size_must_match_classes() {
    let ds = tiny_dataset(2, 2);
    let mut model = EmbeddingModel::new(tiny_spec(), 0).unwrap();
    let mut head = ClassifierHead::new(8, 3, 0).unwrap();
    let data = TrainData { train: &ds, val: None, augmenter: None };
    let cfg = quick(TrainConfig::classification(), 1);
    assert!(matches!(train_classifier(&mut model, &mut head, &data, &cfg), Err(KwsError::Shape { .. })));
}

#[test]
fn classifier_training_is_deterministic() {
    let ds = tiny_dataset(3, 4);
    let aug = Augmenter::new(AugmentPolicy::default()).unwrap();
    let data = TrainData { train: &ds, val: Some(&ds), augmenter: Some(&aug) };
    let mut cfg = quick(TrainConfig::classification(), 2);
    cfg.batch_size = 6;
    let run = || {
        let mut model = EmbeddingModel::new(tiny_spec(), 5).unwrap();
        let mut head = ClassifierHead::new(8, 3, 6).unwrap();
        let report = train_classifier(&mut model, &mut head, &data, &cfg).unwrap();
        (model, head, report.to_jsonl().unwrap())
    };
    let (m1, h1, r1) = run();
    let (m2, h2, r2) = run();
    assert_eq!(m1, m2);
    assert_eq!(h1, h2);
    assert_eq!(r1, r2);
    assert_ne!(m1, EmbeddingModel::new(tiny_spec(), 5).unwrap());
}

#[test]
fn circle_keeps_frozen_stages_identical() {
    let ds = tiny_dataset(4, 3);
    let mut model = EmbeddingModel::new(tiny_spec(), 1).unwrap();
    let before: Vec<u64> = ["conv1.", "conv2.", "conv3.", "conv4."].iter().map(|p| model.params().checksum(p)).collect();
    let (c5, fc) = (model.params().checksum("conv5."), model.params().checksum("fc."));
    let data = TrainData { train: &ds, val: None, augmenter: None };
    let mut cfg = quick(TrainConfig::circle(), 2);
    cfg.pk_p = 3;
    cfg.pk_k = 4;
    let report = finetune_circle(&mut model, &data, &cfg).unwrap();
    let after: Vec<u64> = ["conv1.", "conv2.", "conv3.", "conv4."].iter().map(|p| model.params().checksum(p)).collect();
    assert_eq!(before, after);
    assert_ne!(c5, model.params().checksum("conv5."));
    assert_ne!(fc, model.params().checksum("fc."));
    assert_eq!(model.trainable_stages(), vec!["conv5", "fc"]);
    assert_eq!(report.config.gamma, 80.0);
    assert_eq!(report.config.margin, 0.4);
    let json = report.to_jsonl().unwrap();
    assert!(json.contains("\"gamma\":80.0") && json.contains("\"margin\":0.4"), "{json}");
}

#[test]
fn circle_without_trainable_parameters_errors() {
    let ds = tiny_dataset(2, 2);
    let mut model = EmbeddingModel::new(tiny_spec(), 1).unwrap();
    model.set_trainable(&crate::model::STAGES, false).unwrap();
    let data = TrainData { train: &ds, val: None, augmenter: None };
    let cfg = quick(TrainConfig::circle(), 1);
    assert!(matches!(
        finetune_circle_current(&mut model, &data, &cfg),
        Err(KwsError::NoTrainableParameters)
    ));
}

#[test]
fn p2e_fits_a_single_pair() {
    let spec = P2ESpec {
        phoneme_vocab_size: 10,
        phoneme_embed_dim: 8,
        lstm_hidden: 12,
        lstm_layers: 2,
        output_dim: 6,
    };
    let mut model = P2EModel::new(spec, 2).unwrap();
    let target = Embedding::new(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2]).unwrap().normalized().unwrap();
    let pair = P2EPair { phonemes: vec![3, 1, 4, 1, 5], target };
    let mut cfg = quick(TrainConfig::p2e(), 150);
    cfg.initial_lr = 0.01;
    let report = train_p2e(&mut model, std::slice::from_ref(&pair), Some(std::slice::from_ref(&pair)), &cfg).unwrap();
    let last = report.last().unwrap();
    assert!(last.val_loss.unwrap() < 0.01, "{last:?}");
    assert_eq!(last.val_accuracy, Some(1.0));
}

#[test]
fn p2e_rejects_unnormalized_targets() {
    let mut model = P2EModel::new(P2ESpec { output_dim: 2, ..P2ESpec::default() }, 0).unwrap();
    let pair = P2EPair {
        phonemes: vec![1],
        target: Embedding::new(vec![2.0, 0.0]).unwrap(),
    };
    assert!(train_p2e(&mut model, &[pair], None, &quick(TrainConfig::p2e(), 1)).is_err());
}

#[test]
fn baseline_uses_fixed_mixture_and_decay() {
    let ds = tiny_dataset(3, 3);
    let targets: Vec<_> = ds.clips.iter().filter(|c| c.label == ds.classes[0]).cloned().collect();
    let others: Vec<_> = ds.clips.iter().filter(|c| c.label != ds.classes[0]).cloned().collect();
    let bg = vec![AudioClip::new(vec![0.01; 24000], 16000).unwrap()];
    let aug = Augmenter::new(AugmentPolicy::default()).unwrap();
    let set = build_baseline_set(&targets[..2], &others, &bg, &aug, 7).unwrap();
    assert_eq!(set.labels.len(), 256);
    assert_eq!((set.count(TARGET), set.count(UNKNOWN), set.count(BACKGROUND)), BASELINE_COUNTS);
    let pretrained = EmbeddingModel::new(tiny_spec(), 3).unwrap();
    let mut cfg = TrainConfig::baseline();
    cfg.epochs = 3;
    cfg.batch_size = 64;
    let (model, head, report) = finetune_baseline3(&pretrained, &set, &cfg).unwrap();
    assert_eq!(head.n_classes(), 3);
    assert_ne!(model, pretrained);
    for (e, lr) in report.lr_trace().iter().enumerate() {
        assert!((lr - 0.001 * 0.7f64.powi(e as i32)).abs() < 1e-15);
    }
    let scores = baseline_scores(&model, &head, &set.features[..4]).unwrap();
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    assert!(build_baseline_set(&[], &others, &bg, &aug, 7).is_err());
}

#[test]
fn mix_seed_separates_coordinates() {
    let seeds: std::collections::BTreeSet<u64> = (0..20).flat_map(|a| (0..20).map(move |b| mix_seed(1, a, b))).collect();
    assert_eq!(seeds.len(), 400);
    assert_eq!(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
}

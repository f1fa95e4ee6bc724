use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{mix_seed, Augmenter};
use super::{lr_schedule, EpochRecord, TrainConfig, TrainReport};
use crate::audio::{AudioClip, FeatureMap, Frontend, FrontendConfig};
use crate::autodiff::{apply_bn_updates, Adam, Graph};
use crate::data::{ClipVariant, KeywordClip};
use crate::error::{KwsError, Result};
use crate::model::{ClassifierHead, EmbeddingModel, STAGES};

/// Target, unknown and background sample counts of the 256-sample set.
pub const BASELINE_COUNTS: (usize, usize, usize) = (115, 115, 26);
pub const TARGET: usize = 0;
pub const UNKNOWN: usize = 1;
pub const BACKGROUND: usize = 2;

/// Fixed training set for the 3-class baseline.
#[derive(Debug, Clone)]
pub struct BaselineSet {
    pub features: Vec<FeatureMap>,
    pub labels: Vec<usize>,
}

impl BaselineSet {
    pub fn count(&self, label: usize) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

fn background_clip(bank: &[AudioClip], rng: &mut ChaCha8Rng, len: usize) -> AudioClip {
    let src = &bank[rng.gen_range(0..bank.len())];
    if src.len() <= len {
        return src.window(0, len);
    }
    src.window(rng.gen_range(0..=src.len() - len), len)
}

/// Builds the 256-sample set once: augmented target examples (cycled),
/// augmented non-target clips and background-noise crops.
pub fn build_baseline_set(
    targets: &[KeywordClip],
    nontarget: &[KeywordClip],
    background: &[AudioClip],
    augmenter: &Augmenter,
    seed: u64,
) -> Result<BaselineSet> {
    if targets.is_empty() {
        return Err(KwsError::InsufficientData("at least one target example is required".into()));
    }
    if nontarget.is_empty() || background.is_empty() {
        return Err(KwsError::InsufficientData("non-target and background banks must be non-empty".into()));
    }
    let frontend = Frontend::new(FrontendConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = targets[0].audio.len();
    let (nt, nu, nb) = BASELINE_COUNTS;
    let mut features = Vec::with_capacity(nt + nu + nb);
    let mut labels = Vec::with_capacity(nt + nu + nb);
    for i in 0..nt {
        let c = augmenter.apply(&targets[i % targets.len()], rng.gen())?;
        features.push(frontend.compute(&c.audio)?);
        labels.push(TARGET);
    }
    for _ in 0..nu {
        let src = &nontarget[rng.gen_range(0..nontarget.len())];
        let c = augmenter.apply(src, rng.gen())?;
        features.push(frontend.compute(&c.audio)?);
        labels.push(UNKNOWN);
    }
    for _ in 0..nb {
        let clip = KeywordClip {
            audio: background_clip(background, &mut rng, len),
            label: "_background_".into(),
            variant: ClipVariant::Context,
        };
        features.push(frontend.compute(&clip.audio)?);
        labels.push(BACKGROUND);
    }
    Ok(BaselineSet { features, labels })
}

/// Fine-tunes a copy of `pretrained` with a fresh 3-way head; every
/// weight is trainable.
pub fn finetune_baseline3(
    pretrained: &EmbeddingModel,
    set: &BaselineSet,
    cfg: &TrainConfig,
) -> Result<(EmbeddingModel, ClassifierHead, TrainReport)> {
    cfg.validate()?;
    let mut model = pretrained.clone();
    model.set_trainable(&STAGES, true)?;
    let mut head = ClassifierHead::new(model.spec().embedding_dim, 3, mix_seed(cfg.seed, 3, 3))?;
    let mut adam = Adam::new(cfg.initial_lr);
    let mut report = TrainReport::new("baseline3", cfg);
    let mut order: Vec<usize> = (0..set.labels.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = lr_schedule(epoch, cfg)?;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64, 0)));
        let mut total = 0.0;
        let mut n = 0;
        for batch in order.chunks(cfg.batch_size) {
            let feats: Vec<&FeatureMap> = batch.iter().map(|&i| &set.features[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| set.labels[i]).collect();
            let x = model.batch_tensor(&feats)?;
            let (loss, grads, bn) = {
                let mut g = Graph::new(true);
                let xi = g.input(x);
                let e = model.forward(&mut g, xi)?;
                let logits = head.forward(&mut g, e)?;
                let l = g.cross_entropy(logits, &labels)?;
                let loss = g.value(l).item()?;
                if !loss.is_finite() {
                    return Err(KwsError::Diverged { epoch, loss });
                }
                (loss, g.backward(l)?, g.into_bn_updates())
            };
            apply_bn_updates(model.params_mut(), &bn)?;
            adam.step(&mut [model.params_mut(), head.params_mut()], &grads)?;
            total += loss;
            n += 1;
        }
        report.push(EpochRecord {
            epoch,
            lr: adam.lr,
            loss: total / n as f64,
            val_accuracy: None,
            val_eer: None,
            val_loss: None,
            degenerate_batches: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, head, report))
}

/// Softmax probability of the target class for each feature map.
pub fn baseline_scores(model: &EmbeddingModel, head: &ClassifierHead, feats: &[FeatureMap]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(feats.len());
    for chunk in feats.chunks(super::embedding::EMBED_CHUNK) {
        for row in head.classify(model, &chunk.iter().collect::<Vec<_>>())? {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            out.push((row[TARGET] - m).exp() / z);
        }
    }
    Ok(out)
}

use std::time::Instant;

use super::dataset::{batch_features, embed_all, labeled_embeddings, mix_seed, Augmenter, ClipDataset};
use super::{lr_schedule, EpochRecord, TrainConfig, TrainReport};
use crate::audio::{FeatureMap, Frontend, FrontendConfig};
use crate::autodiff::{apply_bn_updates, Adam, Graph};
use crate::data::{balanced_batches, pk_batches};
use crate::error::{KwsError, Result};
use crate::eval::classification_protocol;
use crate::model::{save_embedding_model, ClassifierHead, EmbeddingModel, STAGES};

/// Training clips plus optional validation clips and augmentation.
pub struct TrainData<'a> {
    pub train: &'a ClipDataset,
    pub val: Option<&'a ClipDataset>,
    pub augmenter: Option<&'a Augmenter>,
}

pub(crate) const EMBED_CHUNK: usize = 32;

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(KwsError::Diverged { epoch, loss })
    }
}

fn refs(f: &[FeatureMap]) -> Vec<&FeatureMap> {
    f.iter().collect()
}

/// One cross-entropy update; returns the batch loss.
fn classifier_step(
    model: &mut EmbeddingModel,
    head: &mut ClassifierHead,
    feats: &[FeatureMap],
    labels: &[usize],
    adam: &mut Adam,
    epoch: usize,
) -> Result<f64> {
    let x = model.batch_tensor(&refs(feats))?;
    let (loss, grads, bn) = {
        let mut g = Graph::new(true);
        let xi = g.input(x);
        let e = model.forward(&mut g, xi)?;
        let logits = head.forward(&mut g, e)?;
        let l = g.cross_entropy(logits, labels)?;
        let loss = g.value(l).item()?;
        check_loss(loss, epoch)?;
        let grads = g.backward(l)?;
        (loss, grads, g.into_bn_updates())
    };
    apply_bn_updates(model.params_mut(), &bn)?;
    adam.step(&mut [model.params_mut(), head.params_mut()], &grads)?;
    Ok(loss)
}

/// Top-1 accuracy of the head on precomputed features.
pub fn classification_accuracy(model: &EmbeddingModel, head: &ClassifierHead, feats: &[FeatureMap], labels: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (chunk, lab) in feats.chunks(EMBED_CHUNK).zip(labels.chunks(EMBED_CHUNK)) {
        let logits = head.classify(model, &refs(chunk))?;
        for (row, &l) in logits.iter().zip(lab) {
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            correct += (arg == l) as usize;
        }
    }
    Ok(correct as f64 / labels.len().max(1) as f64)
}

/// Mean few-shot EER over validation words, or `None` when no word has
/// enough recordings.
pub fn validation_eer(model: &EmbeddingModel, ds: &ClipDataset, feats: &[FeatureMap], shots: usize, seed: u64) -> Result<Option<f64>> {
    let emb = embed_all(model, feats, EMBED_CHUNK)?;
    let items = labeled_embeddings(ds, emb, "all");
    match classification_protocol(&items, shots, seed) {
        Ok(r) => Ok(Some(r.mean_eer)),
        Err(KwsError::InsufficientData(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn val_features(data: &TrainData<'_>, frontend: &Frontend) -> Result<Option<Vec<FeatureMap>>> {
    data.val
        .map(|v| batch_features(v, &(0..v.len()).collect::<Vec<_>>(), None, frontend, 0))
        .transpose()
}

fn checkpoint(cfg: &TrainConfig, stage: &str, epoch: usize, model: &EmbeddingModel, head: Option<&ClassifierHead>) -> Result<()> {
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| KwsError::io(dir, e))?;
        save_embedding_model(&dir.join(format!("{stage}-epoch{epoch:03}.kwsm")), model, head)?;
    }
    Ok(())
}

/// Cross-entropy pre-training with class-balanced batches. All stages are
/// made trainable first.
pub fn train_classifier(
    model: &mut EmbeddingModel,
    head: &mut ClassifierHead,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if head.n_classes() != data.train.classes.len() {
        return Err(KwsError::shape("train_classifier", data.train.classes.len(), head.n_classes()));
    }
    model.set_trainable(&STAGES, true)?;
    let frontend = Frontend::new(FrontendConfig::default())?;
    let val_feats = val_features(data, &frontend)?;
    let mut adam = Adam::new(cfg.initial_lr);
    let mut report = TrainReport::new("classifier", cfg);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = lr_schedule(epoch, cfg)?;
        let batches = balanced_batches(&data.train.labels, cfg.batch_size, mix_seed(cfg.seed, epoch as u64, 0))?;
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let feats = batch_features(data.train, batch, data.augmenter, &frontend, mix_seed(cfg.seed, epoch as u64, bi as u64 + 1))?;
            let labels: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
            total += classifier_step(model, head, &feats, &labels, &mut adam, epoch)?;
        }
        let (mut val_accuracy, mut val_eer) = (None, None);
        if let (Some(v), Some(f)) = (data.val, &val_feats) {
            val_accuracy = Some(classification_accuracy(model, head, f, &v.labels)?);
            val_eer = validation_eer(model, v, f, cfg.eval_shots, cfg.seed)?;
        }
        checkpoint(cfg, "classifier", epoch, model, Some(head))?;
        report.push(EpochRecord {
            epoch,
            lr: adam.lr,
            loss: total / batches.len() as f64,
            val_accuracy,
            val_eer,
            val_loss: None,
            degenerate_batches: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

/// Stages updated during metric fine-tuning.
pub const CIRCLE_TRAINABLE: [&str; 2] = ["conv5", "fc"];

/// Circle-loss fine-tuning on P-K batches with conv1..conv4 frozen.
pub fn finetune_circle(model: &mut EmbeddingModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    model.set_trainable(&STAGES, false)?;
    model.set_trainable(&CIRCLE_TRAINABLE, true)?;
    finetune_circle_current(model, data, cfg)
}

/// As [`finetune_circle`] but keeps the model's current trainable flags.
pub fn finetune_circle_current(model: &mut EmbeddingModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if model.params().trainable_count() == 0 {
        return Err(KwsError::NoTrainableParameters);
    }
    let params = cfg.circle_params();
    let frontend = Frontend::new(FrontendConfig::default())?;
    let val_feats = val_features(data, &frontend)?;
    let mut adam = Adam::new(cfg.initial_lr);
    let mut report = TrainReport::new("circle", cfg);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = lr_schedule(epoch, cfg)?;
        let batches = pk_batches(&data.train.labels, cfg.pk_p, cfg.pk_k, mix_seed(cfg.seed, epoch as u64, 0))?;
        let (mut total, mut degenerate) = (0.0, 0);
        for (bi, batch) in batches.iter().enumerate() {
            let feats = batch_features(data.train, batch, data.augmenter, &frontend, mix_seed(cfg.seed, epoch as u64, bi as u64 + 1))?;
            let labels: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
            let x = model.batch_tensor(&refs(&feats))?;
            let (loss, is_degenerate, grads, bn) = {
                let mut g = Graph::new(true);
                let xi = g.input(x);
                let e = model.forward(&mut g, xi)?;
                let n = g.l2_normalize(e)?;
                let (l, deg) = g.circle_loss(n, &labels, &params)?;
                let loss = g.value(l).item()?;
                check_loss(loss, epoch)?;
                let grads = g.backward(l)?;
                (loss, deg, grads, g.into_bn_updates())
            };
            total += loss;
            if is_degenerate {
                degenerate += 1;
                continue;
            }
            apply_bn_updates(model.params_mut(), &bn)?;
            adam.step(&mut [model.params_mut()], &grads)?;
        }
        let val_eer = match (data.val, &val_feats) {
            (Some(v), Some(f)) => validation_eer(model, v, f, cfg.eval_shots, cfg.seed)?,
            _ => None,
        };
        checkpoint(cfg, "circle", epoch, model, None)?;
        report.push(EpochRecord {
            epoch,
            lr: adam.lr,
            loss: total / batches.len() as f64,
            val_accuracy: None,
            val_eer,
            val_loss: None,
            degenerate_batches: degenerate,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

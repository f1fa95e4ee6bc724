use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::mix_seed;
use super::{lr_schedule, EpochRecord, TrainConfig, TrainReport};
use crate::autodiff::{Adam, Graph, Tensor};
use crate::error::{KwsError, Result};
use crate::losses::cosine_loss;
use crate::model::{Embedding, P2EModel};

/// Phoneme sequence with its target word embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct P2EPair {
    pub phonemes: Vec<usize>,
    pub target: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2EEval {
    pub mean_cosine_loss: f64,
    /// Fraction of queries whose nearest candidate target is their own.
    pub top1: f64,
}

fn check_pairs(model: &P2EModel, pairs: &[P2EPair]) -> Result<()> {
    for p in pairs {
        model.check_ids(&p.phonemes)?;
        if p.target.dim() != model.spec().output_dim {
            return Err(KwsError::shape("train_p2e", model.spec().output_dim, p.target.dim()));
        }
        if (p.target.norm() - 1.0).abs() > 1e-6 {
            return Err(KwsError::invalid("P2E targets must be L2-normalized"));
        }
    }
    Ok(())
}

/// Held-out loss and nearest-neighbor retrieval of `queries` among
/// `candidates` (which should include the queries' own targets).
pub fn evaluate_p2e(model: &P2EModel, queries: &[P2EPair], candidates: &[Embedding]) -> Result<P2EEval> {
    if queries.is_empty() {
        return Err(KwsError::InsufficientData("no P2E evaluation pairs".into()));
    }
    let preds = model.embed_batch(&queries.iter().map(|q| q.phonemes.clone()).collect::<Vec<_>>())?;
    let (mut loss, mut hits) = (0.0, 0);
    for (q, p) in queries.iter().zip(&preds) {
        loss += cosine_loss(p.values(), q.target.values())?;
        let mut best = (f64::NEG_INFINITY, None);
        for c in candidates {
            let s = p.cosine(c)?;
            if s > best.0 {
                best = (s, Some(c));
            }
        }
        hits += best.1.is_some_and(|c| c == &q.target) as usize;
    }
    Ok(P2EEval {
        mean_cosine_loss: loss / queries.len() as f64,
        top1: hits as f64 / queries.len() as f64,
    })
}

/// Cosine-loss regression of phoneme sequences onto word embeddings.
pub fn train_p2e(model: &mut P2EModel, train: &[P2EPair], val: Option<&[P2EPair]>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(KwsError::InsufficientData("no P2E training pairs".into()));
    }
    check_pairs(model, train)?;
    if let Some(v) = val {
        check_pairs(model, v)?;
    }
    let candidates: Vec<Embedding> = train
        .iter()
        .chain(val.unwrap_or(&[]))
        .map(|p| p.target.clone())
        .collect();
    let d = model.spec().output_dim;
    let mut adam = Adam::new(cfg.initial_lr);
    let mut report = TrainReport::new("p2e", cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = lr_schedule(epoch, cfg)?;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64, 0)));
        let mut total = 0.0;
        let mut n_batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let max_len = batch.iter().map(|&i| train[i].phonemes.len()).max().unwrap_or(0);
            let seqs: Vec<Vec<usize>> = batch
                .iter()
                .map(|&i| {
                    let mut s = train[i].phonemes.clone();
                    s.resize(max_len, 0);
                    s
                })
                .collect();
            let target = Tensor::new(
                vec![batch.len(), d],
                batch.iter().flat_map(|&i| train[i].target.values().iter().copied()).collect(),
            )?;
            let (loss, grads) = {
                let mut g = Graph::new(true);
                let out = model.forward(&mut g, &seqs)?;
                let l = g.cosine_loss(out, &target)?;
                let loss = g.value(l).item()?;
                if !loss.is_finite() {
                    return Err(KwsError::Diverged { epoch, loss });
                }
                (loss, g.backward(l)?)
            };
            adam.step(&mut [model.params_mut()], &grads)?;
            total += loss;
            n_batches += 1;
        }
        let (mut val_loss, mut val_accuracy) = (None, None);
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let e = evaluate_p2e(model, v, &candidates)?;
            val_loss = Some(e.mean_cosine_loss);
            val_accuracy = Some(e.top1);
        }
        report.push(EpochRecord {
            epoch,
            lr: adam.lr,
            loss: total / n_batches as f64,
            val_accuracy,
            val_eer: None,
            val_loss,
            degenerate_batches: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

//! Phoneme-to-embedding regression on compositional targets: each target is
//! the normalized sum of per-phoneme vectors plus noise, so held-out
//! phoneme strings can be mapped without ever being seen.
//!
//! cargo run --release --example p2e -- [epochs] [noise]

use std::collections::BTreeSet;

use qbe_kws::enroll::{enroll_from_phonemes, score};
use qbe_kws::model::{Embedding, P2EModel, P2ESpec};
use qbe_kws::train::{evaluate_p2e, train_p2e, P2EPair, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> qbe_kws::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let noise: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let spec = P2ESpec::default();
    let d = spec.output_dim;
    let n_ph = 30;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let basis: Vec<Vec<f64>> = (0..=n_ph)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    while pairs.len() < 500 {
        let len = rng.gen_range(3..=6);
        let ph: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=n_ph)).collect();
        if !seen.insert(ph.clone()) {
            continue;
        }
        let mut v = vec![0.0; d];
        for &p in &ph {
            for (a, b) in v.iter_mut().zip(&basis[p]) {
                *a += b;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for a in v.iter_mut() {
            *a = *a / n + noise * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt();
        }
        pairs.push(P2EPair {
            phonemes: ph,
            target: Embedding::new(v)?.normalized()?,
        });
    }
    let (train, val) = pairs.split_at(400);

    let mut model = P2EModel::new(spec, 1)?;
    let mut cfg = TrainConfig::p2e();
    cfg.epochs = epochs;
    cfg.anneal_start = epochs / 2;
    cfg.progress = true;
    train_p2e(&mut model, train, Some(val), &cfg)?;

    let candidates: Vec<Embedding> = pairs.iter().map(|p| p.target.clone()).collect();
    let eval = evaluate_p2e(&model, val, &candidates)?;
    println!(
        "held-out: mean cosine loss {:.4}, nearest-neighbor top-1 {:.3}",
        eval.mean_cosine_loss, eval.top1
    );

    let q = &val[0];
    let profile = enroll_from_phonemes("unseen", &q.phonemes, &model)?;
    println!(
        "phoneme profile vs own target {:.3}, vs another word {:.3}",
        score(&profile, &q.target)?,
        score(&profile, &val[1].target)?
    );
    Ok(())
}

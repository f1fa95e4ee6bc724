use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KwsError, Result};

pub const BALANCED_BATCH_SIZE: usize = 128;
/// Samples per class in a P-K batch.
pub const PK_P: usize = 32;
/// Classes per P-K batch.
pub const PK_K: usize = 5;

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().push(i);
    }
    m
}

/// One epoch of class-balanced batches over dataset indices: classes are
/// drawn uniformly with replacement, then one sample uniformly within the
/// class. Yields `ceil(len / batch_size)` batches.
pub fn balanced_batches(labels: &[usize], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if labels.is_empty() {
        return Err(KwsError::InsufficientData("empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(KwsError::invalid("batch size must be positive"));
    }
    let classes: Vec<Vec<usize>> = by_class(labels).into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_batches = labels.len().div_ceil(batch_size);
    Ok((0..n_batches)
        .map(|_| {
            (0..batch_size)
                .map(|_| {
                    let members = &classes[rng.gen_range(0..classes.len())];
                    members[rng.gen_range(0..members.len())]
                })
                .collect()
        })
        .collect())
}

/// One epoch of P-K batches: `k` distinct classes with `p` samples each.
/// Classes with fewer than `p` samples are drawn with replacement. Yields
/// `ceil(len / (p * k))` batches.
pub fn pk_batches(labels: &[usize], p: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if p == 0 || k == 0 {
        return Err(KwsError::invalid("P and K must be positive"));
    }
    let classes: Vec<Vec<usize>> = by_class(labels).into_values().collect();
    if classes.len() < k {
        return Err(KwsError::InsufficientData(format!(
            "P-K sampling needs at least {k} classes, found {}",
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_batches = labels.len().div_ceil(p * k);
    Ok((0..n_batches)
        .map(|_| {
            let chosen = index::sample(&mut rng, classes.len(), k);
            let mut batch = Vec::with_capacity(p * k);
            for c in chosen.iter() {
                let members = &classes[c];
                if members.len() >= p {
                    let mut pick: Vec<usize> = index::sample(&mut rng, members.len(), p).iter().map(|i| members[i]).collect();
                    pick.shuffle(&mut rng);
                    batch.extend(pick);
                } else {
                    batch.extend((0..p).map(|_| members[rng.gen_range(0..members.len())]));
                }
            }
            batch
        })
        .collect())
}

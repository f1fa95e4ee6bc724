use std::collections::HashMap;

use super::{BnUpdate, Gradients, ParamKind, ParamStore};
use crate::error::{KwsError, Result};

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable weight in `stores` that has a
    /// gradient. Frozen weights and buffers are never touched.
    pub fn step(&mut self, stores: &mut [&mut ParamStore], grads: &Gradients) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for store in stores.iter_mut() {
            for p in store.iter_mut() {
                if !p.trainable || p.kind != ParamKind::Weight {
                    continue;
                }
                let Some(g) = grads.get(&p.name) else { continue };
                if g.numel() != p.tensor.numel() {
                    return Err(KwsError::shape("adam", p.tensor.numel(), g.numel()));
                }
                let (m, v) = self
                    .moments
                    .entry(p.name.clone())
                    .or_insert_with(|| (vec![0.0; g.numel()], vec![0.0; g.numel()]));
                for (((w, &gi), mi), vi) in p.tensor.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                    *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// Running-statistics momentum: `running = m * running + (1 - m) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) -> Result<()> {
    for u in updates {
        for (name, batch) in [(&u.mean_name, &u.batch_mean), (&u.var_name, &u.batch_var)] {
            let Ok(p) = store.by_name_mut(name) else { continue };
            for (r, b) in p.tensor.data_mut().iter_mut().zip(batch) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
        }
    }
    Ok(())
}

//! Cross-entropy, circle loss and cosine loss.
//!
//! Each loss has a scalar entry point for single examples plus a batched
//! kernel returning the loss together with its gradient, which the graph
//! operators use for the backward pass.

use crate::error::{KwsError, Result};

/// Circle-loss scale and relaxation margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleParams {
    pub gamma: f64,
    pub margin: f64,
}

impl Default for CircleParams {
    fn default() -> Self {
        Self {
            gamma: 80.0,
            margin: 0.4,
        }
    }
}

impl CircleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(KwsError::invalid("circle loss gamma must be positive"));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(KwsError::invalid("circle loss margin must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Optimum for positive similarities.
    pub fn o_p(&self) -> f64 {
        1.0 + self.margin
    }

    /// Optimum for negative similarities.
    pub fn o_n(&self) -> f64 {
        -self.margin
    }

    pub fn delta_p(&self) -> f64 {
        1.0 - self.margin
    }

    pub fn delta_n(&self) -> f64 {
        self.margin
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    let (loss, _) = cross_entropy_batch(logits, logits.len(), &[label])?;
    Ok(loss)
}

/// Mean cross-entropy over a `B x n` logit matrix, with `d loss / d logits`.
pub fn cross_entropy_batch(logits: &[f64], n: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    if n == 0 || logits.len() != n * labels.len() {
        return Err(KwsError::shape("cross_entropy", format!("{} x {n}", labels.len()), logits.len()));
    }
    let b = labels.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (row, (&label, g)) in logits.chunks(n).zip(labels.iter().zip(grad.chunks_mut(n))) {
        if label >= n {
            return Err(KwsError::OutOfRange {
                what: "class label",
                value: label as f64,
                min: 0.0,
                max: (n - 1) as f64,
            });
        }
        let lse = log_sum_exp(row);
        total += lse - row[label];
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - lse).exp() / b;
        }
        g[label] -= 1.0 / b;
    }
    Ok((total / b, grad))
}

/// Result of the batched circle loss.
#[derive(Debug, Clone)]
pub struct CircleOutput {
    pub loss: f64,
    /// Gradient with respect to the (already normalized) input rows.
    pub grad: Vec<f64>,
    /// Set when the batch has no positive or no negative pair.
    pub degenerate: bool,
    /// Digest of which negative pairs have an active weight; changes when
    /// a similarity crosses the non-differentiable point.
    pub branch: u64,
}

/// Circle loss over all unordered within-batch pairs of L2-normalized rows
/// `x` (`B x d`).
pub fn circle_loss_normalized(x: &[f64], d: usize, labels: &[usize], p: &CircleParams) -> Result<CircleOutput> {
    p.validate()?;
    let b = labels.len();
    if d == 0 || x.len() != b * d {
        return Err(KwsError::shape("circle_loss", format!("{b} x {d}"), x.len()));
    }
    let row = |i: usize| &x[i * d..(i + 1) * d];
    let dot = |i: usize, j: usize| row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum::<f64>();

    let mut pos = Vec::new(); // (i, j, s, logit)
    let mut neg = Vec::new();
    let mut branch: u64 = 0xcbf29ce484222325;
    for i in 0..b {
        for j in i + 1..b {
            let s = dot(i, j);
            if labels[i] == labels[j] {
                let alpha = (p.o_p() - s).max(0.0);
                pos.push((i, j, s, -p.gamma * alpha * (s - p.delta_p())));
            } else {
                let alpha = (s - p.o_n()).max(0.0);
                branch = (branch ^ (alpha > 0.0) as u64).wrapping_mul(0x100000001b3);
                neg.push((i, j, s, p.gamma * alpha * (s - p.delta_n())));
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Ok(CircleOutput {
            loss: 0.0,
            grad: vec![0.0; x.len()],
            degenerate: true,
            branch,
        });
    }
    let pos_logits: Vec<f64> = pos.iter().map(|t| t.3).collect();
    let neg_logits: Vec<f64> = neg.iter().map(|t| t.3).collect();
    let lse_p = log_sum_exp(&pos_logits);
    let lse_n = log_sum_exp(&neg_logits);
    let z = lse_p + lse_n;
    let loss = softplus(z);
    let outer = sigmoid(z);

    let mut grad = vec![0.0; x.len()];
    let mut add_pair = |i: usize, j: usize, ds: f64| {
        for k in 0..d {
            grad[i * d + k] += ds * x[j * d + k];
            grad[j * d + k] += ds * x[i * d + k];
        }
    };
    for &(i, j, s, logit) in &pos {
        let w = outer * (logit - lse_p).exp();
        let dlogit_ds = if p.o_p() - s > 0.0 { -p.gamma * (2.0 - 2.0 * s) } else { 0.0 };
        add_pair(i, j, w * dlogit_ds);
    }
    for &(i, j, s, logit) in &neg {
        let w = outer * (logit - lse_n).exp();
        let dlogit_ds = if s - p.o_n() > 0.0 { p.gamma * 2.0 * s } else { 0.0 };
        add_pair(i, j, w * dlogit_ds);
    }
    Ok(CircleOutput {
        loss,
        grad,
        degenerate: false,
        branch,
    })
}

/// Circle loss on raw embeddings; rows are L2-normalized first.
pub fn circle_loss(embeddings: &[Vec<f64>], labels: &[usize], p: &CircleParams) -> Result<(f64, bool)> {
    if embeddings.len() != labels.len() {
        return Err(KwsError::invalid("one label per embedding required"));
    }
    let d = embeddings.first().map_or(0, |e| e.len());
    let mut x = Vec::with_capacity(embeddings.len() * d);
    for e in embeddings {
        if e.len() != d {
            return Err(KwsError::shape("circle_loss", d, e.len()));
        }
        let n = l2_norm(e);
        if n == 0.0 {
            return Err(KwsError::invalid("zero embedding in circle loss batch"));
        }
        x.extend(e.iter().map(|v| v / n));
    }
    let out = circle_loss_normalized(&x, d, labels, p)?;
    Ok((out.loss, out.degenerate))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(pred, target)`.
pub fn cosine_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(cosine_loss_batch(pred, target, pred.len())?.0)
}

/// Mean cosine loss over `B x d` rows, with the gradient w.r.t. `pred`.
pub fn cosine_loss_batch(pred: &[f64], target: &[f64], d: usize) -> Result<(f64, Vec<f64>)> {
    if d == 0 || pred.len() != target.len() || pred.len() % d != 0 {
        return Err(KwsError::shape("cosine_loss", format!("rows of {d}"), pred.len()));
    }
    let b = pred.len() / d;
    let mut grad = vec![0.0; pred.len()];
    let mut total = 0.0;
    for r in 0..b {
        let p = &pred[r * d..(r + 1) * d];
        let t = &target[r * d..(r + 1) * d];
        let (np, nt) = (l2_norm(p), l2_norm(t));
        if np == 0.0 || nt == 0.0 {
            return Err(KwsError::invalid("cosine loss of a zero vector"));
        }
        let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
        let cos = dot / (np * nt);
        total += 1.0 - cos;
        for k in 0..d {
            grad[r * d + k] = -(t[k] / (np * nt) - cos * p[k] / (np * np)) / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        let uniform = vec![0.0; 3917];
        assert!((cross_entropy(&uniform, 17).unwrap() - 3917f64.ln()).abs() < 1e-9);
        assert!((3917f64.ln() - 8.2732).abs() < 2e-4);

        let mut saturated = vec![0.0; 10];
        saturated[3] = 1000.0;
        assert!(cross_entropy(&saturated, 3).unwrap() < 1e-6);

        let v = cross_entropy(&[2.0, 0.0], 0).unwrap();
        assert!((v - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 0.1269).abs() < 1e-4);

        assert!(cross_entropy(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn circle_single_class_is_zero() {
        let e = vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]];
        let (loss, degenerate) = circle_loss(&e, &[1, 1, 1], &CircleParams::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(degenerate);
    }

    #[test]
    fn circle_worked_example() {
        // one positive pair at s = 1 and one negative pair at s = -1
        let x = vec![1.0, 0.0, 1.0, 0.0];
        let out_pos = circle_loss_normalized(&x, 2, &[0, 0], &CircleParams::default()).unwrap();
        assert!(out_pos.degenerate);
        let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]];
        // pairs: (0,1) s=1 positive; (0,2),(1,2) s=-1 negatives
        let (loss, _) = circle_loss(&e, &[0, 0, 1], &CircleParams::default()).unwrap();
        // two negatives each contribute exp(0) = 1
        let expected = (1.0 + 2.0 * (-12.8f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);

        let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![-1.0, 0.0]];
        let labels = [0, 0, 1, 2];
        let (loss, _) = circle_loss(&e, &labels, &CircleParams::default()).unwrap();
        assert!(loss > 0.0);

        // the single-pair form of the worked example
        let single = (1.0f64 + (-12.8f64).exp()).ln();
        assert!((single - 2.76e-6).abs() < 1e-8);
    }

    #[test]
    fn cosine_examples() {
        let a = [1.0, 2.0, -0.5];
        assert!(cosine_loss(&a, &a).unwrap().abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_loss(&a, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!((cosine_loss(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_loss(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn params_validate() {
        assert!(CircleParams { gamma: 0.0, margin: 0.4 }.validate().is_err());
        assert!(CircleParams { gamma: 80.0, margin: 1.0 }.validate().is_err());
        let p = CircleParams::default();
        assert_eq!((p.o_p(), p.o_n(), p.delta_p(), p.delta_n()), (1.4, -0.4, 0.6, 0.4));
    }
}

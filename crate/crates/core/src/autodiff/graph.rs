use std::collections::BTreeMap;

use super::kernels::{self, ConvGeometry};
use super::tensor::shape_str;
use super::{Parameter, Tensor};
use crate::error::{KwsError, Result};
use crate::losses::{self, CircleParams};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

/// Gradients of trainable parameters, keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Batch statistics produced by a training-mode batch norm; applied to the
/// running buffers once the graph is dropped.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_name: String,
    pub var_name: String,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance.
    pub batch_var: Vec<f64>,
}

enum Value<'a> {
    Owned(Tensor),
    Param(&'a Parameter),
}

enum Op {
    Input,
    Param,
    Conv2d {
        x: NodeId,
        w: NodeId,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MeanAxis {
        x: NodeId,
        axis: usize,
    },
    Reshape(NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ScaleRows {
        x: NodeId,
        coeffs: Vec<f64>,
    },
    L2Normalize {
        x: NodeId,
        norms: Vec<f64>,
    },
    /// Scalar loss whose input gradient was computed during forward.
    Loss {
        x: NodeId,
        grad: Vec<f64>,
    },
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    needs_grad: bool,
}

/// Eagerly evaluated operator tape for reverse-mode differentiation.
///
/// Parameters are borrowed from their stores for the lifetime of the graph;
/// gradients come back keyed by parameter name.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    training: bool,
    bn_updates: Vec<BnUpdate>,
    branch: u64,
}

impl<'a> Graph<'a> {
    /// `training` selects batch statistics for trainable batch norms.
    pub fn new(training: bool) -> Self {
        Self {
            nodes: Vec::new(),
            training,
            bn_updates: Vec::new(),
            branch: 0xcbf29ce484222325,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => &p.tensor,
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    /// Pending running-statistic updates from training-mode batch norms.
    pub fn into_bn_updates(self) -> Vec<BnUpdate> {
        self.bn_updates
    }

    /// Digest of every piecewise branch taken (rectifier signs, circle-loss
    /// active sets). Equal digests mean two evaluations stayed on the same
    /// smooth piece.
    pub fn branch_signature(&self) -> u64 {
        self.branch
    }

    fn mix_branch(&mut self, bit: u64) {
        self.branch = (self.branch ^ bit).wrapping_mul(0x100000001b3);
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Input,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, p: &'a Parameter) -> NodeId {
        self.nodes.push(Node {
            value: Value::Param(p),
            op: Op::Param,
            needs_grad: p.trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// 2-D convolution without bias. `x`: `B x C x H x W`, `w`: `O x C x kh x kw`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: [usize; 2], pad: [usize; 2]) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(KwsError::shape(
                "conv2d",
                format!("input Bx{}xHxW", ws.get(1).copied().unwrap_or(0)),
                shape_str(&xs),
            ));
        }
        if stride.contains(&0) || xs[2] + 2 * pad[0] < ws[2] || xs[3] + 2 * pad[1] < ws[3] {
            return Err(KwsError::shape("conv2d", "kernel within padded input", shape_str(&xs)));
        }
        let geom = ConvGeometry {
            channels: xs[1],
            height: xs[2],
            width: xs[3],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
        };
        let (oh, ow) = geom.out_hw();
        let out = kernels::conv2d_forward(self.value(x).data(), xs[0], &geom, self.value(w).data(), ws[0]);
        let t = Tensor::from_parts(vec![xs[0], ws[0], oh, ow], out);
        Ok(self.push(t, Op::Conv2d { x, w, geom }, &[x, w]))
    }

    /// Batch normalization over axis 1 of a `B x C x ...` tensor.
    ///
    /// With `batch_stats` the batch mean and biased variance normalize the
    /// input and an update for the running buffers is recorded; otherwise the
    /// running buffers are used.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &Parameter,
        running_var: &Parameter,
        batch_stats: bool,
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(KwsError::shape("batch_norm", "B x C x ...", shape_str(&xs)));
        }
        let (b, c) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(id) != [c] {
                return Err(KwsError::shape("batch_norm", format!("{name} of [{c}]"), shape_str(self.shape(id))));
            }
        }
        if running_mean.tensor.shape() != [c] || running_var.tensor.shape() != [c] {
            return Err(KwsError::shape("batch_norm", format!("running stats of [{c}]"), "mismatch"));
        }
        let n = b * inner;
        if batch_stats && n < 2 {
            return Err(KwsError::shape("batch_norm", "at least 2 values per channel", n));
        }
        let xd = self.value(x).data();
        let (mut mean, mut var) = (vec![0.0; c], vec![0.0; c]);
        if batch_stats {
            for bi in 0..b {
                for ch in 0..c {
                    let s = &xd[(bi * c + ch) * inner..(bi * c + ch + 1) * inner];
                    mean[ch] += s.iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            for bi in 0..b {
                for ch in 0..c {
                    let s = &xd[(bi * c + ch) * inner..(bi * c + ch + 1) * inner];
                    var[ch] += s.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
        } else {
            mean.copy_from_slice(running_mean.tensor.data());
            var.copy_from_slice(running_var.tensor.data());
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for bi in 0..b {
            for ch in 0..c {
                let range = (bi * c + ch) * inner..(bi * c + ch + 1) * inner;
                for i in range {
                    let h = (xd[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = g[ch] * h + be[ch];
                }
            }
        }
        if batch_stats {
            let unbias = n as f64 / (n - 1) as f64;
            self.bn_updates.push(BnUpdate {
                mean_name: running_mean.name.clone(),
                var_name: running_var.name.clone(),
                batch_mean: mean,
                batch_var: var.iter().map(|v| v * unbias).collect(),
            });
        }
        let t = Tensor::from_parts(xs, out);
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(x);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect());
        self.push(t, op, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut sig: u64 = 0;
        for (i, &v) in self.value(x).data().iter().enumerate() {
            if v > 0.0 {
                sig = sig.wrapping_add((i as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15));
            }
        }
        self.mix_branch(sig);
        self.unary(x, |a| a.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |a| 1.0 / (1.0 + (-a).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(KwsError::shape(op, shape_str(self.shape(a)), shape_str(self.shape(b))));
        }
        Ok(())
    }

    /// Elementwise sum; operands must have identical shapes (residual add).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Mean over `axis`, keeping it as a size-1 dimension.
    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || xs[axis] == 0 {
            return Err(KwsError::shape("mean_axis", format!("axis {axis} present"), shape_str(&xs)));
        }
        let outer: usize = xs[..axis].iter().product();
        let len = xs[axis];
        let inner: usize = xs[axis + 1..].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &xd[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let mut shape = xs;
        shape[axis] = 1;
        Ok(self.push(Tensor::from_parts(shape, out), Op::MeanAxis { x, axis }, &[x]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// `x W^T + b` with `x`: `B x in`, `w`: `out x in`, `b`: `out`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(KwsError::shape(
                "linear",
                format!("B x {}", ws.get(1).copied().unwrap_or(0)),
                shape_str(&xs),
            ));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![0.0; batch * fout];
        kernels::gemm(batch, fin, fout, self.value(x).data(), false, self.value(w).data(), true, &mut out, false);
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(KwsError::shape("linear", format!("bias [{fout}]"), shape_str(self.shape(b))));
            }
            let bd = self.value(b).data();
            for row in out.chunks_mut(fout) {
                for (o, bv) in row.iter_mut().zip(bd) {
                    *o += bv;
                }
            }
        }
        let inputs: Vec<NodeId> = std::iter::once(x).chain(std::iter::once(w)).chain(b).collect();
        Ok(self.push(Tensor::from_parts(vec![batch, fout], out), Op::Linear { x, w, b }, &inputs))
    }

    /// Row lookup into `table` (`V x D`); id 0 is padding and yields zeros.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 {
            return Err(KwsError::shape("gather", "V x D table", shape_str(&ts)));
        }
        let (v, d) = (ts[0], ts[1]);
        let td = self.value(table).data();
        let mut out = vec![0.0; ids.len() * d];
        for (row, &id) in out.chunks_mut(d).zip(ids) {
            if id >= v {
                return Err(KwsError::OutOfVocabulary { id, max: v - 1 });
            }
            if id != 0 {
                row.copy_from_slice(&td[id * d..(id + 1) * d]);
            }
        }
        let t = Tensor::from_parts(vec![ids.len(), d], out);
        Ok(self.push(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Columns `[start, start + len)` of a `B x N` matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || start + len > xs[1] {
            return Err(KwsError::shape("slice_cols", format!("B x >= {}", start + len), shape_str(&xs)));
        }
        let n = xs[1];
        let xd = self.value(x).data();
        let out: Vec<f64> = (0..xs[0]).flat_map(|r| xd[r * n + start..r * n + start + len].iter().copied()).collect();
        Ok(self.push(Tensor::from_parts(vec![xs[0], len], out), Op::SliceCols { x, start }, &[x]))
    }

    /// Multiplies row `r` of a `B x D` matrix by the constant `coeffs[r]`.
    pub fn scale_rows(&mut self, x: NodeId, coeffs: &[f64]) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || xs[0] != coeffs.len() {
            return Err(KwsError::shape("scale_rows", format!("{} x D", coeffs.len()), shape_str(&xs)));
        }
        let d = xs[1];
        let data = self
            .value(x)
            .data()
            .chunks(d.max(1))
            .zip(coeffs)
            .flat_map(|(row, c)| row.iter().map(move |v| v * c))
            .collect();
        Ok(self.push(
            Tensor::from_parts(xs, data),
            Op::ScaleRows {
                x,
                coeffs: coeffs.to_vec(),
            },
            &[x],
        ))
    }

    /// Scales each row of a `B x D` matrix to unit L2 norm.
    pub fn l2_normalize(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(KwsError::shape("l2_normalize", "B x D", shape_str(&xs)));
        }
        let d = xs[1];
        let xd = self.value(x).data();
        let norms: Vec<f64> = xd.chunks(d).map(losses::l2_norm).collect();
        if norms.iter().any(|&n| n == 0.0) {
            return Err(KwsError::invalid("l2_normalize of a zero row"));
        }
        let data = xd.chunks(d).zip(&norms).flat_map(|(r, n)| r.iter().map(move |v| v / n)).collect();
        Ok(self.push(Tensor::from_parts(xs, data), Op::L2Normalize { x, norms }, &[x]))
    }

    fn loss_node(&mut self, x: NodeId, loss: f64, grad: Vec<f64>) -> NodeId {
        self.push(Tensor::scalar(loss), Op::Loss { x, grad }, &[x])
    }

    /// Mean softmax cross-entropy of `B x N` logits.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(KwsError::shape("cross_entropy", format!("{} x N", labels.len()), shape_str(&s)));
        }
        let (loss, grad) = losses::cross_entropy_batch(self.value(logits).data(), s[1], labels)?;
        Ok(self.loss_node(logits, loss, grad))
    }

    /// Circle loss over rows of `x`, which must already be L2-normalized.
    /// Returns the loss node and whether the batch was degenerate.
    pub fn circle_loss(&mut self, x: NodeId, labels: &[usize], p: &CircleParams) -> Result<(NodeId, bool)> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(KwsError::shape("circle_loss", format!("{} x D", labels.len()), shape_str(&s)));
        }
        let out = losses::circle_loss_normalized(self.value(x).data(), s[1], labels, p)?;
        self.mix_branch(out.branch);
        Ok((self.loss_node(x, out.loss, out.grad), out.degenerate))
    }

    /// Mean cosine loss between `pred` rows and constant `target` rows.
    pub fn cosine_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        if self.shape(pred) != target.shape() || target.rank() != 2 {
            return Err(KwsError::shape("cosine_loss", shape_str(target.shape()), shape_str(self.shape(pred))));
        }
        let d = target.shape()[1];
        let (loss, grad) = losses::cosine_loss_batch(self.value(pred).data(), target.data(), d)?;
        Ok(self.loss_node(pred, loss, grad))
    }

    /// `sum(x * weights)` as a scalar.
    pub fn weighted_sum(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId> {
        let xd = self.value(x).data();
        if xd.len() != weights.len() {
            return Err(KwsError::shape("weighted_sum", xd.len(), weights.len()));
        }
        let v = xd.iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.loss_node(x, v, weights.to_vec()))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel();
        let v = self.value(x).data().iter().sum();
        self.loss_node(x, v, vec![1.0; n])
    }

    /// Reverse pass from a scalar node. Visits nodes in exact reverse
    /// creation order and returns gradients of every trainable parameter
    /// that influenced `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(KwsError::invalid("backward called on a node this graph has not computed"));
        }
        if self.value(loss).numel() != 1 {
            return Err(KwsError::shape("backward", "scalar loss", shape_str(self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    if let Value::Param(p) = &node.value {
                        match out.map.get_mut(&p.name) {
                            Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                out.map.insert(p.name.clone(), Tensor::from_parts(p.tensor.shape().to_vec(), g));
                            }
                        }
                    }
                }
                Op::Conv2d { x, w, geom } => {
                    let xs = self.shape(*x);
                    let out_ch = self.shape(*w)[0];
                    let (dx, dw) = kernels::conv2d_backward(
                        self.value(*x).data(),
                        xs[0],
                        geom,
                        self.value(*w).data(),
                        out_ch,
                        &g,
                        self.needs(*x),
                        self.needs(*w),
                    );
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                    if let Some(dw) = dw {
                        accumulate(&mut grads, *w, dw);
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let xs = self.shape(*x);
                    let (b, c) = (xs[0], xs[1]);
                    let inner: usize = xs[2..].iter().product();
                    let n = (b * inner) as f64;
                    let gam = self.value(*gamma).data();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for bi in 0..b {
                        for ch in 0..c {
                            for i in (bi * c + ch) * inner..(bi * c + ch + 1) * inner {
                                dgamma[ch] += g[i] * xhat[i];
                                dbeta[ch] += g[i];
                            }
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = vec![0.0; g.len()];
                        for bi in 0..b {
                            for ch in 0..c {
                                for i in (bi * c + ch) * inner..(bi * c + ch + 1) * inner {
                                    dx[i] = if *batch_stats {
                                        gam[ch] * inv_std[ch] / n * (n * g[i] - dbeta[ch] - xhat[i] * dgamma[ch])
                                    } else {
                                        gam[ch] * inv_std[ch] * g[i]
                                    };
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*gamma) {
                        accumulate(&mut grads, *gamma, dgamma);
                    }
                    if self.needs(*beta) {
                        accumulate(&mut grads, *beta, dbeta);
                    }
                }
                Op::Relu(x) => {
                    let xd = self.value(*x).data();
                    let dx = g.iter().zip(xd).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(NodeId(idx)).data();
                    let dx = g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let y = self.value(NodeId(idx)).data();
                    let dx = g.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let d = g.iter().zip(self.value(*b).data()).map(|(g, v)| g * v).collect();
                        accumulate(&mut grads, *a, d);
                    }
                    if self.needs(*b) {
                        let d = g.iter().zip(self.value(*a).data()).map(|(g, v)| g * v).collect();
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::MeanAxis { x, axis } => {
                    let xs = self.shape(*x);
                    let outer: usize = xs[..*axis].iter().product();
                    let len = xs[*axis];
                    let inner: usize = xs[*axis + 1..].iter().product();
                    let mut dx = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for a in 0..len {
                            let dst = &mut dx[(o * len + a) * inner..(o * len + a + 1) * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s / len as f64;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => accumulate(&mut grads, *x, g),
                Op::Linear { x, w, b } => {
                    let xs = self.shape(*x);
                    let (batch, fin) = (xs[0], xs[1]);
                    let fout = self.shape(*w)[0];
                    if self.needs(*x) {
                        let mut dx = vec![0.0; batch * fin];
                        kernels::gemm(batch, fout, fin, &g, false, self.value(*w).data(), false, &mut dx, false);
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*w) {
                        let mut dw = vec![0.0; fout * fin];
                        kernels::gemm(fout, batch, fin, &g, true, self.value(*x).data(), false, &mut dw, false);
                        accumulate(&mut grads, *w, dw);
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            let mut db = vec![0.0; fout];
                            for row in g.chunks(fout) {
                                db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                            }
                            accumulate(&mut grads, *b, db);
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let ts = self.shape(*table);
                    let d = ts[1];
                    let mut dt = vec![0.0; ts[0] * d];
                    for (row, &id) in g.chunks(d).zip(ids) {
                        if id != 0 {
                            dt[id * d..(id + 1) * d].iter_mut().zip(row).for_each(|(a, b)| *a += b);
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::SliceCols { x, start } => {
                    let xs = self.shape(*x);
                    let n = xs[1];
                    let len = g.len() / xs[0].max(1);
                    let mut dx = vec![0.0; xs[0] * n];
                    for (r, row) in g.chunks(len.max(1)).enumerate() {
                        dx[r * n + start..r * n + start + len].copy_from_slice(row);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ScaleRows { x, coeffs } => {
                    let d = self.shape(*x)[1].max(1);
                    let dx = g.chunks(d).zip(coeffs).flat_map(|(r, c)| r.iter().map(move |v| v * c)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::L2Normalize { x, norms } => {
                    let y = self.value(NodeId(idx)).data();
                    let d = self.shape(*x)[1];
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..norms.len() {
                        let yr = &y[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for k in 0..d {
                            dx[r * d + k] = (gr[k] - yr[k] * dot) / norms[r];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Loss { x, grad } => {
                    let scale = g[0];
                    accumulate(&mut grads, *x, grad.iter().map(|v| v * scale).collect());
                }
            }
        }
        Ok(out)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

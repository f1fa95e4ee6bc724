use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Embedding;
use crate::audio::FeatureMap;
use crate::autodiff::{he_uniform, Archive, Graph, NodeId, ParamKind, ParamStore, Tensor};
use crate::error::{KwsError, Result};

/// Stage names in forward order; used for freezing.
pub const STAGES: [&str; 6] = ["conv1", "conv2", "conv3", "conv4", "conv5", "fc"];

/// Width and depth of the residual embedding network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingModelSpec {
    /// Output channels of conv1..conv5.
    pub channels: [usize; 5],
    /// Residual blocks in conv2..conv5.
    pub blocks: [usize; 4],
    pub embedding_dim: usize,
    pub n_mels: usize,
}

impl Default for EmbeddingModelSpec {
    /// Fast-ResNet-34 widths and depths.
    fn default() -> Self {
        Self {
            channels: [16, 16, 32, 64, 128],
            blocks: [3, 4, 6, 3],
            embedding_dim: 256,
            n_mels: 40,
        }
    }
}

impl EmbeddingModelSpec {
    /// Frequency/time strides of the first block in conv2..conv5.
    pub const STAGE_STRIDES: [usize; 4] = [1, 2, 2, 1];

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) || self.blocks.contains(&0) || self.embedding_dim == 0 {
            return Err(KwsError::invalid("model widths and depths must be positive"));
        }
        if self.n_mels < 4 {
            return Err(KwsError::invalid("n_mels must be at least 4"));
        }
        Ok(())
    }

    /// Expected `(channels, freq, time)` after each stage for `t` frames.
    pub fn stage_shapes(&self, t: usize) -> Vec<(String, [usize; 3])> {
        let ceil = |a: usize, b: usize| a.div_ceil(b);
        let f1 = ceil(self.n_mels, 2);
        let mut out = vec![("conv1".to_string(), [self.channels[0], f1, t])];
        let (mut f, mut tt) = (f1, t);
        for (s, &stride) in Self::STAGE_STRIDES.iter().enumerate() {
            f = ceil(f, stride);
            tt = ceil(tt, stride);
            out.push((format!("conv{}", s + 2), [self.channels[s + 1], f, tt]));
        }
        out.push(("freq_mean".to_string(), [self.channels[4], 1, tt]));
        out
    }
}

struct BnNames {
    gamma: String,
    beta: String,
    mean: String,
    var: String,
}

impl BnNames {
    fn new(prefix: &str) -> Self {
        Self {
            gamma: format!("{prefix}.gamma"),
            beta: format!("{prefix}.beta"),
            mean: format!("{prefix}.mean"),
            var: format!("{prefix}.var"),
        }
    }
}

fn add_bn(store: &mut ParamStore, prefix: &str, c: usize) -> Result<()> {
    let n = BnNames::new(prefix);
    store.add(n.gamma, Tensor::full(vec![c], 1.0), ParamKind::Weight)?;
    store.add(n.beta, Tensor::zeros(vec![c]), ParamKind::Weight)?;
    store.add(n.mean, Tensor::zeros(vec![c]), ParamKind::Buffer)?;
    store.add(n.var, Tensor::full(vec![c], 1.0), ParamKind::Buffer)?;
    Ok(())
}

fn add_conv(store: &mut ParamStore, name: &str, out: usize, inp: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let shape = [out, inp, k, k];
    store.add(name, he_uniform(&shape, inp * k * k, rng), ParamKind::Weight)?;
    Ok(())
}

/// Shape of one stage output, recorded during a traced forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageShape {
    pub stage: String,
    pub shape: Vec<usize>,
}

/// Residual embedding network: log-mel map in, embedding out.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    spec: EmbeddingModelSpec,
    params: ParamStore,
}

impl EmbeddingModel {
    pub fn new(spec: EmbeddingModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = spec.channels;
        add_conv(&mut p, "conv1.conv.w", c[0], 1, 7, &mut rng)?;
        add_bn(&mut p, "conv1.bn", c[0])?;
        for s in 0..4 {
            let stage = format!("conv{}", s + 2);
            for b in 0..spec.blocks[s] {
                let inp = if b == 0 { c[s] } else { c[s + 1] };
                let out = c[s + 1];
                let stride = if b == 0 { EmbeddingModelSpec::STAGE_STRIDES[s] } else { 1 };
                let pre = format!("{stage}.block{}", b + 1);
                add_conv(&mut p, &format!("{pre}.conv1.w"), out, inp, 3, &mut rng)?;
                add_bn(&mut p, &format!("{pre}.bn1"), out)?;
                add_conv(&mut p, &format!("{pre}.conv2.w"), out, out, 3, &mut rng)?;
                add_bn(&mut p, &format!("{pre}.bn2"), out)?;
                if stride != 1 || inp != out {
                    add_conv(&mut p, &format!("{pre}.down.w"), out, inp, 1, &mut rng)?;
                    add_bn(&mut p, &format!("{pre}.down_bn"), out)?;
                }
            }
        }
        p.add("fc.w", he_uniform(&[spec.embedding_dim, c[4]], c[4], &mut rng), ParamKind::Weight)?;
        p.add("fc.b", Tensor::zeros(vec![spec.embedding_dim]), ParamKind::Weight)?;
        Ok(Self { spec, params: p })
    }

    pub fn spec(&self) -> &EmbeddingModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Number of learned scalars (batch-norm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.params.weight_count()
    }

    /// Sets the trainable flag for every weight in the named stages.
    pub fn set_trainable(&mut self, stages: &[&str], trainable: bool) -> Result<()> {
        if let Some(bad) = stages.iter().find(|s| !STAGES.contains(s)) {
            return Err(KwsError::UnknownStage(bad.to_string()));
        }
        for s in stages {
            self.params.set_trainable_prefix(s, trainable);
        }
        Ok(())
    }

    /// Stages whose weights are all currently trainable.
    pub fn trainable_stages(&self) -> Vec<&'static str> {
        STAGES
            .iter()
            .copied()
            .filter(|s| {
                let dotted = format!("{s}.");
                self.params
                    .iter()
                    .filter(|p| p.kind == ParamKind::Weight && p.name.starts_with(&dotted))
                    .all(|p| p.trainable)
            })
            .collect()
    }

    fn conv_bn<'a>(
        &'a self,
        g: &mut Graph<'a>,
        x: NodeId,
        conv: &str,
        bn: &str,
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Result<NodeId> {
        let w = g.param(self.params.by_name(conv)?);
        let y = g.conv2d(x, w, stride, pad)?;
        let n = BnNames::new(bn);
        let gamma_p = self.params.by_name(&n.gamma)?;
        let batch_stats = g.is_training() && gamma_p.trainable;
        let gamma = g.param(gamma_p);
        let beta = g.param(self.params.by_name(&n.beta)?);
        g.batch_norm(y, gamma, beta, self.params.by_name(&n.mean)?, self.params.by_name(&n.var)?, batch_stats)
    }

    /// Forward pass for `x` shaped `B x 1 x n_mels x T`; returns the
    /// unnormalized `B x embedding_dim` output.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, x: NodeId) -> Result<NodeId> {
        Ok(self.forward_traced(g, x)?.0)
    }

    pub fn forward_traced<'a>(&'a self, g: &mut Graph<'a>, x: NodeId) -> Result<(NodeId, Vec<StageShape>)> {
        let xs = g.shape(x).to_vec();
        if xs.len() != 4 || xs[1] != 1 || xs[2] != self.spec.n_mels {
            return Err(KwsError::shape(
                "embed",
                format!("B x 1 x {} x T", self.spec.n_mels),
                format!("{xs:?}"),
            ));
        }
        if xs[3] < 4 {
            return Err(KwsError::shape("embed", "T >= 4 frames", xs[3]));
        }
        let mut trace = Vec::new();
        let mut record = |g: &Graph<'a>, stage: &str, id: NodeId| {
            trace.push(StageShape {
                stage: stage.to_string(),
                shape: g.shape(id)[1..].to_vec(),
            });
        };
        let h = self.conv_bn(g, x, "conv1.conv.w", "conv1.bn", [2, 1], [3, 3])?;
        let mut h = g.relu(h);
        record(g, "conv1", h);
        for s in 0..4 {
            let stage = format!("conv{}", s + 2);
            for b in 0..self.spec.blocks[s] {
                let stride = if b == 0 { EmbeddingModelSpec::STAGE_STRIDES[s] } else { 1 };
                let pre = format!("{stage}.block{}", b + 1);
                let y = self.conv_bn(g, h, &format!("{pre}.conv1.w"), &format!("{pre}.bn1"), [stride; 2], [1, 1])?;
                let y = g.relu(y);
                let y = self.conv_bn(g, y, &format!("{pre}.conv2.w"), &format!("{pre}.bn2"), [1, 1], [1, 1])?;
                let shortcut = if self.params.id(&format!("{pre}.down.w")).is_ok() {
                    self.conv_bn(g, h, &format!("{pre}.down.w"), &format!("{pre}.down_bn"), [stride; 2], [0, 0])?
                } else {
                    h
                };
                let sum = g.add(y, shortcut)?;
                h = g.relu(sum);
            }
            record(g, &stage, h);
        }
        let f = g.mean_axis(h, 2)?;
        record(g, "freq_mean", f);
        let tap = g.mean_axis(f, 3)?;
        let batch = xs[0];
        let tap = g.reshape(tap, vec![batch, self.spec.channels[4]])?;
        record(g, "tap", tap);
        let w = g.param(self.params.by_name("fc.w")?);
        let b = g.param(self.params.by_name("fc.b")?);
        let out = g.linear(tap, w, Some(b))?;
        record(g, "fc", out);
        Ok((out, trace))
    }

    /// Stacks feature maps into a `B x 1 x n_mels x T` tensor.
    pub fn batch_tensor(&self, features: &[&FeatureMap]) -> Result<Tensor> {
        let first = features.first().ok_or_else(|| KwsError::invalid("empty feature batch"))?;
        let (m, t) = (first.n_mels, first.n_frames);
        if m != self.spec.n_mels {
            return Err(KwsError::shape("embed", format!("{} mel bins", self.spec.n_mels), m));
        }
        let mut data = Vec::with_capacity(features.len() * m * t);
        for f in features {
            if f.n_mels != m || f.n_frames != t {
                return Err(KwsError::shape("embed", format!("{m}x{t}"), format!("{}x{}", f.n_mels, f.n_frames)));
            }
            data.extend_from_slice(&f.values);
        }
        Tensor::new(vec![features.len(), 1, m, t], data)
    }

    /// Inference-mode embeddings for a batch of equally sized feature maps.
    pub fn embed(&self, features: &[&FeatureMap]) -> Result<Vec<Embedding>> {
        let x = self.batch_tensor(features)?;
        let mut g = Graph::new(false);
        let xi = g.input(x);
        let out = self.forward(&mut g, xi)?;
        g.value(out)
            .data()
            .chunks(self.spec.embedding_dim)
            .map(|r| Embedding::new(r.to_vec()))
            .collect()
    }

    pub fn embed_one(&self, features: &FeatureMap) -> Result<Embedding> {
        Ok(self.embed(&[features])?.remove(0))
    }

    pub fn write_archive(&self, archive: &mut Archive) -> Result<()> {
        let spec = &self.spec;
        let as_tensor = |v: &[usize]| Tensor::new(vec![v.len()], v.iter().map(|&x| x as f64).collect());
        archive.push("__spec.channels", as_tensor(&spec.channels)?)?;
        archive.push("__spec.blocks", as_tensor(&spec.blocks)?)?;
        archive.push("__spec.embedding_dim", as_tensor(&[spec.embedding_dim])?)?;
        archive.push("__spec.n_mels", as_tensor(&[spec.n_mels])?)?;
        for p in self.params.iter() {
            archive.push(p.name.clone(), p.tensor.clone())?;
        }
        Ok(())
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let ints = |name: &str| -> Result<Vec<usize>> {
            Ok(archive.require(name)?.data().iter().map(|&v| v as usize).collect())
        };
        let channels: [usize; 5] = ints("__spec.channels")?
            .try_into()
            .map_err(|_| KwsError::Checkpoint("channels must have 5 entries".into()))?;
        let blocks: [usize; 4] = ints("__spec.blocks")?
            .try_into()
            .map_err(|_| KwsError::Checkpoint("blocks must have 4 entries".into()))?;
        let spec = EmbeddingModelSpec {
            channels,
            blocks,
            embedding_dim: ints("__spec.embedding_dim")?[0],
            n_mels: ints("__spec.n_mels")?[0],
        };
        let mut model = Self::new(spec, 0)?;
        for p in model.params.iter_mut() {
            let t = archive.require(&p.name)?;
            if t.shape() != p.tensor.shape() {
                return Err(KwsError::Checkpoint(format!("shape mismatch for `{}`", p.name)));
            }
            p.tensor = t.clone();
        }
        Ok(model)
    }

    /// Plain-text summary written next to checkpoints.
    pub fn model_card(&self) -> String {
        let s = &self.spec;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "architecture=fast-resnet\nchannels={}\nblocks={}\nembedding_dim={}\nn_mels={}\nconv1=7x7 stride 2x1\nstage_strides={}\nbatch_norm=conv-bn-relu momentum 0.9 eps 1e-5\npooling=frequency mean then temporal average\nparameters={}\n",
            join(&s.channels),
            join(&s.blocks),
            s.embedding_dim,
            s.n_mels,
            join(&EmbeddingModelSpec::STAGE_STRIDES),
            self.parameter_count()
        )
    }
}

/// Fully-connected classification layer attached on top of the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    n_classes: usize,
    input_dim: usize,
    params: ParamStore,
}

impl ClassifierHead {
    pub fn new(input_dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if n_classes == 0 || input_dim == 0 {
            return Err(KwsError::invalid("classifier head needs positive dimensions"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        params.add("head.w", he_uniform(&[n_classes, input_dim], input_dim, &mut rng), ParamKind::Weight)?;
        params.add("head.b", Tensor::zeros(vec![n_classes]), ParamKind::Weight)?;
        Ok(Self {
            n_classes,
            input_dim,
            params,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, embedding: NodeId) -> Result<NodeId> {
        let s = g.shape(embedding);
        if s.len() != 2 || s[1] != self.input_dim {
            return Err(KwsError::shape("classify", format!("B x {}", self.input_dim), format!("{s:?}")));
        }
        let w = g.param(self.params.by_name("head.w")?);
        let b = g.param(self.params.by_name("head.b")?);
        g.linear(embedding, w, Some(b))
    }

    /// Logits for each feature map in the batch.
    pub fn classify(&self, model: &EmbeddingModel, features: &[&FeatureMap]) -> Result<Vec<Vec<f64>>> {
        if model.spec().embedding_dim != self.input_dim {
            return Err(KwsError::shape("classify", self.input_dim, model.spec().embedding_dim));
        }
        let x = model.batch_tensor(features)?;
        let mut g = Graph::new(false);
        let xi = g.input(x);
        let e = model.forward(&mut g, xi)?;
        let logits = self.forward(&mut g, e)?;
        Ok(g.value(logits).data().chunks(self.n_classes).map(|r| r.to_vec()).collect())
    }

    pub fn write_archive(&self, archive: &mut Archive) -> Result<()> {
        archive.push("__head.classes", Tensor::scalar(self.n_classes as f64))?;
        for p in self.params.iter() {
            archive.push(p.name.clone(), p.tensor.clone())?;
        }
        Ok(())
    }

    /// `None` when the archive carries no head.
    pub fn from_archive(archive: &Archive) -> Result<Option<Self>> {
        let Some(n) = archive.get("__head.classes") else { return Ok(None) };
        let w = archive.require("head.w")?;
        let n_classes = n.item()? as usize;
        if w.rank() != 2 || w.shape()[0] != n_classes {
            return Err(KwsError::Checkpoint("head weight shape mismatch".into()));
        }
        let mut head = Self::new(w.shape()[1], n_classes, 0)?;
        head.params.by_name_mut("head.w")?.tensor = w.clone();
        head.params.by_name_mut("head.b")?.tensor = archive.require("head.b")?.clone();
        Ok(Some(head))
    }
}

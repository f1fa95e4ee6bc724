use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Embedding, StageShape};
use crate::autodiff::{he_uniform, uniform, Archive, Graph, NodeId, ParamKind, ParamStore, Tensor};
use crate::error::{KwsError, Result};

/// Phoneme-to-embedding regressor dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2ESpec {
    /// Number of real phonemes; the lookup table has one extra padding row.
    pub phoneme_vocab_size: usize,
    pub phoneme_embed_dim: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub output_dim: usize,
}

impl Default for P2ESpec {
    fn default() -> Self {
        Self {
            phoneme_vocab_size: 69,
            phoneme_embed_dim: 128,
            lstm_hidden: 256,
            lstm_layers: 2,
            output_dim: 256,
        }
    }
}

impl P2ESpec {
    pub fn validate(&self) -> Result<()> {
        if self.phoneme_vocab_size == 0
            || self.phoneme_embed_dim == 0
            || self.lstm_hidden == 0
            || self.lstm_layers == 0
            || self.output_dim == 0
        {
            return Err(KwsError::invalid("P2E dimensions must be positive"));
        }
        Ok(())
    }
}

pub const FORGET_BIAS: f64 = 1.0;

/// Lookup table, stacked LSTM and a projection of the mean hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct P2EModel {
    spec: P2ESpec,
    params: ParamStore,
}

impl P2EModel {
    pub fn new(spec: P2ESpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let h = spec.lstm_hidden;
        let mut table = uniform(&[spec.phoneme_vocab_size + 1, spec.phoneme_embed_dim], 1.0, &mut rng);
        table.data_mut()[..spec.phoneme_embed_dim].iter_mut().for_each(|v| *v = 0.0);
        p.add("p2e.lookup", table, ParamKind::Weight)?;
        let bound = 1.0 / (h as f64).sqrt();
        for l in 0..spec.lstm_layers {
            let inp = if l == 0 { spec.phoneme_embed_dim } else { h };
            p.add(format!("p2e.lstm{}.w_ih", l + 1), uniform(&[4 * h, inp], bound, &mut rng), ParamKind::Weight)?;
            p.add(format!("p2e.lstm{}.w_hh", l + 1), uniform(&[4 * h, h], bound, &mut rng), ParamKind::Weight)?;
            let mut b = uniform(&[4 * h], bound, &mut rng);
            // gate order: input, forget, cell, output
            b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = FORGET_BIAS);
            p.add(format!("p2e.lstm{}.b", l + 1), b, ParamKind::Weight)?;
        }
        p.add("p2e.fc.w", he_uniform(&[spec.output_dim, h], h, &mut rng), ParamKind::Weight)?;
        p.add("p2e.fc.b", Tensor::zeros(vec![spec.output_dim]), ParamKind::Weight)?;
        Ok(Self { spec, params: p })
    }

    pub fn spec(&self) -> &P2ESpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(KwsError::invalid("empty phoneme sequence"));
        }
        match ids.iter().find(|&&id| id == 0 || id > self.spec.phoneme_vocab_size) {
            Some(&id) => Err(KwsError::OutOfVocabulary {
                id,
                max: self.spec.phoneme_vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Forward pass over right-padded sequences. Each row of `batch` is
    /// a phoneme id sequence whose real part is followed only by zeros.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, batch: &[Vec<usize>]) -> Result<NodeId> {
        Ok(self.forward_traced(g, batch)?.0)
    }

    pub fn forward_traced<'a>(&'a self, g: &mut Graph<'a>, batch: &[Vec<usize>]) -> Result<(NodeId, Vec<StageShape>)> {
        if batch.is_empty() {
            return Err(KwsError::invalid("empty phoneme batch"));
        }
        let steps = batch.iter().map(Vec::len).max().unwrap_or(0);
        let mut lens = Vec::with_capacity(batch.len());
        for seq in batch {
            let n = seq.iter().take_while(|&&id| id != 0).count();
            if seq[n..].iter().any(|&id| id != 0) {
                return Err(KwsError::invalid("padding id 0 may only appear as right-padding"));
            }
            self.check_ids(&seq[..n])?;
            lens.push(n);
        }
        let b = batch.len();
        let h = self.spec.lstm_hidden;
        let mut trace = Vec::new();
        let table = g.param(self.params.by_name("p2e.lookup")?);
        let mut xs = Vec::with_capacity(steps);
        for t in 0..steps {
            let ids: Vec<usize> = batch.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
            xs.push(g.gather(table, &ids)?);
        }
        trace.push(StageShape {
            stage: "lookup".into(),
            shape: vec![self.spec.phoneme_embed_dim, steps],
        });
        for l in 1..=self.spec.lstm_layers {
            let w_ih = g.param(self.params.by_name(&format!("p2e.lstm{l}.w_ih"))?);
            let w_hh = g.param(self.params.by_name(&format!("p2e.lstm{l}.w_hh"))?);
            let bias = g.param(self.params.by_name(&format!("p2e.lstm{l}.b"))?);
            let mut state: Option<(NodeId, NodeId)> = None;
            let mut outs = Vec::with_capacity(steps);
            for &x in &xs {
                let mut gates = g.linear(x, w_ih, Some(bias))?;
                if let Some((hp, _)) = state {
                    let rec = g.linear(hp, w_hh, None)?;
                    gates = g.add(gates, rec)?;
                }
                let i = g.slice_cols(gates, 0, h)?;
                let i = g.sigmoid(i);
                let f = g.slice_cols(gates, h, h)?;
                let f = g.sigmoid(f);
                let c_in = g.slice_cols(gates, 2 * h, h)?;
                let c_in = g.tanh(c_in);
                let o = g.slice_cols(gates, 3 * h, h)?;
                let o = g.sigmoid(o);
                let mut c = g.mul(i, c_in)?;
                if let Some((_, cp)) = state {
                    let keep = g.mul(f, cp)?;
                    c = g.add(c, keep)?;
                }
                let tc = g.tanh(c);
                let hn = g.mul(o, tc)?;
                state = Some((hn, c));
                outs.push(hn);
            }
            xs = outs;
        }
        trace.push(StageShape {
            stage: "lstm".into(),
            shape: vec![h, steps],
        });
        // masked mean over each sequence's real steps
        let mut mean: Option<NodeId> = None;
        for (t, &ht) in xs.iter().enumerate() {
            let coeffs: Vec<f64> = lens.iter().map(|&n| if t < n { 1.0 / n as f64 } else { 0.0 }).collect();
            let term = g.scale_rows(ht, &coeffs)?;
            mean = Some(match mean {
                Some(m) => g.add(m, term)?,
                None => term,
            });
        }
        let mean = mean.expect("at least one step");
        trace.push(StageShape {
            stage: "mean".into(),
            shape: vec![h],
        });
        let w = g.param(self.params.by_name("p2e.fc.w")?);
        let bias = g.param(self.params.by_name("p2e.fc.b")?);
        let out = g.linear(mean, w, Some(bias))?;
        trace.push(StageShape {
            stage: "fc".into(),
            shape: vec![self.spec.output_dim],
        });
        debug_assert_eq!(g.shape(out), &[b, self.spec.output_dim]);
        Ok((out, trace))
    }

    /// Predicted embedding for one phoneme sequence.
    pub fn embed(&self, ids: &[usize]) -> Result<Embedding> {
        self.check_ids(ids)?;
        Ok(self.embed_batch(&[ids.to_vec()])?.remove(0))
    }

    pub fn embed_batch(&self, batch: &[Vec<usize>]) -> Result<Vec<Embedding>> {
        let mut g = Graph::new(false);
        let out = self.forward(&mut g, batch)?;
        g.value(out)
            .data()
            .chunks(self.spec.output_dim)
            .map(|r| Embedding::new(r.to_vec()))
            .collect()
    }

    pub fn write_archive(&self, archive: &mut Archive) -> Result<()> {
        let s = &self.spec;
        let dims = [
            s.phoneme_vocab_size,
            s.phoneme_embed_dim,
            s.lstm_hidden,
            s.lstm_layers,
            s.output_dim,
        ];
        archive.push("__p2e.spec", Tensor::new(vec![5], dims.iter().map(|&d| d as f64).collect())?)?;
        for p in self.params.iter() {
            archive.push(p.name.clone(), p.tensor.clone())?;
        }
        Ok(())
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let d: Vec<usize> = archive.require("__p2e.spec")?.data().iter().map(|&v| v as usize).collect();
        if d.len() != 5 {
            return Err(KwsError::Checkpoint("P2E spec must have 5 entries".into()));
        }
        let spec = P2ESpec {
            phoneme_vocab_size: d[0],
            phoneme_embed_dim: d[1],
            lstm_hidden: d[2],
            lstm_layers: d[3],
            output_dim: d[4],
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
}

//! Sliding-window keyword detection over continuous audio.

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, FeatureMap, Frontend, FrontendConfig};
use crate::enroll::{accepts, KeywordProfile};
use crate::error::{KwsError, Result};
use crate::model::{Embedding, EmbeddingModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Seconds.
    pub window: f64,
    pub stride: f64,
    /// Minimum spacing between two events of the same keyword.
    pub suppression: f64,
    pub threshold: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window: 1.0,
            stride: 0.1,
            suppression: 1.0,
            threshold: 0.8,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(KwsError::invalid("window must be positive"));
        }
        if !(self.stride > 0.0 && self.stride <= self.window) {
            return Err(KwsError::invalid("stride must lie in (0, window]"));
        }
        if !(self.suppression >= 0.0) {
            return Err(KwsError::invalid("suppression must be nonnegative"));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(KwsError::OutOfRange {
                what: "threshold",
                value: self.threshold,
                min: -1.0,
                max: 1.0,
            });
        }
        Ok(())
    }

    /// `(window, stride, suppression)` in samples.
    pub fn samples(&self, rate: u32) -> (usize, usize, usize) {
        let r = rate as f64;
        (
            (self.window * r).round() as usize,
            ((self.stride * r).round() as usize).max(1),
            (self.suppression * r).round() as usize,
        )
    }
}

/// Number of full windows in `len` samples; partial tails are skipped.
pub fn window_count(len: usize, window: usize, stride: usize) -> Result<usize> {
    if len < window {
        return Err(KwsError::AudioTooShort { len, needed: window });
    }
    Ok((len - window) / stride + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub keyword: String,
    /// Window center in seconds.
    pub time: f64,
    pub score: f64,
}

impl DetectionEvent {
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"keyword\":{},\"time\":{:.3},\"score\":{:.4}}}",
            serde_json::Value::String(self.keyword.clone()),
            self.time,
            self.score
        )
    }
}

/// Per-window similarity source; one score per keyword.
pub trait WindowScorer {
    fn keywords(&self) -> Vec<String>;
    fn score_window(&mut self, window: &AudioClip) -> Result<Vec<f64>>;
}

/// Log-mel features, embedding network and cosine scoring.
pub struct EmbeddingScorer<'m> {
    model: &'m EmbeddingModel,
    frontend: Frontend,
    profiles: Vec<KeywordProfile>,
}

impl<'m> EmbeddingScorer<'m> {
    pub fn new(model: &'m EmbeddingModel, profiles: Vec<KeywordProfile>, frontend: FrontendConfig) -> Result<Self> {
        if profiles.is_empty() {
            return Err(KwsError::invalid("no keyword profiles"));
        }
        for p in &profiles {
            if p.embedding.dim() != model.spec().embedding_dim {
                return Err(KwsError::shape("score", model.spec().embedding_dim, p.embedding.dim()));
            }
        }
        Ok(Self {
            model,
            frontend: Frontend::new(frontend)?,
            profiles,
        })
    }

    pub fn features(&self, window: &AudioClip) -> Result<FeatureMap> {
        self.frontend.compute(window)
    }

    pub fn embed(&self, window: &AudioClip) -> Result<Embedding> {
        self.model.embed_one(&self.features(window)?)
    }
}

impl WindowScorer for EmbeddingScorer<'_> {
    fn keywords(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.keyword.clone()).collect()
    }

    fn score_window(&mut self, window: &AudioClip) -> Result<Vec<f64>> {
        let e = self.embed(window)?;
        self.profiles.iter().map(|p| p.embedding.cosine(&e)).collect()
    }
}

/// Threshold-independent per-window scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub keywords: Vec<String>,
    pub sample_rate: u32,
    pub window: usize,
    pub stride: usize,
    /// `scores[i][k]`: window `i`, keyword `k`.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTrace {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Center of window `i` in seconds.
    pub fn time(&self, i: usize) -> f64 {
        (i * self.stride) as f64 / self.sample_rate as f64 + self.window as f64 / (2.0 * self.sample_rate as f64)
    }

    /// Comma-separated `time,<keyword>...` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for k in &self.keywords {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for (i, row) in self.scores.iter().enumerate() {
            s.push_str(&format!("{:.3}", self.time(i)));
            for v in row {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn score_trace(audio: &AudioClip, scorer: &mut dyn WindowScorer, cfg: &StreamConfig) -> Result<ScoreTrace> {
    cfg.validate()?;
    let (w, s, _) = cfg.samples(audio.sample_rate);
    let n = window_count(audio.len(), w, s)?;
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        scores.push(scorer.score_window(&audio.window(i * s, w))?);
    }
    Ok(ScoreTrace {
        keywords: scorer.keywords(),
        sample_rate: audio.sample_rate,
        window: w,
        stride: s,
        scores,
    })
}

/// Per-keyword suppression state clocked in window indices.
#[derive(Debug, Clone)]
struct Suppressor {
    last: Vec<Option<usize>>,
    stride: usize,
    suppression: usize,
}

impl Suppressor {
    fn new(n_keywords: usize, stride: usize, suppression: usize) -> Self {
        Self {
            last: vec![None; n_keywords],
            stride,
            suppression,
        }
    }

    /// Applies the decision rule to window `i`; returns the emitting keyword.
    fn step(&mut self, i: usize, scores: &[f64], threshold: f64) -> Option<usize> {
        let (k, &best) = scores
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (k, v)| match acc {
                Some((_, b)) if *b >= *v => acc,
                _ => Some((k, v)),
            })?;
        if !accepts(best, threshold) {
            return None;
        }
        if let Some(j) = self.last[k] {
            if (i - j) * self.stride < self.suppression {
                return None;
            }
        }
        self.last[k] = Some(i);
        Some(k)
    }
}

/// Thresholding plus per-keyword suppression applied to a trace.
pub fn detect_from_trace(trace: &ScoreTrace, threshold: f64, suppression: f64) -> Vec<DetectionEvent> {
    let supp = (suppression * trace.sample_rate as f64).round() as usize;
    let mut sup = Suppressor::new(trace.keywords.len(), trace.stride, supp);
    let mut out = Vec::new();
    for (i, row) in trace.scores.iter().enumerate() {
        if let Some(k) = sup.step(i, row, threshold) {
            out.push(DetectionEvent {
                keyword: trace.keywords[k].clone(),
                time: trace.time(i),
                score: row[k],
            });
        }
    }
    out
}

/// Online detector fed with successive chunks of one audio stream.
pub struct StreamDetector<S: WindowScorer> {
    scorer: S,
    cfg: StreamConfig,
    rate: u32,
    window: usize,
    stride: usize,
    keywords: Vec<String>,
    buffer: Vec<f32>,
    /// Absolute sample index of `buffer[0]`.
    offset: usize,
    next_window: usize,
    suppressor: Suppressor,
}

impl<S: WindowScorer> StreamDetector<S> {
    pub fn new(scorer: S, cfg: StreamConfig, rate: u32) -> Result<Self> {
        cfg.validate()?;
        let (window, stride, supp) = cfg.samples(rate);
        let keywords = scorer.keywords();
        if keywords.is_empty() {
            return Err(KwsError::invalid("no keyword profiles"));
        }
        Ok(Self {
            suppressor: Suppressor::new(keywords.len(), stride, supp),
            scorer,
            cfg,
            rate,
            window,
            stride,
            keywords,
            buffer: Vec::new(),
            offset: 0,
            next_window: 0,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    /// Windows evaluated so far.
    pub fn windows_seen(&self) -> usize {
        self.next_window
    }

    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<DetectionEvent>> {
        self.buffer.extend_from_slice(samples);
        let mut events = Vec::new();
        loop {
            let start = self.next_window * self.stride;
            let local = start - self.offset;
            if local + self.window > self.buffer.len() {
                break;
            }
            let clip = AudioClip {
                samples: self.buffer[local..local + self.window].to_vec(),
                sample_rate: self.rate,
            };
            let scores = self.scorer.score_window(&clip)?;
            let i = self.next_window;
            if let Some(k) = self.suppressor.step(i, &scores, self.cfg.threshold) {
                events.push(DetectionEvent {
                    keyword: self.keywords[k].clone(),
                    time: (i * self.stride) as f64 / self.rate as f64 + self.window as f64 / (2.0 * self.rate as f64),
                    score: scores[k],
                });
            }
            self.next_window += 1;
        }
        // drop samples no future window can reach
        let keep_from = self.next_window * self.stride - self.offset;
        if keep_from > 0 {
            let drop = keep_from.min(self.buffer.len());
            self.buffer.drain(..drop);
            self.offset += drop;
        }
        Ok(events)
    }
}

/// One-shot detection over a complete recording.
pub fn stream_detect(audio: &AudioClip, scorer: &mut dyn WindowScorer, cfg: &StreamConfig) -> Result<Vec<DetectionEvent>> {
    let trace = score_trace(audio, scorer, cfg)?;
    Ok(detect_from_trace(&trace, cfg.threshold, cfg.suppression))
}

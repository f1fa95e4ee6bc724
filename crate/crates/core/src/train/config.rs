use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{KwsError, Result};
use crate::losses::CircleParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    /// Last epoch of the flat phase before cosine annealing.
    pub anneal_start: usize,
    /// When set, `lr = initial_lr * lr_decay^(epoch - 1)` instead of cosine.
    pub lr_decay: Option<f64>,
    pub batch_size: usize,
    /// Samples per class in P-K batches.
    pub pk_p: usize,
    /// Classes per P-K batch.
    pub pk_k: usize,
    pub seed: u64,
    pub gamma: f64,
    pub margin: f64,
    /// Enrollment shots for validation EER.
    pub eval_shots: usize,
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Emit `key=value` progress lines on stderr.
    #[serde(skip)]
    pub progress: bool,
}

impl TrainConfig {
    pub fn classification() -> Self {
        Self {
            epochs: 40,
            initial_lr: 0.001,
            anneal_start: 10,
            lr_decay: None,
            batch_size: crate::data::BALANCED_BATCH_SIZE,
            pk_p: crate::data::PK_P,
            pk_k: crate::data::PK_K,
            seed: 0,
            gamma: CircleParams::default().gamma,
            margin: CircleParams::default().margin,
            eval_shots: 5,
            checkpoint_dir: None,
            progress: false,
        }
    }

    pub fn circle() -> Self {
        Self {
            epochs: 10,
            anneal_start: 3,
            ..Self::classification()
        }
    }

    pub fn p2e() -> Self {
        Self {
            epochs: 60,
            anneal_start: 30,
            batch_size: 32,
            ..Self::classification()
        }
    }

    pub fn baseline() -> Self {
        Self {
            epochs: 10,
            anneal_start: 10,
            lr_decay: Some(0.7),
            batch_size: 12,
            ..Self::classification()
        }
    }

    pub fn circle_params(&self) -> CircleParams {
        CircleParams {
            gamma: self.gamma,
            margin: self.margin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(KwsError::invalid("epochs must be at least 1"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(KwsError::invalid("initial_lr must be positive"));
        }
        if self.batch_size == 0 || self.pk_p == 0 || self.pk_k == 0 || self.eval_shots == 0 {
            return Err(KwsError::invalid("batch parameters must be positive"));
        }
        if let Some(d) = self.lr_decay {
            if !(d > 0.0 && d <= 1.0) {
                return Err(KwsError::invalid("lr_decay must lie in (0, 1]"));
            }
        }
        self.circle_params().validate()
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| KwsError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            self.set(k.trim(), v.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = crate::io::read_to_string(path)?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Sets one documented key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| KwsError::invalid(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "initial_lr" => self.initial_lr = num(key, value)?,
            "anneal_start" => self.anneal_start = num(key, value)?,
            "lr_decay" => {
                self.lr_decay = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "batch_size" => self.batch_size = num(key, value)?,
            "pk_p" => self.pk_p = num(key, value)?,
            "pk_k" => self.pk_k = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "eval_shots" => self.eval_shots = num(key, value)?,
            _ => return Err(KwsError::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}

/// Learning rate for `epoch` (counted from 1).
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > cfg.epochs {
        return Err(KwsError::OutOfRange {
            what: "epoch",
            value: epoch as f64,
            min: 1.0,
            max: cfg.epochs as f64,
        });
    }
    if let Some(d) = cfg.lr_decay {
        return Ok(cfg.initial_lr * d.powi(epoch as i32 - 1));
    }
    if epoch <= cfg.anneal_start || cfg.epochs <= cfg.anneal_start {
        return Ok(cfg.initial_lr);
    }
    let frac = (epoch - cfg.anneal_start) as f64 / (cfg.epochs - cfg.anneal_start) as f64;
    Ok(cfg.initial_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

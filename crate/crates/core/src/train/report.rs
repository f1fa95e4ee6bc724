use serde::Serialize;

use super::TrainConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_eer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    /// Batches without both positive and negative pairs.
    pub degenerate_batches: usize,
    /// Excluded from serialized reports so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub stage: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn new(stage: &str, config: &TrainConfig) -> Self {
        Self {
            stage: stage.to_string(),
            config: config.clone(),
            epochs: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    /// One header record with the configuration, then one per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = serde_json::to_string(&serde_json::json!({
            "stage": self.stage,
            "config": self.config,
        }))?;
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub(crate) fn push(&mut self, record: EpochRecord) {
        if self.config.progress {
            let mut line = format!(
                "stage={} epoch={}/{} lr={:.6} loss={:.6}",
                self.stage, record.epoch, self.config.epochs, record.lr, record.loss
            );
            if let Some(v) = record.val_accuracy {
                line.push_str(&format!(" val_acc={v:.4}"));
            }
            if let Some(v) = record.val_eer {
                line.push_str(&format!(" val_eer={v:.4}"));
            }
            if let Some(v) = record.val_loss {
                line.push_str(&format!(" val_loss={v:.6}"));
            }
            line.push_str(&format!(" secs={:.1}", record.wall_seconds));
            eprintln!("{line}");
        }
        self.epochs.push(record);
    }
}

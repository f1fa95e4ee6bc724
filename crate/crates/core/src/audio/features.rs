use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::AudioClip;
use crate::error::{KwsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    /// Analysis window length in seconds.
    pub window_len: f64,
    /// Frame step in seconds.
    pub hop: f64,
    pub fft_size: usize,
    pub mel_low: f64,
    pub mel_high: f64,
    /// Floor applied after max-normalization, before the natural log.
    pub floor_eps: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: super::SAMPLE_RATE,
            n_mels: 40,
            window_len: 0.025,
            hop: 0.010,
            fft_size: 512,
            mel_low: 20.0,
            mel_high: 7600.0,
            floor_eps: 1e-6,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_len * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop * self.sample_rate as f64).round() as usize
    }

    /// Frames produced for `len` samples, `None` when shorter than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        let win = self.window_samples();
        (len >= win).then(|| (len - win) / self.hop_samples() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_len > self.hop && self.hop > 0.0) {
            return Err(KwsError::invalid("frontend requires window_len > hop > 0"));
        }
        if self.n_mels == 0 {
            return Err(KwsError::invalid("n_mels must be at least 1"));
        }
        if !(self.mel_low < self.mel_high && self.mel_high <= self.sample_rate as f64 / 2.0) {
            return Err(KwsError::invalid("mel range must satisfy low < high <= nyquist"));
        }
        if self.fft_size < self.window_samples() {
            return Err(KwsError::invalid("fft_size smaller than the analysis window"));
        }
        if !(self.floor_eps > 0.0) {
            return Err(KwsError::invalid("floor_eps must be positive"));
        }
        Ok(())
    }
}

/// `n_mels x frames` log-mel matrix, row-major by mel bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f64>,
    /// Center time of each frame in seconds.
    pub frame_times: Vec<f64>,
}

impl FeatureMap {
    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the triangular filters.
pub fn mel_center_frequencies(cfg: &FrontendConfig) -> Vec<f64> {
    let edges = mel_edges(cfg);
    edges[1..=cfg.n_mels].to_vec()
}

fn mel_edges(cfg: &FrontendConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.mel_low);
    let hi = hz_to_mel(cfg.mel_high);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular unit-peak filters on the HTK mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_bins: usize,
    // (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Self {
        let n_bins = cfg.fft_size / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let edges = mel_edges(cfg);
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self { n_bins, filters }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Reusable front end: FFT plan, window and filterbank built once.
pub struct Frontend {
    cfg: FrontendConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bank: MelFilterbank,
}

impl std::fmt::Debug for Frontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frontend").field("cfg", &self.cfg).finish()
    }
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let n = cfg.window_samples();
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let bank = MelFilterbank::new(&cfg);
        Ok(Self {
            cfg,
            fft,
            window,
            bank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Mel energies before normalization, `n_mels x frames`.
    pub fn mel_energies(&self, clip: &AudioClip) -> Result<(Vec<f64>, usize)> {
        let cfg = &self.cfg;
        if clip.sample_rate != cfg.sample_rate {
            return Err(KwsError::InvalidAudio(format!(
                "expected {} Hz audio, got {} Hz",
                cfg.sample_rate, clip.sample_rate
            )));
        }
        let win = cfg.window_samples();
        let hop = cfg.hop_samples();
        let frames = cfg.frame_count(clip.len()).ok_or(KwsError::AudioTooShort {
            len: clip.len(),
            needed: win,
        })?;
        let n_mels = cfg.n_mels;
        let mut energies = vec![0.0; n_mels * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; self.bank.n_bins()];
        let mut mel = vec![0.0; n_mels];
        for t in 0..frames {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < win {
                    Complex::new(clip.samples[start + i] as f64 * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p = b.norm_sqr();
            }
            self.bank.apply(&power, &mut mel);
            for (m, &e) in mel.iter().enumerate() {
                energies[m * frames + t] = e;
            }
        }
        Ok((energies, frames))
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<FeatureMap> {
        let (mut values, frames) = self.mel_energies(clip)?;
        let global_max = values.iter().copied().fold(0.0f64, f64::max);
        let eps = self.cfg.floor_eps;
        for v in values.iter_mut() {
            let normalized = if global_max > 0.0 { *v / global_max } else { 0.0 };
            *v = normalized.max(eps).ln();
        }
        let hop = self.cfg.hop_samples() as f64;
        let half = self.cfg.window_samples() as f64 / 2.0;
        let sr = self.cfg.sample_rate as f64;
        Ok(FeatureMap {
            n_mels: self.cfg.n_mels,
            n_frames: frames,
            values,
            frame_times: (0..frames).map(|t| (t as f64 * hop + half) / sr).collect(),
        })
    }
}

/// One-shot log-mel extraction; use [`Frontend`] when processing many clips.
pub fn compute_logmel(clip: &AudioClip, cfg: &FrontendConfig) -> Result<FeatureMap> {
    Frontend::new(cfg.clone())?.compute(clip)
}

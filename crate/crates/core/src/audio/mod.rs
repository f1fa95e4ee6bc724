//! Audio clips, WAV I/O and the log-mel front end.

mod features;
mod transforms;

use std::path::Path;

pub use features::{compute_logmel, mel_center_frequencies, FeatureMap, Frontend, FrontendConfig, MelFilterbank};
pub use transforms::{apply_rir, mix_at_snr, resample_rate, signal_support, time_shift, MAX_SHIFT_S, RESAMPLE_RANGE};

use crate::error::{KwsError, Result};

/// Canonical sample rate of every clip that reaches the model.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(KwsError::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(KwsError::InvalidAudio("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Sample slice `[start, end)`; indices past the end read as silence.
    pub fn window(&self, start: usize, len: usize) -> AudioClip {
        let mut out = vec![0.0f32; len];
        if start < self.samples.len() {
            let n = len.min(self.samples.len() - start);
            out[..n].copy_from_slice(&self.samples[start..start + n]);
        }
        AudioClip {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    /// Appends `other`; both must share a sample rate.
    pub fn extend(&mut self, other: &AudioClip) -> Result<()> {
        if other.sample_rate != self.sample_rate {
            return Err(KwsError::InvalidAudio(format!(
                "sample rate mismatch: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        self.samples.extend_from_slice(&other.samples);
        Ok(())
    }
}

/// Pluggable decoder so other codecs can be wired in upstream of the model.
pub trait AudioDecoder: Send + Sync {
    fn decode(&self, path: &Path) -> Result<AudioClip>;
}

/// Single-channel PCM16 RIFF/WAVE reader.
#[derive(Debug, Default, Clone, Copy)]
pub struct WavDecoder;

impl AudioDecoder for WavDecoder {
    fn decode(&self, path: &Path) -> Result<AudioClip> {
        read_wav(path)
    }
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => KwsError::io(path, io),
        other => KwsError::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(KwsError::InvalidAudio(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(KwsError::InvalidAudio(format!(
            "{}: expected 16-bit PCM",
            path.display()
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes PCM16 mono; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let bytes = encode_wav(clip)?;
    crate::io::write_atomic(path, &bytes)
}

pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for &s in &clip.samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioClip::new(vec![0.0, f32::NAN], 16000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn wav_round_trip_quantizes_to_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 0.999], 16000).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = WavDecoder.decode(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn window_pads_past_end() {
        let clip = AudioClip::new(vec![1.0, 2.0, 3.0], 16000).unwrap();
        assert_eq!(clip.window(1, 4).samples, vec![2.0, 3.0, 0.0, 0.0]);
        assert_eq!(clip.window(5, 2).samples, vec![0.0, 0.0]);
    }
}

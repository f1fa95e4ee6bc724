//! Signal-level augmentation transforms. All pure and deterministic.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{KwsError, Result};

pub const RESAMPLE_RANGE: (f64, f64) = (0.85, 1.15);
pub const MAX_SHIFT_S: f64 = 0.05;

const RANGE_TOL: f64 = 1e-9;
/// Amplitude below which a sample counts as silence for SNR support.
const SILENCE_LEVEL: f32 = 1e-4;

/// Time-scales the clip by `factor` (speaking-rate change) using linear
/// interpolation. Output length is `round(len / factor)`.
pub fn resample_rate(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    let (lo, hi) = RESAMPLE_RANGE;
    if !(factor >= lo - RANGE_TOL && factor <= hi + RANGE_TOL) {
        return Err(KwsError::OutOfRange {
            what: "resample factor",
            value: factor,
            min: lo,
            max: hi,
        });
    }
    let n_in = clip.len();
    let n_out = (n_in as f64 / factor).round() as usize;
    if factor == 1.0 {
        return Ok(clip.clone());
    }
    let x = &clip.samples;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * factor;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            let a = x.get(i0).copied().unwrap_or(0.0) as f64;
            let b = x.get(i0 + 1).copied().unwrap_or(0.0) as f64;
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Moves content by `round(shift * rate)` samples (positive = later),
/// zero-filling the vacated region.
pub fn time_shift(clip: &AudioClip, shift: f64) -> Result<AudioClip> {
    if !(shift.abs() <= MAX_SHIFT_S + RANGE_TOL) {
        return Err(KwsError::OutOfRange {
            what: "time shift",
            value: shift,
            min: -MAX_SHIFT_S,
            max: MAX_SHIFT_S,
        });
    }
    let n = clip.len();
    let offset = (shift * clip.sample_rate as f64).round() as i64;
    let mut out = vec![0.0f32; n];
    for (i, o) in out.iter_mut().enumerate() {
        let src = i as i64 - offset;
        if src >= 0 && (src as usize) < n {
            *o = clip.samples[src as usize];
        }
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    })
}

/// `[first, last]` range of samples above the silence level, if any.
pub fn signal_support(samples: &[f32]) -> Option<(usize, usize)> {
    let first = samples.iter().position(|s| s.abs() > SILENCE_LEVEL)?;
    let last = samples.iter().rposition(|s| s.abs() > SILENCE_LEVEL)?;
    Some((first, last + 1))
}

fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}

/// Noise tiled or cropped from its start to `len` samples.
fn fit_noise(noise: &[f32], len: usize) -> Vec<f32> {
    noise.iter().copied().cycle().take(len).collect()
}

/// Adds `noise` scaled so that clean-to-noise power over the non-silent
/// support of `clean` equals `snr_db`.
pub fn mix_at_snr(clean: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    if clean.sample_rate != noise.sample_rate {
        return Err(KwsError::InvalidAudio("sample rate mismatch between clean and noise".into()));
    }
    if noise.is_empty() {
        return Err(KwsError::DegenerateSnr("empty noise"));
    }
    let (start, end) = signal_support(&clean.samples).ok_or(KwsError::DegenerateSnr("zero-energy clean signal"))?;
    let noise = fit_noise(&noise.samples, clean.len());
    let e_clean = mean_power(&clean.samples[start..end]);
    let e_noise = mean_power(&noise[start..end]);
    if e_noise <= 0.0 {
        return Err(KwsError::DegenerateSnr("zero-energy noise"));
    }
    let gain = (e_clean / (e_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(&noise)
        .map(|(&c, &n)| (c as f64 + gain * n as f64) as f32)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clean.sample_rate,
    })
}

/// Full linear convolution, truncated to the input length and rescaled so
/// the output peak matches the input peak.
pub fn apply_rir(clip: &AudioClip, rir: &AudioClip) -> Result<AudioClip> {
    if clip.sample_rate != rir.sample_rate {
        return Err(KwsError::InvalidAudio("sample rate mismatch between clip and RIR".into()));
    }
    if rir.is_empty() || rir.samples.iter().all(|&s| s == 0.0) {
        return Err(KwsError::InvalidAudio("room impulse response is all zeros".into()));
    }
    let n = clip.len();
    let full = n + rir.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let to_complex = |x: &[f32]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut a = to_complex(&clip.samples);
    let mut b = to_complex(&rir.samples);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = a[..n].iter().map(|c| c.re * scale).collect();
    let in_peak = clip.peak() as f64;
    let out_peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if out_peak > 0.0 && in_peak > 0.0 {
        let g = in_peak / out_peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Ok(AudioClip {
        samples: out.into_iter().map(|v| v as f32).collect(),
        sample_rate: clip.sample_rate,
    })
}

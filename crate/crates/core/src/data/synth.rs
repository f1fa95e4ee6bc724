//! Seeded synthetic stand-ins for noise corpora and room responses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioClip;

fn clip(samples: Vec<f64>, rate: u32) -> AudioClip {
    AudioClip {
        samples: samples.into_iter().map(|v| v as f32).collect(),
        sample_rate: rate,
    }
}

fn peak_normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// White or pink noise.
pub fn noise(len: usize, rate: u32, rng: &mut impl Rng) -> AudioClip {
    let pink = rng.gen_bool(0.5);
    let mut b = [0.0f64; 7];
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            if !pink {
                return w;
            }
            // Kellet's pinking filter
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect();
    peak_normalize(&mut x, 0.5);
    clip(x, rate)
}

/// Several overlapping harmonic voices with syllabic amplitude modulation.
pub fn babble(len: usize, rate: u32, rng: &mut impl Rng) -> AudioClip {
    let sr = rate as f64;
    let mut x = vec![0.0f64; len];
    for _ in 0..rng.gen_range(3..6) {
        let f0: f64 = rng.gen_range(90.0..240.0);
        let vibrato: f64 = rng.gen_range(2.0..6.0);
        let syl: f64 = rng.gen_range(3.0..6.0);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let mut acc = 0.0;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + 0.05 * (2.0 * PI * vibrato * t).sin());
            acc += 2.0 * PI * f / sr;
            let env = (PI * syl * t + phase).sin().abs();
            let s: f64 = (1..=10).map(|k| (acc * k as f64).sin() / k as f64).sum();
            *v += env * s;
        }
    }
    peak_normalize(&mut x, 0.5);
    clip(x, rate)
}

/// Chord sequence with note changes every quarter second.
pub fn music(len: usize, rate: u32, rng: &mut impl Rng) -> AudioClip {
    let sr = rate as f64;
    let step = (0.25 * sr) as usize;
    let mut x = vec![0.0f64; len];
    for (c, chunk) in x.chunks_mut(step.max(1)).enumerate() {
        let notes: Vec<f64> = (0..3)
            .map(|_| 440.0 * 2f64.powf((rng.gen_range(48..84) as f64 - 69.0) / 12.0))
            .collect();
        for (i, v) in chunk.iter_mut().enumerate() {
            let t = (c * step + i) as f64 / sr;
            let decay = (-(i as f64) / (0.15 * sr)).exp();
            *v = decay * notes.iter().map(|f| (2.0 * PI * f * t).sin()).sum::<f64>();
        }
    }
    peak_normalize(&mut x, 0.5);
    clip(x, rate)
}

/// Exponentially decaying noise tail after a direct-path impulse.
pub fn room_impulse(rate: u32, rng: &mut impl Rng) -> AudioClip {
    let sr = rate as f64;
    let rt60: f64 = rng.gen_range(0.2..0.7);
    let len = (rt60 * sr) as usize;
    let pre = rng.gen_range(0..(0.005 * sr) as usize + 1);
    let mut h = vec![0.0f64; pre + len];
    h[pre] = 1.0;
    for i in 1..len {
        let n: f64 = StandardNormal.sample(rng);
        h[pre + i] = 0.3 * n * (-6.9 * i as f64 / (rt60 * sr)).exp();
    }
    clip(h, rate)
}

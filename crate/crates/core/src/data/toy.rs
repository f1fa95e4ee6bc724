//! Seeded synthetic corpus: "words" are sequences of tone and chirp units,
//! each unit carrying a made-up consonant-vowel name and pronunciation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ClipVariant, KeywordClip};
use crate::audio::AudioClip;
use crate::error::{KwsError, Result};
use crate::model::PhonemeInventory;

const BASE_FREQS: [f64; 5] = [400.0, 650.0, 1050.0, 1700.0, 2750.0];
const GLIDE: f64 = 1.5;
const SYLLABLES: [(&str, &str, &str); 15] = [
    ("ba", "B", "AA1"),
    ("ko", "K", "OW1"),
    ("mi", "M", "IY1"),
    ("tu", "T", "UW1"),
    ("se", "S", "EH1"),
    ("ra", "R", "AA0"),
    ("lo", "L", "OW0"),
    ("ni", "N", "IH1"),
    ("pu", "P", "UH1"),
    ("de", "D", "EY1"),
    ("ga", "G", "AE1"),
    ("vo", "V", "AO1"),
    ("zi", "Z", "IY0"),
    ("fu", "F", "UW0"),
    ("he", "HH", "EH0"),
];

/// Number of distinct units.
pub const N_UNITS: usize = SYLLABLES.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyUnit {
    pub f_start: f64,
    pub f_end: f64,
}

pub fn toy_unit(u: usize) -> ToyUnit {
    let f = BASE_FREQS[u % BASE_FREQS.len()];
    let (a, b) = match u / BASE_FREQS.len() {
        0 => (f, f),
        1 => (f, f * GLIDE),
        _ => (f, f / GLIDE),
    };
    ToyUnit { f_start: a, f_end: b }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyWord {
    pub name: String,
    pub units: Vec<usize>,
}

impl ToyWord {
    /// Phoneme ids under the ARPAbet inventory, two per unit.
    pub fn phonemes(&self, inv: &PhonemeInventory) -> Vec<usize> {
        self.units
            .iter()
            .flat_map(|&u| {
                let (_, c, v) = SYLLABLES[u];
                [inv.id(c).expect("consonant in inventory"), inv.id(v).expect("vowel in inventory")]
            })
            .collect()
    }
}

/// Words with pairwise distinct unit sets differing in at least two units.
#[derive(Debug, Clone)]
pub struct ToyVocabulary {
    pub words: Vec<ToyWord>,
}

impl ToyVocabulary {
    pub fn generate(n_words: usize, units_per_word: usize, seed: u64) -> Result<Self> {
        if !(2..=6).contains(&units_per_word) {
            return Err(KwsError::invalid("units per word must be in 2..=6"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words: Vec<ToyWord> = Vec::with_capacity(n_words);
        let mut attempts = 0;
        let all: Vec<usize> = (0..N_UNITS).collect();
        while words.len() < n_words {
            attempts += 1;
            if attempts > 100_000 {
                return Err(KwsError::invalid(format!("cannot build {n_words} distinct toy words")));
            }
            let units: Vec<usize> = all.choose_multiple(&mut rng, units_per_word).copied().collect();
            let distinct = words.iter().all(|w| {
                let shared = w.units.iter().filter(|u| units.contains(u)).count();
                units_per_word - shared >= 2
            });
            if distinct {
                let name = units.iter().map(|&u| SYLLABLES[u].0).collect();
                words.push(ToyWord { name, units });
            }
        }
        Ok(Self { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.words.iter().map(|w| w.name.clone()).collect()
    }
}

/// Renders one utterance of `word` with seeded speaker-like variation
/// (pitch, tempo, level, timbre, noise floor).
pub fn render_word(word: &ToyWord, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = rate as f64;
    let pitch: f64 = rng.gen_range(0.94..1.06);
    let tempo: f64 = rng.gen_range(0.85..1.15);
    let level: f64 = rng.gen_range(0.2..0.8);
    let second: f64 = rng.gen_range(0.0..0.5);
    let mut out: Vec<f64> = Vec::new();
    for (i, &u) in word.units.iter().enumerate() {
        if i > 0 {
            let gap = (rng.gen_range(0.01..0.04) * tempo * sr) as usize;
            out.extend(std::iter::repeat(0.0).take(gap));
        }
        let unit = toy_unit(u);
        let dur = rng.gen_range(0.09..0.15) * tempo;
        let n = (dur * sr) as usize;
        let ramp = (0.01 * sr) as usize;
        let mut phase = rng.gen_range(0.0..2.0 * PI);
        for k in 0..n {
            let frac = k as f64 / n as f64;
            let f = pitch * unit.f_start * (unit.f_end / unit.f_start).powf(frac);
            phase += 2.0 * PI * f / sr;
            let env = if k < ramp {
                k as f64 / ramp as f64
            } else if k + ramp > n {
                (n - k) as f64 / ramp as f64
            } else {
                1.0
            };
            out.push(level * env * (phase.sin() + second * (2.0 * phase).sin()) / (1.0 + second));
        }
    }
    let floor = level * 0.003;
    let samples = out
        .into_iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (v + floor * n) as f32
        })
        .collect();
    AudioClip {
        samples,
        sample_rate: rate,
    }
}

/// One-second silence-padded clip with the rendered word centered.
pub fn toy_clip(word: &ToyWord, rate: u32, seed: u64) -> KeywordClip {
    let w = render_word(word, rate, seed);
    KeywordClip {
        audio: crate::data::fit_length(&w, rate as usize),
        label: word.name.clone(),
        variant: ClipVariant::Silence,
    }
}

/// Word placement inside a rendered recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub word: usize,
    pub start: f64,
    pub end: f64,
}

/// Concatenates utterances of `sequence` (vocabulary indices) separated by
/// random pauses and laid over a low noise floor.
pub fn render_recording(vocab: &ToyVocabulary, sequence: &[usize], rate: u32, seed: u64) -> Result<(AudioClip, Vec<Placement>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = rate as f64;
    let mut samples: Vec<f32> = Vec::new();
    let mut placements = Vec::new();
    let pause = |rng: &mut ChaCha8Rng| (rng.gen_range(0.3..0.9) * sr) as usize;
    samples.extend(std::iter::repeat(0.0).take(pause(&mut rng)));
    for &w in sequence {
        let word = vocab.words.get(w).ok_or_else(|| KwsError::invalid(format!("word index {w} out of range")))?;
        let audio = render_word(word, rate, rng.gen());
        let start = samples.len();
        samples.extend_from_slice(&audio.samples);
        placements.push(Placement {
            word: w,
            start: start as f64 / sr,
            end: samples.len() as f64 / sr,
        });
        samples.extend(std::iter::repeat(0.0).take(pause(&mut rng)));
    }
    for s in samples.iter_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *s += (0.001 * n) as f32;
    }
    Ok((
        AudioClip {
            samples,
            sample_rate: rate,
        },
        placements,
    ))
}

/// Seeded clips of every word: the first `per_word - n_val` of each word
/// go to the training list, the rest to the held-out list.
pub fn toy_corpus(vocab: &ToyVocabulary, per_word: usize, n_val: usize, rate: u32, seed: u64) -> (Vec<KeywordClip>, Vec<KeywordClip>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (w, word) in vocab.words.iter().enumerate() {
        for k in 0..per_word {
            let clip = toy_clip(word, rate, crate::train::mix_seed(seed, w as u64, k as u64));
            if k + n_val >= per_word {
                val.push(clip);
            } else {
                train.push(clip);
            }
        }
    }
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_distinct_and_seeded() {
        let v = ToyVocabulary::generate(30, 4, 1).unwrap();
        assert_eq!(v.len(), 30);
        let mut names = v.names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 30);
        assert!(names.iter().all(|n| n.chars().count() > 3));
        assert_eq!(ToyVocabulary::generate(30, 4, 1).unwrap().words, v.words);
        assert!(ToyVocabulary::generate(200, 3, 1).is_err());
    }

    #[test]
    fn clips_fit_one_second() {
        let v = ToyVocabulary::generate(5, 3, 2).unwrap();
        for s in 0..5 {
            let c = toy_clip(&v.words[s], 16000, s as u64);
            assert_eq!(c.audio.len(), 16000);
            assert!(c.audio.peak() > 0.1);
        }
    }

    #[test]
    fn phonemes_are_in_vocabulary() {
        let inv = PhonemeInventory::arpabet();
        let v = ToyVocabulary::generate(10, 3, 2).unwrap();
        for w in &v.words {
            let p = w.phonemes(&inv);
            assert_eq!(p.len(), 6);
            assert!(p.iter().all(|&id| (1..=69).contains(&id)));
        }
    }

    #[test]
    fn recording_placements_are_ordered() {
        let v = ToyVocabulary::generate(4, 3, 2).unwrap();
        let (audio, places) = render_recording(&v, &[0, 1, 2, 3], 16000, 5).unwrap();
        assert_eq!(places.len(), 4);
        assert!(places.windows(2).all(|p| p[0].end < p[1].start));
        assert!(places.last().unwrap().end < audio.duration());
    }
}

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{synth, KeywordClip};
use crate::audio::{apply_rir, mix_at_snr, read_wav, resample_rate, signal_support, time_shift, AudioClip};
use crate::error::{KwsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentCategory {
    Speech,
    Music,
    Noise,
    Room,
    None,
}

impl AugmentCategory {
    pub const ALL: [AugmentCategory; 5] = [Self::Speech, Self::Music, Self::Noise, Self::Room, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Speech => "speech",
            Self::Music => "music",
            Self::Noise => "noise",
            Self::Room => "room",
            Self::None => "none",
        }
    }
}

/// Selection weights, indexed like [`AugmentCategory::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryWeights(pub [f64; 5]);

impl CategoryWeights {
    pub fn uniform() -> Self {
        Self([0.2; 5])
    }

    pub fn only(cat: AugmentCategory) -> Self {
        let mut w = [0.0; 5];
        w[AugmentCategory::ALL.iter().position(|&c| c == cat).unwrap()] = 1.0;
        Self(w)
    }

    pub fn get(&self, cat: AugmentCategory) -> f64 {
        self.0[AugmentCategory::ALL.iter().position(|&c| c == cat).unwrap()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub weights: CategoryWeights,
    pub resample_range: (f64, f64),
    /// Seconds.
    pub shift_range: (f64, f64),
    pub speech_snr: (f64, f64),
    pub music_snr: (f64, f64),
    pub noise_snr: (f64, f64),
    pub speech_dir: Option<PathBuf>,
    pub music_dir: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    pub rir_dir: Option<PathBuf>,
    /// Generate seeded synthetic sources when a category has no files.
    pub synthetic_fallback: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            weights: CategoryWeights::uniform(),
            resample_range: crate::audio::RESAMPLE_RANGE,
            shift_range: (-crate::audio::MAX_SHIFT_S, crate::audio::MAX_SHIFT_S),
            speech_snr: (13.0, 20.0),
            music_snr: (5.0, 15.0),
            noise_snr: (0.0, 15.0),
            speech_dir: None,
            music_dir: None,
            noise_dir: None,
            rir_dir: None,
            synthetic_fallback: true,
        }
    }
}

impl AugmentPolicy {
    /// No-op policy: unit rate, zero shift, no category effect.
    pub fn identity() -> Self {
        Self {
            weights: CategoryWeights::only(AugmentCategory::None),
            resample_range: (1.0, 1.0),
            shift_range: (0.0, 0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights.0;
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(KwsError::invalid("augmentation weights must be nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(KwsError::invalid(format!("augmentation weights sum to {sum}, expected 1")));
        }
        let (lo, hi) = crate::audio::RESAMPLE_RANGE;
        let (a, b) = self.resample_range;
        if !(a <= b && a >= lo && b <= hi) {
            return Err(KwsError::OutOfRange {
                what: "resample range",
                value: if a < lo { a } else { b },
                min: lo,
                max: hi,
            });
        }
        let m = crate::audio::MAX_SHIFT_S;
        let (a, b) = self.shift_range;
        if !(a <= b && a >= -m && b <= m) {
            return Err(KwsError::OutOfRange {
                what: "shift range",
                value: if a < -m { a } else { b },
                min: -m,
                max: m,
            });
        }
        for (lo, hi) in [self.speech_snr, self.music_snr, self.noise_snr] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(KwsError::invalid("SNR range must be finite with low <= high"));
            }
        }
        Ok(())
    }

    fn dir(&self, cat: AugmentCategory) -> Option<&Path> {
        match cat {
            AugmentCategory::Speech => self.speech_dir.as_deref(),
            AugmentCategory::Music => self.music_dir.as_deref(),
            AugmentCategory::Noise => self.noise_dir.as_deref(),
            AugmentCategory::Room => self.rir_dir.as_deref(),
            AugmentCategory::None => None,
        }
    }
}

/// Audio files backing each category, loaded once.
#[derive(Debug, Clone, Default)]
pub struct AugmentAssets {
    speech: Vec<AudioClip>,
    music: Vec<AudioClip>,
    noise: Vec<AudioClip>,
    rir: Vec<AudioClip>,
}

fn load_dir(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| KwsError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_wav(p)).collect()
}

impl AugmentAssets {
    pub fn load(policy: &AugmentPolicy) -> Result<Self> {
        let mut a = Self::default();
        for cat in [
            AugmentCategory::Speech,
            AugmentCategory::Music,
            AugmentCategory::Noise,
            AugmentCategory::Room,
        ] {
            if let Some(dir) = policy.dir(cat) {
                *a.bank_mut(cat) = load_dir(dir)?;
            }
        }
        Ok(a)
    }

    fn bank_mut(&mut self, cat: AugmentCategory) -> &mut Vec<AudioClip> {
        match cat {
            AugmentCategory::Speech => &mut self.speech,
            AugmentCategory::Music => &mut self.music,
            AugmentCategory::Noise => &mut self.noise,
            _ => &mut self.rir,
        }
    }

    fn bank(&self, cat: AugmentCategory) -> &[AudioClip] {
        match cat {
            AugmentCategory::Speech => &self.speech,
            AugmentCategory::Music => &self.music,
            AugmentCategory::Noise => &self.noise,
            AugmentCategory::Room => &self.rir,
            AugmentCategory::None => &[],
        }
    }

    pub fn count(&self, cat: AugmentCategory) -> usize {
        self.bank(cat).len()
    }
}

/// Augmented clip plus the random draws that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub clip: KeywordClip,
    pub category: AugmentCategory,
    pub resample_factor: f64,
    pub shift_seconds: f64,
    pub snr_db: Option<f64>,
    /// Signal after rate change and shift, before the category effect.
    pub pre_effect: AudioClip,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Center-crop or symmetrically zero-pad to `len` samples.
pub fn fit_length(clip: &AudioClip, len: usize) -> AudioClip {
    let n = clip.len();
    let mut out = vec![0.0f32; len];
    if n >= len {
        let off = (n - len) / 2;
        out.copy_from_slice(&clip.samples[off..off + len]);
    } else {
        let off = (len - n) / 2;
        out[off..off + n].copy_from_slice(&clip.samples);
    }
    AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    }
}

fn noise_segment(cat: AugmentCategory, assets: &AugmentAssets, policy: &AugmentPolicy, len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Result<AudioClip> {
    let bank = assets.bank(cat);
    if bank.is_empty() {
        if !policy.synthetic_fallback {
            return Err(KwsError::InsufficientData(format!("no {} assets and synthetic fallback disabled", cat.name())));
        }
        return Ok(match cat {
            AugmentCategory::Speech => synth::babble(len, rate, rng),
            AugmentCategory::Music => synth::music(len, rate, rng),
            _ => synth::noise(len, rate, rng),
        });
    }
    let src = &bank[rng.gen_range(0..bank.len())];
    if src.len() <= len {
        return Ok(src.clone());
    }
    let start = rng.gen_range(0..=src.len() - len);
    Ok(src.window(start, len))
}

/// Random rate change, re-fit to the original length, random shift and
/// one randomly chosen category effect. Deterministic in `seed`.
pub fn augment(clip: &KeywordClip, policy: &AugmentPolicy, assets: &AugmentAssets, seed: u64) -> Result<AugmentOutcome> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = clip.audio.len();
    let rate = clip.audio.sample_rate;
    let factor = draw(&mut rng, policy.resample_range);
    let shift = draw(&mut rng, policy.shift_range);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut category = AugmentCategory::None;
    for (cat, w) in AugmentCategory::ALL.iter().zip(policy.weights.0) {
        acc += w;
        if w > 0.0 && u < acc {
            category = *cat;
            break;
        }
    }
    let resampled = resample_rate(&clip.audio, factor)?;
    let fitted = fit_length(&resampled, len);
    let base = time_shift(&fitted, shift)?;
    let mut snr_db = None;
    let audio = match category {
        AugmentCategory::None => base.clone(),
        AugmentCategory::Room => {
            let bank = assets.bank(category);
            let rir = if !bank.is_empty() {
                bank[rng.gen_range(0..bank.len())].clone()
            } else if policy.synthetic_fallback {
                synth::room_impulse(rate, &mut rng)
            } else {
                return Err(KwsError::InsufficientData("no room impulse responses and synthetic fallback disabled".into()));
            };
            if signal_support(&base.samples).is_some() {
                apply_rir(&base, &rir)?
            } else {
                base.clone()
            }
        }
        cat => {
            let range = match cat {
                AugmentCategory::Speech => policy.speech_snr,
                AugmentCategory::Music => policy.music_snr,
                _ => policy.noise_snr,
            };
            let snr = draw(&mut rng, range);
            let noise = noise_segment(cat, assets, policy, len, rate, &mut rng)?;
            if signal_support(&base.samples).is_some() {
                snr_db = Some(snr);
                mix_at_snr(&base, &noise, snr)?
            } else {
                // nothing to reference the SNR against
                base.clone()
            }
        }
    };
    Ok(AugmentOutcome {
        clip: KeywordClip {
            audio,
            label: clip.label.clone(),
            variant: clip.variant,
        },
        category,
        resample_factor: factor,
        shift_seconds: shift,
        snr_db,
        pre_effect: base,
    })
}

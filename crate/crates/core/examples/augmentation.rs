//! One toy word passed through each augmentation category.
//!
//! cargo run --release --example augmentation

use qbe_kws::data::toy::{toy_clip, ToyVocabulary};
use qbe_kws::data::{augment, AugmentAssets, AugmentCategory, AugmentPolicy, CategoryWeights};

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn main() -> qbe_kws::Result<()> {
    let vocab = ToyVocabulary::generate(1, 4, 3)?;
    let clip = toy_clip(&vocab.words[0], 16_000, 11);
    println!("word `{}`: {} samples, rms {:.4}", clip.label, clip.audio.len(), rms(&clip.audio.samples));
    for cat in AugmentCategory::ALL {
        let policy = AugmentPolicy {
            weights: CategoryWeights::only(cat),
            ..AugmentPolicy::default()
        };
        // no asset directories: every category falls back to seeded synthetic sources
        let assets = AugmentAssets::load(&policy)?;
        let out = augment(&clip, &policy, &assets, 5)?;
        let snr = out.snr_db.map(|s| format!("{s:5.1} dB")).unwrap_or_else(|| "   -    ".into());
        println!(
            "{:7} rate x{:.3}  shift {:+.3} s  snr {snr}  rms {:.4}",
            out.category.name(),
            out.resample_factor,
            out.shift_seconds,
            rms(&out.clip.audio.samples)
        );
    }
    Ok(())
}

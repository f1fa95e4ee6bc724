//! Log-mel features of a synthetic chirp.
//!
//! cargo run --release --example features

use qbe_kws::audio::{mel_center_frequencies, AudioClip, Frontend, FrontendConfig, SAMPLE_RATE};

fn main() -> qbe_kws::Result<()> {
    let rate = SAMPLE_RATE as f64;
    let samples: Vec<f32> = (0..SAMPLE_RATE as usize)
        .map(|i| {
            let t = i as f64 / rate;
            // linear sweep from 300 Hz to 3 kHz
            let phase = 2.0 * std::f64::consts::PI * (300.0 * t + 0.5 * 2700.0 * t * t);
            (0.5 * phase.sin()) as f32
        })
        .collect();
    let clip = AudioClip::new(samples, SAMPLE_RATE)?;
    let cfg = FrontendConfig::default();
    let frontend = Frontend::new(cfg.clone())?;
    let feats = frontend.compute(&clip)?;
    println!("{} mel bins x {} frames for {:.2} s of audio", feats.n_mels, feats.n_frames, clip.duration());

    let centers = mel_center_frequencies(&cfg);
    for frame in [0, feats.n_frames / 2, feats.n_frames - 1] {
        let peak = (0..feats.n_mels)
            .max_by(|&a, &b| feats.get(a, frame).total_cmp(&feats.get(b, frame)))
            .unwrap_or(0);
        println!(
            "t={:.3} s  loudest bin {peak:2} (center {:.0} Hz)  log energy {:.3}",
            feats.frame_times[frame],
            centers[peak],
            feats.get(peak, frame)
        );
    }
    Ok(())
}

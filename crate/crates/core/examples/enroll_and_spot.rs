//! Trains a small embedding model, enrolls one keyword from five examples
//! and spots it in a continuous recording fed in 250 ms chunks.
//!
//! cargo run --release --example enroll_and_spot

use qbe_kws::audio::{FrontendConfig, Frontend, SAMPLE_RATE};
use qbe_kws::data::toy::{render_recording, toy_corpus, ToyVocabulary};
use qbe_kws::data::AugmentPolicy;
use qbe_kws::enroll::{enroll, score};
use qbe_kws::eval::compute_eer;
use qbe_kws::model::{ClassifierHead, EmbeddingModel, EmbeddingModelSpec};
use qbe_kws::stream::{EmbeddingScorer, StreamConfig, StreamDetector};
use qbe_kws::train::{batch_features, embed_all, finetune_circle, train_classifier, Augmenter, ClipDataset, TrainConfig, TrainData};

fn main() -> qbe_kws::Result<()> {
    let vocab = ToyVocabulary::generate(8, 4, 21)?;
    let (train, val) = toy_corpus(&vocab, 60, 10, SAMPLE_RATE, 2);
    let train = ClipDataset::from_clips(train);
    let augmenter = Augmenter::new(AugmentPolicy::default())?;
    let data = TrainData {
        train: &train,
        val: None,
        augmenter: Some(&augmenter),
    };
    let spec = EmbeddingModelSpec {
        channels: [8, 8, 16, 32, 64],
        blocks: [1, 1, 1, 1],
        embedding_dim: 64,
        n_mels: 40,
    };
    let mut model = EmbeddingModel::new(spec, 3)?;
    let mut head = ClassifierHead::new(64, vocab.len(), 4)?;
    let mut cfg = TrainConfig::classification();
    cfg.epochs = 6;
    cfg.anneal_start = 3;
    cfg.batch_size = 32;
    cfg.progress = true;
    train_classifier(&mut model, &mut head, &data, &cfg)?;
    let mut circle = TrainConfig::circle();
    circle.epochs = 2;
    circle.anneal_start = 1;
    circle.pk_p = 10;
    circle.pk_k = 4;
    circle.progress = true;
    finetune_circle(&mut model, &data, &circle)?;

    // enroll the first word from five held-out recordings and set the
    // threshold at the equal-error point on the remaining held-out clips
    let keyword = vocab.words[0].name.clone();
    let frontend = Frontend::new(FrontendConfig::default())?;
    let held_out = ClipDataset::from_clips(val);
    let feats = batch_features(&held_out, &(0..held_out.len()).collect::<Vec<_>>(), None, &frontend, 0)?;
    let embeddings = embed_all(&model, &feats, 8)?;
    let is_kw: Vec<bool> = held_out.clips.iter().map(|c| c.label == keyword).collect();
    let shots: Vec<_> = (0..held_out.len()).filter(|&i| is_kw[i]).take(5).collect();
    let profile = enroll(&keyword, &shots.iter().map(|&i| embeddings[i].clone()).collect::<Vec<_>>())?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, e) in embeddings.iter().enumerate().filter(|(i, _)| !shots.contains(i)) {
        let s = score(&profile, e)?;
        if is_kw[i] {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    let calibration = compute_eer(&pos, &neg)?;
    println!("held-out EER {:.3} at threshold {:.3}", calibration.eer, calibration.threshold);

    let sequence = [3, 0, 5, 1, 0, 2, 6, 0, 4];
    let (audio, placements) = render_recording(&vocab, &sequence, SAMPLE_RATE, 99)?;
    println!("recording of {:.1} s; `{keyword}` spoken at:", audio.duration());
    for p in placements.iter().filter(|p| p.word == 0) {
        println!("  {:.3} s", 0.5 * (p.start + p.end));
    }

    let scorer = EmbeddingScorer::new(&model, vec![profile], FrontendConfig::default())?;
    let cfg = StreamConfig {
        threshold: calibration.threshold,
        ..StreamConfig::default()
    };
    let mut detector = StreamDetector::new(scorer, cfg, SAMPLE_RATE)?;
    println!("detections:");
    for chunk in audio.samples.chunks(SAMPLE_RATE as usize / 4) {
        for e in detector.push(chunk)? {
            println!("  {}", e.to_json_line());
        }
    }
    println!("{} windows scored", detector.windows_seen());
    Ok(())
}

//! Few-shot comparison on an unseen keyword: 5-shot enrollment with a
//! frozen embedding model versus fine-tuning a 3-way
//! target/unknown/background classifier from the same examples.
//!
//! cargo run --release --example baseline

use qbe_kws::audio::{Frontend, FrontendConfig, SAMPLE_RATE};
use qbe_kws::data::synth::noise;
use qbe_kws::data::toy::{toy_corpus, ToyVocabulary};
use qbe_kws::data::{AugmentPolicy, KeywordClip};
use qbe_kws::enroll::{enroll, score};
use qbe_kws::eval::compute_eer;
use qbe_kws::model::{ClassifierHead, EmbeddingModel, EmbeddingModelSpec};
use qbe_kws::train::{
    baseline_scores, batch_features, build_baseline_set, embed_all, finetune_baseline3, train_classifier, Augmenter,
    ClipDataset, TrainConfig, TrainData,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qbe_kws::Result<()> {
    let vocab = ToyVocabulary::generate(12, 4, 17)?;
    let (clips, _) = toy_corpus(&vocab, 40, 0, SAMPLE_RATE, 3);
    let seen: Vec<String> = vocab.names()[..8].to_vec();
    let (pretrain, unseen): (Vec<KeywordClip>, Vec<KeywordClip>) =
        clips.into_iter().partition(|c| seen.contains(&c.label));

    let train = ClipDataset::from_clips(pretrain);
    let augmenter = Augmenter::new(AugmentPolicy::default())?;
    let spec = EmbeddingModelSpec {
        channels: [8, 8, 16, 32, 64],
        blocks: [1, 1, 1, 1],
        embedding_dim: 64,
        n_mels: 40,
    };
    let mut model = EmbeddingModel::new(spec, 1)?;
    let mut head = ClassifierHead::new(64, train.classes.len(), 2)?;
    let mut cfg = TrainConfig::classification();
    cfg.epochs = 4;
    cfg.anneal_start = 2;
    cfg.batch_size = 32;
    cfg.progress = true;
    let data = TrainData {
        train: &train,
        val: None,
        augmenter: Some(&augmenter),
    };
    train_classifier(&mut model, &mut head, &data, &cfg)?;

    let keyword = vocab.names()[8].clone();
    let targets: Vec<KeywordClip> = unseen.iter().filter(|c| c.label == keyword).cloned().collect();
    let (shots, test_pos) = targets.split_at(5);
    let test_neg: Vec<KeywordClip> = unseen.iter().filter(|c| c.label != keyword).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let background: Vec<_> = (0..4).map(|_| noise(2 * SAMPLE_RATE as usize, SAMPLE_RATE, &mut rng)).collect();

    let frontend = Frontend::new(FrontendConfig::default())?;
    let feats = |clips: &[KeywordClip]| {
        let ds = ClipDataset::from_clips(clips.to_vec());
        batch_features(&ds, &(0..ds.len()).collect::<Vec<_>>(), None, &frontend, 0)
    };
    let (shot_f, pos_f, neg_f) = (feats(shots)?, feats(test_pos)?, feats(&test_neg)?);

    let profile = enroll(&keyword, &embed_all(&model, &shot_f, 8)?)?;
    let sims = |f: &[_]| -> qbe_kws::Result<Vec<f64>> {
        embed_all(&model, f, 8)?.iter().map(|e| score(&profile, e)).collect()
    };
    let enroll_eer = compute_eer(&sims(&pos_f)?, &sims(&neg_f)?)?.eer;

    let set = build_baseline_set(shots, &train.clips, &background, &augmenter, 5)?;
    let mut bcfg = TrainConfig::baseline();
    bcfg.epochs = 3;
    bcfg.progress = true;
    let (bmodel, bhead, _) = finetune_baseline3(&model, &set, &bcfg)?;
    let baseline_eer = compute_eer(
        &baseline_scores(&bmodel, &bhead, &pos_f)?,
        &baseline_scores(&bmodel, &bhead, &neg_f)?,
    )?
    .eer;

    println!("unseen keyword `{keyword}`: enrollment EER {enroll_eer:.4}, 3-class baseline EER {baseline_eer:.4}");
    Ok(())
}

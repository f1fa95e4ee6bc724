use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{
    require_dir, require_file, require_parent, usage, CliResult, Context, FinetuneBaselineArgs, FinetuneCircleArgs,
    PrepareArgs, TrainClassifierArgs, TrainOpts, TrainP2eArgs, Validation,
};
use crate::audio::{read_wav, write_wav, AudioClip, Frontend, FrontendConfig, SAMPLE_RATE};
use crate::data::toy::{toy_clip, ToyVocabulary};
use crate::data::{extract_clip, synth, AugmentPolicy, ClipRecord, ClipSet, Manifest, Split, CLIP_INDEX};
use crate::enroll::enroll;
use crate::eval::compute_eer;
use crate::model::{
    load_embedding_model, save_embedding_model, save_p2e_model, ClassifierHead, EmbeddingModel, EmbeddingModelSpec,
    Lexicon, P2EModel, P2ESpec, PhonemeInventory,
};
use crate::train::{
    self, baseline_scores, batch_features, build_baseline_set, embed_all, finetune_baseline3, mix_seed, Augmenter,
    ClipDataset, P2EPair, TrainConfig, TrainData, TrainReport,
};

/// Seed streams for the independent random choices of each verb.
mod seeds {
    pub const MODEL_INIT: u64 = 1;
    pub const HEAD_INIT: u64 = 2;
    pub const TOY_VOCAB: u64 = 3;
    pub const TOY_CLIP: u64 = 4;
    pub const WORD_SPLIT: u64 = 5;
    pub const P2E_INIT: u64 = 6;
    pub const SHOTS: u64 = 7;
    pub const BACKGROUND: u64 = 8;
    pub const BASELINE_SET: u64 = 9;
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn load_clipset(dir: &Path) -> CliResult<ClipSet> {
    require_dir(dir)?;
    require_file(&dir.join(CLIP_INDEX))?;
    let set = ClipSet::load(dir).invalid()?;
    if set.records.is_empty() {
        return Err(usage(format!("{}: no clips", dir.display())));
    }
    Ok(set)
}

fn load_model(path: &Path) -> CliResult<(EmbeddingModel, Option<ClassifierHead>)> {
    require_file(path)?;
    load_embedding_model(path).invalid()
}

fn write_report(opts: &TrainOpts, report: &TrainReport) -> CliResult<()> {
    if let Some(p) = &opts.report {
        crate::io::write_atomic(p, report.to_jsonl()?.as_bytes())?;
    }
    Ok(())
}

fn summary(report: &TrainReport) -> serde_json::Value {
    let last = report.last();
    json!({
        "stage": report.stage,
        "epochs": report.epochs.len(),
        "loss": last.map(|e| e.loss),
        "val_accuracy": last.and_then(|e| e.val_accuracy),
        "val_eer": last.and_then(|e| e.val_eer),
        "val_loss": last.and_then(|e| e.val_loss),
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::KwsError::io(dir, e))?;
    Ok(())
}

pub fn prepare(a: &PrepareArgs, ctx: &Context) -> CliResult<()> {
    match (&a.manifest, a.toy_words) {
        (Some(m), None) => {
            require_file(m)?;
            let manifest = Manifest::load(m).invalid()?;
            prepare_manifest(a, &manifest, ctx)
        }
        (None, Some(words)) => {
            if words == 0 || a.toy_clips == 0 || a.toy_val >= a.toy_clips {
                return Err(usage("toy corpus needs words >= 1 and 0 <= toy-val < toy-clips"));
            }
            let vocab = ToyVocabulary::generate(words, a.toy_units, mix_seed(ctx.seed, seeds::TOY_VOCAB, 0)).invalid()?;
            prepare_toy(a, &vocab, ctx)
        }
        _ => Err(usage("prepare needs exactly one of --manifest or --toy-words")),
    }
}

fn prepare_manifest(a: &PrepareArgs, manifest: &Manifest, ctx: &Context) -> CliResult<()> {
    create_dir(&a.out.join("clips"))?;
    let variants = a.variant.variants();
    let mut by_source: BTreeMap<&Path, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_source.entry(e.audio_path.as_path()).or_default().push(i);
    }
    let mut slots: Vec<Vec<ClipRecord>> = vec![Vec::new(); manifest.entries.len()];
    let mut skipped = 0usize;
    for (path, idx) in by_source {
        let source = read_wav(path)?;
        for i in idx {
            let e = &manifest.entries[i];
            for (vi, &v) in variants.iter().enumerate() {
                let clip = match extract_clip(&source, e, v) {
                    Ok(c) => c,
                    Err(err) => {
                        ctx.progress(&format!("warning: {}: {err}", path.display()));
                        skipped += 1;
                        continue;
                    }
                };
                let rel = format!("clips/{i:06}_{vi}.wav");
                write_wav(&a.out.join(&rel), &clip.audio)?;
                slots[i].push(ClipRecord {
                    path: rel,
                    word: e.word.clone(),
                    language: e.language.clone(),
                    speaker: e.speaker.clone(),
                    split: e.split,
                    variant: v,
                });
            }
        }
    }
    let set = ClipSet {
        root: a.out.clone(),
        records: slots.into_iter().flatten().collect(),
    };
    set.save_index()?;
    print_json(&json!({
        "clips": set.records.len(),
        "words": set.words().len(),
        "filtered": manifest.filtered,
        "skipped": skipped,
    }));
    Ok(())
}

fn prepare_toy(a: &PrepareArgs, vocab: &ToyVocabulary, ctx: &Context) -> CliResult<()> {
    create_dir(&a.out.join("clips"))?;
    let jobs: Vec<(usize, usize)> = (0..vocab.len()).flat_map(|w| (0..a.toy_clips).map(move |k| (w, k))).collect();
    let records: Vec<ClipRecord> = jobs
        .par_iter()
        .map(|&(w, k)| {
            let word = &vocab.words[w];
            let clip = toy_clip(word, SAMPLE_RATE, mix_seed(ctx.seed, seeds::TOY_CLIP, (w * a.toy_clips + k) as u64));
            let rel = format!("clips/{}_{k:04}.wav", word.name);
            write_wav(&a.out.join(&rel), &clip.audio)?;
            Ok(ClipRecord {
                path: rel,
                word: word.name.clone(),
                language: "toy".into(),
                speaker: format!("toy{k:04}"),
                split: if k + a.toy_val >= a.toy_clips { Split::Val } else { Split::Train },
                variant: clip.variant,
            })
        })
        .collect::<crate::Result<_>>()?;
    let set = ClipSet {
        root: a.out.clone(),
        records,
    };
    set.save_index()?;
    let inv = PhonemeInventory::arpabet();
    let mut lexicon = String::new();
    for w in &vocab.words {
        lexicon.push_str(&format!("{} {}\n", w.name, inv.decode(&w.phonemes(&inv))?));
    }
    crate::io::write_atomic(&a.out.join("lexicon.txt"), lexicon.as_bytes())?;
    print_json(&json!({ "clips": set.records.len(), "words": vocab.len() }));
    Ok(())
}

/// Training clips, plus validation clips restricted to training words.
fn datasets(set: &ClipSet) -> CliResult<(ClipDataset, Option<ClipDataset>)> {
    let train_recs = set.select(Some(Split::Train));
    if train_recs.is_empty() {
        return Err(usage(format!("{}: no training clips", set.root.display())));
    }
    let train = ClipDataset::from_clips(set.read(&train_recs)?);
    let val_recs: Vec<&ClipRecord> = set
        .select(Some(Split::Val))
        .into_iter()
        .filter(|r| train.classes.binary_search(&r.word).is_ok())
        .collect();
    let val = if val_recs.is_empty() {
        None
    } else {
        Some(ClipDataset::with_classes(set.read(&val_recs)?, train.classes.clone())?)
    };
    Ok((train, val))
}

pub fn train_classifier(a: &TrainClassifierArgs, ctx: &Context) -> CliResult<()> {
    let channels: [usize; 5] = a
        .channels
        .as_slice()
        .try_into()
        .map_err(|_| usage("--channels needs 5 values"))?;
    let blocks: [usize; 4] = a
        .blocks
        .as_slice()
        .try_into()
        .map_err(|_| usage("--blocks needs 4 values"))?;
    let spec = EmbeddingModelSpec {
        channels,
        blocks,
        embedding_dim: a.embedding_dim,
        ..EmbeddingModelSpec::default()
    };
    spec.validate().invalid()?;
    let cfg = a.train.resolve(TrainConfig::classification(), ctx.seed, ctx.quiet)?;
    let augmenter = a.augment.augmenter()?;
    require_parent(&a.out)?;
    let set = load_clipset(&a.clips)?;

    let (train_ds, val_ds) = datasets(&set)?;
    let mut model = EmbeddingModel::new(spec, mix_seed(ctx.seed, seeds::MODEL_INIT, 0))?;
    let mut head = ClassifierHead::new(a.embedding_dim, train_ds.classes.len(), mix_seed(ctx.seed, seeds::HEAD_INIT, 0))?;
    let data = TrainData {
        train: &train_ds,
        val: val_ds.as_ref(),
        augmenter: augmenter.as_ref(),
    };
    let report = train::train_classifier(&mut model, &mut head, &data, &cfg)?;
    save_embedding_model(&a.out, &model, Some(&head))?;
    write_report(&a.train, &report)?;
    print_json(&summary(&report));
    Ok(())
}

pub fn finetune_circle(a: &FinetuneCircleArgs, ctx: &Context) -> CliResult<()> {
    let cfg = a.train.resolve(TrainConfig::circle(), ctx.seed, ctx.quiet)?;
    let augmenter = a.augment.augmenter()?;
    require_parent(&a.out)?;
    let (mut model, _) = load_model(&a.model)?;
    let set = load_clipset(&a.clips)?;

    let (train_ds, val_ds) = datasets(&set)?;
    let data = TrainData {
        train: &train_ds,
        val: val_ds.as_ref(),
        augmenter: augmenter.as_ref(),
    };
    let report = train::finetune_circle(&mut model, &data, &cfg)?;
    save_embedding_model(&a.out, &model, None)?;
    write_report(&a.train, &report)?;
    print_json(&summary(&report));
    Ok(())
}

/// Normalized mean embedding of every clip of each word.
fn word_targets(model: &EmbeddingModel, set: &ClipSet, words: &[String]) -> crate::Result<BTreeMap<String, crate::model::Embedding>> {
    let groups = set.by_word(None);
    let recs: Vec<&ClipRecord> = words.iter().flat_map(|w| groups[w].iter().map(|&i| &set.records[i])).collect();
    let ds = ClipDataset::from_clips(set.read(&recs)?);
    let frontend = Frontend::new(FrontendConfig::default())?;
    let feats = batch_features(&ds, &(0..ds.len()).collect::<Vec<_>>(), None, &frontend, 0)?;
    let embs = embed_all(model, &feats, 32)?;
    let mut per_word: BTreeMap<String, Vec<crate::model::Embedding>> = BTreeMap::new();
    for (e, &l) in embs.into_iter().zip(&ds.labels) {
        per_word.entry(ds.classes[l].clone()).or_default().push(e);
    }
    per_word
        .into_iter()
        .map(|(w, es)| Ok((w.clone(), enroll(&w, &es)?.embedding)))
        .collect()
}

pub fn train_p2e(a: &TrainP2eArgs, ctx: &Context) -> CliResult<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(usage("--val-fraction must lie in [0, 1)"));
    }
    let cfg = a.train.resolve(TrainConfig::p2e(), ctx.seed, ctx.quiet)?;
    require_parent(&a.out)?;
    let (model, _) = load_model(&a.model)?;
    let set = load_clipset(&a.clips)?;
    require_file(&a.lexicon)?;
    let inv = PhonemeInventory::arpabet();
    let lexicon = Lexicon::load(&a.lexicon, &inv).invalid()?;
    let all_words = set.words();
    let mut words: Vec<String> = all_words.iter().filter(|w| lexicon.get(w).is_some()).cloned().collect();
    if words.is_empty() {
        return Err(usage("no clip word has a lexicon entry"));
    }
    if words.len() < all_words.len() {
        ctx.progress(&format!("warning: {} words without pronunciation skipped", all_words.len() - words.len()));
    }

    let targets = word_targets(&model, &set, &words)?;
    words.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(ctx.seed, seeds::WORD_SPLIT, 0)));
    let n_val = (a.val_fraction * words.len() as f64).round() as usize;
    let pairs: Vec<P2EPair> = words
        .iter()
        .map(|w| P2EPair {
            phonemes: lexicon.get(w).expect("filtered above").to_vec(),
            target: targets[w].clone(),
        })
        .collect();
    let (val, train_pairs) = pairs.split_at(n_val.min(pairs.len() - 1));
    let spec = P2ESpec {
        phoneme_vocab_size: inv.len(),
        output_dim: model.spec().embedding_dim,
        ..P2ESpec::default()
    };
    let mut p2e = P2EModel::new(spec, mix_seed(ctx.seed, seeds::P2E_INIT, 0))?;
    let report = train::train_p2e(&mut p2e, train_pairs, (!val.is_empty()).then_some(val), &cfg)?;
    save_p2e_model(&a.out, &p2e)?;
    write_report(&a.train, &report)?;
    let mut s = summary(&report);
    s["train_words"] = json!(train_pairs.len());
    s["val_words"] = json!(val.len());
    print_json(&s);
    Ok(())
}

fn background_bank(dir: Option<&PathBuf>, seed: u64) -> crate::Result<Vec<AudioClip>> {
    match dir {
        Some(d) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(d)
                .map_err(|e| crate::KwsError::io(d, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(crate::KwsError::InsufficientData(format!("{}: no WAV files", d.display())));
            }
            paths.iter().map(|p| read_wav(p)).collect()
        }
        None => Ok((0..8)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, seeds::BACKGROUND, i));
                synth::noise(2 * SAMPLE_RATE as usize, SAMPLE_RATE, &mut rng)
            })
            .collect()),
    }
}

pub fn finetune_baseline(a: &FinetuneBaselineArgs, ctx: &Context) -> CliResult<()> {
    let cfg = a.train.resolve(TrainConfig::baseline(), ctx.seed, ctx.quiet)?;
    let augmenter = match a.augment.augmenter()? {
        Some(aug) => aug,
        None => Augmenter::new(AugmentPolicy::identity()).invalid()?,
    };
    if let Some(d) = &a.background_dir {
        require_dir(d)?;
    }
    require_parent(&a.out)?;
    let (model, _) = load_model(&a.model)?;
    let set = load_clipset(&a.clips)?;
    let train_groups = set.by_word(Some(Split::Train));
    let kw_train = train_groups
        .get(&a.keyword)
        .ok_or_else(|| usage(format!("keyword `{}` has no training clips", a.keyword)))?;
    if a.shots == 0 || kw_train.len() < a.shots {
        return Err(usage(format!("need {} training clips of `{}`, have {}", a.shots, a.keyword, kw_train.len())));
    }
    let other: Vec<&ClipRecord> = set
        .select(Some(Split::Train))
        .into_iter()
        .filter(|r| r.word != a.keyword)
        .collect();
    if other.is_empty() {
        return Err(usage("the non-target bank is empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ctx.seed, seeds::SHOTS, 0));
    let picks: Vec<&ClipRecord> = kw_train.choose_multiple(&mut rng, a.shots).map(|&i| &set.records[i]).collect();
    let targets = set.read(&picks)?;
    let nontarget = set.read(&other)?;
    let background = background_bank(a.background_dir.as_ref(), ctx.seed)?;
    let bset = build_baseline_set(&targets, &nontarget, &background, &augmenter, mix_seed(ctx.seed, seeds::BASELINE_SET, 0))?;
    let (m, head, report) = finetune_baseline3(&model, &bset, &cfg)?;
    save_embedding_model(&a.out, &m, Some(&head))?;
    write_report(&a.train, &report)?;

    let mut s = summary(&report);
    s["keyword"] = json!(a.keyword);
    let val: Vec<&ClipRecord> = set.select(Some(Split::Val));
    let (pos, neg): (Vec<&ClipRecord>, Vec<&ClipRecord>) = val.into_iter().partition(|r| r.word == a.keyword);
    if !pos.is_empty() && !neg.is_empty() {
        let frontend = Frontend::new(FrontendConfig::default())?;
        let score = |recs: &[&ClipRecord]| -> crate::Result<Vec<f64>> {
            let clips = set.read(recs)?;
            let feats = clips
                .par_iter()
                .map(|c| frontend.compute(&c.audio))
                .collect::<crate::Result<Vec<_>>>()?;
            baseline_scores(&m, &head, &feats)
        };
        s["val_eer"] = json!(compute_eer(&score(&pos)?, &score(&neg)?)?.eer);
    }
    print_json(&s);
    Ok(())
}

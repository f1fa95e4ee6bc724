use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{
    require_dir, require_file, require_parent, usage, CliResult, Context, EnrollArgs, EvalClassArgs, EvalStreamArgs,
    ExportDetArgs, SpotArgs, StreamOpts, Validation,
};
use crate::audio::{read_wav, AudioClip, FeatureMap, Frontend, FrontendConfig, SAMPLE_RATE};
use crate::data::{fit_length, ClipRecord, ClipSet, CLIP_INDEX};
use crate::enroll::{enroll as enroll_examples, enroll_from_phonemes, ProfileStore};
use crate::eval::{
    build_kws_stream, classification_protocol, compute_eer, det_csv, det_curve, fnr_at_fa, stream_sweep, sweep_csv,
    LabeledEmbedding, ScoredStream,
};
use crate::model::{load_embedding_model, load_p2e_model, Embedding, EmbeddingModel, PhonemeInventory};
use crate::stream::{detect_from_trace, score_trace, EmbeddingScorer, StreamConfig};
use crate::train::{embed_all, mix_seed};
use crate::KwsError;

const EVAL_STREAM_SEED: u64 = 10;

fn load_model(path: &Path) -> CliResult<EmbeddingModel> {
    require_file(path)?;
    Ok(load_embedding_model(path).invalid()?.0)
}

fn load_clipset(dir: &Path) -> CliResult<ClipSet> {
    require_dir(dir)?;
    require_file(&dir.join(CLIP_INDEX))?;
    ClipSet::load(dir).invalid()
}

fn stream_config(o: &StreamOpts, threshold: f64) -> CliResult<StreamConfig> {
    let cfg = StreamConfig {
        window: o.window,
        stride: o.stride,
        suppression: o.suppression,
        threshold,
    };
    cfg.validate().invalid()?;
    Ok(cfg)
}

/// Embeddings of 1 s clips, computed without augmentation.
fn embed_clips(model: &EmbeddingModel, clips: &[AudioClip]) -> crate::Result<Vec<Embedding>> {
    let frontend = Frontend::new(FrontendConfig::default())?;
    let feats: Vec<FeatureMap> = clips
        .par_iter()
        .map(|c| frontend.compute(&fit_length(c, SAMPLE_RATE as usize)))
        .collect::<crate::Result<_>>()?;
    embed_all(model, &feats, 32)
}

pub fn enroll(a: &EnrollArgs, ctx: &Context) -> CliResult<()> {
    require_parent(&a.out)?;
    let mut store = if a.merge && a.out.is_file() {
        ProfileStore::load(&a.out).invalid()?
    } else {
        ProfileStore::new()
    };
    let profile = match (&a.phonemes, &a.p2e) {
        (Some(ph), Some(p2e_path)) => {
            require_file(p2e_path)?;
            let ids = PhonemeInventory::arpabet().encode(ph).invalid()?;
            let p2e = load_p2e_model(p2e_path).invalid()?;
            p2e.check_ids(&ids).invalid()?;
            enroll_from_phonemes(&a.keyword, &ids, &p2e)?
        }
        _ => {
            let model_path = a.model.as_ref().ok_or_else(|| usage("--model is required for audio enrollment"))?;
            if a.examples.is_empty() {
                return Err(usage("give example recordings or --phonemes with --p2e"));
            }
            for p in &a.examples {
                require_file(p)?;
            }
            let model = load_model(model_path)?;
            let clips = a.examples.iter().map(|p| read_wav(p)).collect::<crate::Result<Vec<_>>>()?;
            enroll_examples(&a.keyword, &embed_clips(&model, &clips)?)?
        }
    };
    let summary = json!({
        "keyword": profile.keyword,
        "source": profile.source.name(),
        "n_examples": profile.n_examples,
    });
    store.insert(profile);
    store.save(&a.out)?;
    ctx.progress(&format!("stage=enroll keyword={} profiles={}", a.keyword, store.len()));
    println!("{summary}");
    Ok(())
}

pub fn spot(a: &SpotArgs, _ctx: &Context) -> CliResult<()> {
    let cfg = stream_config(&a.stream, a.threshold)?;
    require_file(&a.audio)?;
    require_file(&a.profiles)?;
    if let Some(t) = &a.trace_out {
        require_parent(t)?;
    }
    let model = load_model(&a.model)?;
    let store = ProfileStore::load(&a.profiles).invalid()?;

    let audio = read_wav(&a.audio)?;
    let mut scorer = EmbeddingScorer::new(&model, store.profiles().to_vec(), FrontendConfig::default())?;
    let trace = score_trace(&audio, &mut scorer, &cfg)?;
    for e in detect_from_trace(&trace, cfg.threshold, cfg.suppression) {
        println!("{}", e.to_json_line());
    }
    if let Some(t) = &a.trace_out {
        crate::io::write_atomic(t, trace.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn eval_class(a: &EvalClassArgs, ctx: &Context) -> CliResult<()> {
    if a.shots == 0 {
        return Err(usage("--shots must be at least 1"));
    }
    for p in [&a.out, &a.scores_out].into_iter().flatten() {
        require_parent(p)?;
    }
    let model = load_model(&a.model)?;
    let set = load_clipset(&a.clips)?;
    let recs = set.select(a.split.split());
    if recs.is_empty() {
        return Err(usage("no clips in the selected split"));
    }

    let clips = set.read(&recs)?;
    let audio: Vec<AudioClip> = clips.into_iter().map(|c| c.audio).collect();
    let items: Vec<LabeledEmbedding> = embed_clips(&model, &audio)?
        .into_iter()
        .zip(&recs)
        .map(|(embedding, r)| LabeledEmbedding {
            word: r.word.clone(),
            language: r.language.clone(),
            embedding,
        })
        .collect();
    let result = classification_protocol(&items, a.shots, ctx.seed)?;
    let mut lines = String::new();
    let mut scores = String::from("keyword,label,score\n");
    for k in &result.keywords {
        ctx.progress(&format!(
            "stage=eval-class keyword={} eer={:.4} top1={:.4} positives={} negatives={}",
            k.keyword, k.eer, k.top1, k.n_positive, k.n_negative
        ));
        lines.push_str(&serde_json::to_string(k).map_err(KwsError::from)?);
        lines.push('\n');
        for s in &k.pos_scores {
            let _ = writeln!(scores, "{},1,{s}", k.keyword);
        }
        for s in &k.neg_scores {
            let _ = writeln!(scores, "{},0,{s}", k.keyword);
        }
    }
    for w in &result.skipped {
        ctx.progress(&format!("warning: keyword `{w}` skipped"));
    }
    if let Some(p) = &a.out {
        crate::io::write_atomic(p, lines.as_bytes())?;
    }
    if let Some(p) = &a.scores_out {
        crate::io::write_atomic(p, scores.as_bytes())?;
    }
    println!(
        "{}",
        json!({
            "shots": a.shots,
            "keywords": result.keywords.len(),
            "skipped": result.skipped,
            "mean_eer": result.mean_eer,
            "mean_top1": result.mean_top1,
        })
    );
    Ok(())
}

pub fn eval_stream(a: &EvalStreamArgs, ctx: &Context) -> CliResult<()> {
    let cfg = stream_config(&a.stream, 0.0)?;
    if a.shots == 0 || a.targets == 0 {
        return Err(usage("--shots and --targets must be at least 1"));
    }
    if !(a.target_fa >= 0.0) || !(a.tolerance >= 0.0) {
        return Err(usage("--target-fa and --tolerance must be nonnegative"));
    }
    for p in [&a.out, &a.streams_out].into_iter().flatten() {
        require_parent(p)?;
    }
    let model = load_model(&a.model)?;
    let set = load_clipset(&a.clips)?;
    let groups = set.by_word(a.split.split());
    let keywords: Vec<String> = if a.keywords.is_empty() {
        groups.keys().cloned().collect()
    } else {
        a.keywords.clone()
    };
    for k in &keywords {
        if !groups.contains_key(k) {
            return Err(usage(format!("keyword `{k}` has no clips in the selected split")));
        }
    }

    let mut streams = Vec::new();
    let mut skipped = Vec::new();
    for (ki, kw) in keywords.iter().enumerate() {
        let mut own: Vec<&ClipRecord> = groups[kw].iter().map(|&i| &set.records[i]).collect();
        if own.len() < a.shots + a.targets {
            ctx.progress(&format!("warning: keyword `{kw}` has {} clips, need {}", own.len(), a.shots + a.targets));
            skipped.push(kw.clone());
            continue;
        }
        let seed = mix_seed(ctx.seed, EVAL_STREAM_SEED, ki as u64);
        own.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let others: Vec<&ClipRecord> = groups
            .iter()
            .filter(|(w, _)| *w != kw)
            .flat_map(|(_, v)| v.iter().map(|&i| &set.records[i]))
            .collect();
        let audio = |recs: &[&ClipRecord]| -> crate::Result<Vec<AudioClip>> {
            Ok(set.read(recs)?.into_iter().map(|c| c.audio).collect())
        };
        let examples = audio(&own[..a.shots])?;
        let targets = audio(&own[a.shots..a.shots + a.targets])?;
        let fillers = audio(&others)?;
        let profile = enroll_examples(kw, &embed_clips(&model, &examples)?)?;
        let test = build_kws_stream(kw, &targets, a.targets, &fillers, a.fillers, seed)?;
        let mut scorer = EmbeddingScorer::new(&model, vec![profile], FrontendConfig::default())?;
        let trace = score_trace(&test.audio, &mut scorer, &cfg)?;
        ctx.progress(&format!(
            "stage=eval-stream keyword={kw} windows={} truths={} seconds={:.1}",
            trace.len(),
            test.truths.len(),
            test.duration_s()
        ));
        let duration_s = test.duration_s();
        streams.push(ScoredStream {
            trace,
            truths: test.truths,
            duration_s,
        });
    }
    if streams.is_empty() {
        return Err(KwsError::InsufficientData("no keyword had enough clips for a stream".into()).into());
    }
    let r = fnr_at_fa(&streams, a.target_fa, cfg.suppression, a.tolerance)?;
    let hours = streams.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0;
    let summary = json!({
        "target_fa_per_hour": a.target_fa,
        "fnr": r.fnr,
        "threshold": r.threshold,
        "fa_per_hour": r.fa_per_hour,
        "reachable": r.reachable,
        "hours": hours,
        "keywords": streams.len(),
        "skipped": skipped,
    });
    if let Some(p) = &a.streams_out {
        crate::io::write_atomic(p, serde_json::to_string(&streams).map_err(KwsError::from)?.as_bytes())?;
    }
    if let Some(p) = &a.out {
        crate::io::write_atomic(p, format!("{summary}\n").as_bytes())?;
    }
    println!("{summary}");
    Ok(())
}

fn parse_scores(text: &str, origin: &str) -> crate::Result<(Vec<f64>, Vec<f64>)> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| KwsError::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut f = line.rsplitn(3, ',');
        let score: f64 = f.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| err("bad score"))?;
        match f.next().map(str::trim) {
            Some("1") => pos.push(score),
            Some("0") => neg.push(score),
            _ => return Err(err("label must be 0 or 1")),
        }
    }
    Ok((pos, neg))
}

pub fn export_det(a: &ExportDetArgs, _ctx: &Context) -> CliResult<()> {
    require_parent(&a.out)?;
    if !(a.suppression >= 0.0) || !(a.tolerance >= 0.0) {
        return Err(usage("--suppression and --tolerance must be nonnegative"));
    }
    match (&a.scores, &a.streams) {
        (Some(p), None) => {
            require_file(p)?;
            let text = crate::io::read_to_string(p).invalid()?;
            let (pos, neg) = parse_scores(&text, &p.display().to_string()).invalid()?;
            let points = det_curve(&pos, &neg)?;
            crate::io::write_atomic(&a.out, det_csv(&points).as_bytes())?;
            let e = compute_eer(&pos, &neg)?;
            println!("{}", json!({ "points": points.len(), "eer": e.eer, "threshold": e.threshold }));
        }
        (None, Some(p)) => {
            require_file(p)?;
            let text = crate::io::read_to_string(p).invalid()?;
            let streams: Vec<ScoredStream> = serde_json::from_str(&text)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let points = stream_sweep(&streams, a.suppression, a.tolerance)?;
            crate::io::write_atomic(&a.out, sweep_csv(&points).as_bytes())?;
            println!("{}", json!({ "points": points.len() }));
        }
        _ => return Err(usage("export-det needs exactly one of --scores or --streams")),
    }
    Ok(())
}

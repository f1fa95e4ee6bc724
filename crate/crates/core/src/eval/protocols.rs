use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{compute_eer, GroundTruthEvent};
use crate::audio::AudioClip;
use crate::enroll::{enroll, KeywordProfile};
use crate::error::{KwsError, Result};
use crate::model::Embedding;

/// One embedded recording of a word.
#[derive(Debug, Clone)]
pub struct LabeledEmbedding {
    pub word: String,
    pub language: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordResult {
    pub keyword: String,
    pub language: String,
    pub eer: f64,
    pub threshold: f64,
    /// Fraction of positives whose own profile outscores every other
    /// same-language profile.
    pub top1: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    #[serde(skip)]
    pub pos_scores: Vec<f64>,
    #[serde(skip)]
    pub neg_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub keywords: Vec<KeywordResult>,
    /// Keywords with too few recordings to leave any positive.
    pub skipped: Vec<String>,
    pub mean_eer: f64,
    pub mean_top1: f64,
}

/// Every word serves once as target: `n_examples` random recordings are
/// enrolled, the rest are positives and all other same-language words are
/// negatives.
pub fn classification_protocol(items: &[LabeledEmbedding], n_examples: usize, seed: u64) -> Result<ProtocolResult> {
    if n_examples == 0 {
        return Err(KwsError::invalid("at least one enrollment example is required"));
    }
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        groups.entry((it.language.clone(), it.word.clone())).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skipped = Vec::new();
    // (language, word) -> (profile, held-out indices)
    let mut enrolled: BTreeMap<(String, String), (KeywordProfile, Vec<usize>)> = BTreeMap::new();
    for (key, idx) in &groups {
        if idx.len() <= n_examples {
            skipped.push(key.1.clone());
            continue;
        }
        let pick = index::sample(&mut rng, idx.len(), n_examples).into_vec();
        let examples: Vec<Embedding> = pick.iter().map(|&j| items[idx[j]].embedding.clone()).collect();
        let rest: Vec<usize> = (0..idx.len()).filter(|j| !pick.contains(j)).map(|j| idx[j]).collect();
        enrolled.insert(key.clone(), (enroll(&key.1, &examples)?, rest));
    }
    let mut results = Vec::new();
    for ((lang, word), (profile, rest)) in &enrolled {
        let pos: Vec<f64> = rest
            .iter()
            .map(|&i| profile.embedding.cosine(&items[i].embedding))
            .collect::<Result<_>>()?;
        let neg_idx: Vec<usize> = groups
            .iter()
            .filter(|((l, w), _)| l == lang && w != word)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        if neg_idx.is_empty() {
            skipped.push(word.clone());
            continue;
        }
        let neg: Vec<f64> = neg_idx
            .iter()
            .map(|&i| profile.embedding.cosine(&items[i].embedding))
            .collect::<Result<_>>()?;
        let e = compute_eer(&pos, &neg)?;
        let rivals: Vec<&KeywordProfile> = enrolled
            .iter()
            .filter(|((l, w), _)| l == lang && w != word)
            .map(|(_, (p, _))| p)
            .collect();
        let mut correct = 0;
        for (&i, &s) in rest.iter().zip(&pos) {
            let mut wins = true;
            for r in &rivals {
                if r.embedding.cosine(&items[i].embedding)? >= s {
                    wins = false;
                    break;
                }
            }
            correct += wins as usize;
        }
        results.push(KeywordResult {
            keyword: word.clone(),
            language: lang.clone(),
            eer: e.eer,
            threshold: e.threshold,
            top1: correct as f64 / rest.len() as f64,
            n_positive: pos.len(),
            n_negative: neg.len(),
            pos_scores: pos,
            neg_scores: neg,
        });
    }
    if results.is_empty() {
        return Err(KwsError::InsufficientData("no keyword had enough recordings".into()));
    }
    let n = results.len() as f64;
    Ok(ProtocolResult {
        mean_eer: results.iter().map(|r| r.eer).sum::<f64>() / n,
        mean_top1: results.iter().map(|r| r.top1).sum::<f64>() / n,
        keywords: results,
        skipped,
    })
}

/// Concatenated evaluation audio with keyword-center ground truth.
#[derive(Debug, Clone)]
pub struct StreamTestSet {
    pub keyword: String,
    pub audio: AudioClip,
    pub truths: Vec<GroundTruthEvent>,
}

impl StreamTestSet {
    pub fn duration_s(&self) -> f64 {
        self.audio.duration()
    }

    pub fn duration_hours(&self) -> f64 {
        self.duration_s() / 3600.0
    }
}

enum Piece<'a> {
    Target(&'a AudioClip, f64),
    Filler(&'a AudioClip),
}

fn concatenate(keyword: &str, mut pieces: Vec<Piece<'_>>, rng: &mut ChaCha8Rng) -> Result<StreamTestSet> {
    pieces.shuffle(rng);
    let rate = match pieces.first() {
        Some(Piece::Target(c, _)) | Some(Piece::Filler(c)) => c.sample_rate,
        None => return Err(KwsError::InsufficientData("nothing to concatenate".into())),
    };
    let mut audio = AudioClip::silence(0, rate);
    let mut truths = Vec::new();
    for p in pieces {
        let offset = audio.len() as f64 / rate as f64;
        match p {
            Piece::Target(c, center) => {
                truths.push(GroundTruthEvent {
                    keyword: keyword.to_string(),
                    time: offset + center,
                });
                audio.extend(c)?;
            }
            Piece::Filler(c) => audio.extend(c)?,
        }
    }
    Ok(StreamTestSet {
        keyword: keyword.to_string(),
        audio,
        truths,
    })
}

fn pick<'a>(pool: &'a [AudioClip], n: usize, what: &str, rng: &mut ChaCha8Rng) -> Result<Vec<&'a AudioClip>> {
    if pool.len() < n {
        return Err(KwsError::InsufficientData(format!("need {n} {what}, have {}", pool.len())));
    }
    Ok(index::sample(rng, pool.len(), n).into_iter().map(|i| &pool[i]).collect())
}

/// Randomly interleaves `n_targets` keyword clips with `n_fillers`
/// sentences; each truth sits at the center of its inserted clip.
pub fn build_kws_stream(
    keyword: &str,
    targets: &[AudioClip],
    n_targets: usize,
    fillers: &[AudioClip],
    n_fillers: usize,
    seed: u64,
) -> Result<StreamTestSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = pick(targets, n_targets, "target clips", &mut rng)?;
    let f = pick(fillers, n_fillers, "filler sentences", &mut rng)?;
    let pieces = t
        .into_iter()
        .map(|c| Piece::Target(c, c.duration() / 2.0))
        .chain(f.into_iter().map(Piece::Filler))
        .collect();
    concatenate(keyword, pieces, &mut rng)
}

/// Sentence audio with word alignments `(word, start, end)` in seconds.
#[derive(Debug, Clone)]
pub struct AlignedSentence {
    pub audio: AudioClip,
    pub words: Vec<(String, f64, f64)>,
}

/// Interleaves sentences containing the keyword with filler sentences;
/// truth = sentence offset + aligned keyword midpoint.
pub fn build_search_stream(
    keyword: &str,
    containing: &[AlignedSentence],
    n_containing: usize,
    fillers: &[AudioClip],
    n_fillers: usize,
    seed: u64,
) -> Result<StreamTestSet> {
    if n_containing == 0 || containing.is_empty() {
        return Err(KwsError::InsufficientData("no sentences containing the keyword".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if containing.len() < n_containing {
        return Err(KwsError::InsufficientData(format!(
            "need {n_containing} containing sentences, have {}",
            containing.len()
        )));
    }
    let chosen = index::sample(&mut rng, containing.len(), n_containing).into_vec();
    let mut pieces = Vec::new();
    for i in chosen {
        let s = &containing[i];
        let (_, a, b) = s
            .words
            .iter()
            .find(|(w, _, _)| w == keyword)
            .ok_or_else(|| KwsError::invalid(format!("sentence {i} has no alignment for `{keyword}`")))?;
        pieces.push(Piece::Target(&s.audio, 0.5 * (a + b)));
    }
    let f = pick(fillers, n_fillers, "filler sentences", &mut rng)?;
    pieces.extend(f.into_iter().map(Piece::Filler));
    concatenate(keyword, pieces, &mut rng)
}

//! Brute-force reference implementations used as test oracles.

use qbe_kws::audio::AudioClip;
use qbe_kws::eval::{GroundTruthEvent, ScoredStream};
use qbe_kws::stream::{ScoreTrace, WindowScorer};
use qbe_kws::Result;
use rand::Rng;

/// EER by direct counting at every distinct score, accepting `score > t`,
/// with linear interpolation where FNR - FPR changes sign.
pub fn eer_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut ts: Vec<f64> = pos.iter().chain(neg).copied().collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut pts = vec![(0.0, 1.0)];
    for t in ts {
        let fnr = pos.iter().filter(|&&s| s <= t).count() as f64 / pos.len() as f64;
        let fpr = neg.iter().filter(|&&s| s > t).count() as f64 / neg.len() as f64;
        pts.push((fnr, fpr));
    }
    for w in pts.windows(2) {
        let (d0, d1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if d0 < 0.0 && d1 >= 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].0 + t * (w[1].0 - w[0].0);
        }
    }
    unreachable!("FNR - FPR ends at +1")
}

/// Replays a fixed score table, one row per window.
pub struct TableScorer {
    pub keywords: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub next: usize,
}

impl TableScorer {
    pub fn new(keywords: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        Self { keywords, rows, next: 0 }
    }
}

impl WindowScorer for TableScorer {
    fn keywords(&self) -> Vec<String> {
        self.keywords.clone()
    }

    fn score_window(&mut self, _: &AudioClip) -> Result<Vec<f64>> {
        let row = self.rows.get(self.next).cloned().expect("scorer asked for more windows than expected");
        self.next += 1;
        Ok(row)
    }
}

/// Scores on a coarse grid in [-1, 1] so that ties and exact threshold
/// hits occur.
pub fn random_rows(rng: &mut impl Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..k).map(|_| rng.gen_range(-20..=20) as f64 / 20.0).collect())
        .collect()
}

/// `(keyword index, time, score)` per emitted event: first maximum per
/// window, strict threshold, per-keyword dead time measured on window
/// centers in seconds.
pub fn detect_oracle(trace: &ScoreTrace, threshold: f64, suppression: f64) -> Vec<(usize, f64, f64)> {
    let rate = trace.sample_rate as f64;
    let mut last = vec![f64::NEG_INFINITY; trace.keywords.len()];
    let mut out = Vec::new();
    for (i, row) in trace.scores.iter().enumerate() {
        let mut k = 0;
        for j in 1..row.len() {
            if row[j] > row[k] {
                k = j;
            }
        }
        let time = (i * trace.stride) as f64 / rate + trace.window as f64 / rate / 2.0;
        if row[k] > threshold && time - last[k] >= suppression - 1e-9 {
            last[k] = time;
            out.push((k, time, row[k]));
        }
    }
    out
}

/// Greedy matching in detection order against the earliest free truth of
/// the same keyword within `tolerance`; returns `(tp, fn, fa)`.
pub fn match_oracle(dets: &[(String, f64)], truths: &[GroundTruthEvent], tolerance: f64) -> (usize, usize, usize) {
    let mut used = vec![false; truths.len()];
    let mut tp = 0;
    for (kw, t) in dets {
        let hit = (0..truths.len()).find(|&j| !used[j] && &truths[j].keyword == kw && (truths[j].time - t).abs() <= tolerance);
        if let Some(j) = hit {
            used[j] = true;
            tp += 1;
        }
    }
    (tp, truths.len() - tp, dets.len() - tp)
}

/// `(fa_per_hour, fnr)` of all streams at one threshold.
pub fn operating_point(streams: &[ScoredStream], threshold: f64, suppression: f64, tolerance: f64) -> (f64, f64) {
    let hours: f64 = streams.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0;
    let (mut fa, mut fnc, mut total) = (0, 0, 0);
    for s in streams {
        let dets: Vec<(String, f64)> = detect_oracle(&s.trace, threshold, suppression)
            .into_iter()
            .map(|(k, t, _)| (s.trace.keywords[k].clone(), t))
            .collect();
        let (_, f, a) = match_oracle(&dets, &s.truths, tolerance);
        fa += a;
        fnc += f;
        total += s.truths.len();
    }
    (fa as f64 / hours, if total == 0 { 0.0 } else { fnc as f64 / total as f64 })
}

/// Exhaustive minimum FNR among distinct trace scores with FA/h within
/// `target`, ties broken toward the higher threshold; `None` when no
/// threshold qualifies. Returns `(fnr, threshold, fa_per_hour)`.
pub fn fnr_at_fa_oracle(streams: &[ScoredStream], target: f64, suppression: f64, tolerance: f64) -> Option<(f64, f64, f64)> {
    let mut ts: Vec<f64> = streams.iter().flat_map(|s| s.trace.scores.iter().flatten().copied()).collect();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut best: Option<(f64, f64, f64)> = None;
    for t in ts {
        let (fa, fnr) = operating_point(streams, t, suppression, tolerance);
        if fa <= target && best.is_none_or(|b| fnr < b.0) {
            best = Some((fnr, t, fa));
        }
    }
    best
}

pub const TRACE_RATE: u32 = 1000;

/// Trace of `n` windows of 1 s with 0.1 s stride at [`TRACE_RATE`].
pub fn trace_of(keywords: Vec<String>, rows: Vec<Vec<f64>>) -> ScoreTrace {
    ScoreTrace {
        keywords,
        sample_rate: TRACE_RATE,
        window: TRACE_RATE as usize,
        stride: TRACE_RATE as usize / 10,
        scores: rows,
    }
}

/// Random multi-keyword stream: grid scores with boosted windows near
/// jittered keyword occurrences.
pub fn random_scored_stream(rng: &mut impl Rng) -> ScoredStream {
    let k = rng.gen_range(1..=3);
    let keywords: Vec<String> = (0..k).map(|i| format!("kw{i}")).collect();
    let n = rng.gen_range(20..300);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.gen_range(0..50) as f64 / 100.0).collect())
        .collect();
    let mut truths = Vec::new();
    let mut i = rng.gen_range(0..15);
    while i < n {
        let kw = rng.gen_range(0..k);
        rows[i][kw] = rng.gen_range(30..100) as f64 / 100.0;
        truths.push(GroundTruthEvent {
            keyword: keywords[kw].clone(),
            time: 0.5 + i as f64 * 0.1 + rng.gen_range(-0.3..0.3),
        });
        i += rng.gen_range(15..40);
    }
    ScoredStream {
        duration_s: (n - 1) as f64 * 0.1 + 1.0,
        trace: trace_of(keywords, rows),
        truths,
    }
}

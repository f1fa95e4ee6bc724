use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::stream::{detect_from_trace, DetectionEvent, ScoreTrace};

/// Matching tolerance between detection and keyword center, seconds.
pub const MATCH_TOLERANCE: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub keyword: String,
    /// Keyword center in seconds.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fn_: usize,
    pub fa: usize,
}

fn check_sorted<'a>(times: impl Iterator<Item = &'a f64>, what: &'static str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for &t in times {
        if !(t >= prev) {
            return Err(KwsError::Unsorted(what));
        }
        prev = t;
    }
    Ok(())
}

/// Greedy one-to-one matching in time order: each detection takes the
/// earliest unmatched truth of the same keyword within `tolerance`.
pub fn match_events(detections: &[DetectionEvent], truths: &[GroundTruthEvent], tolerance: f64) -> Result<MatchCounts> {
    check_sorted(detections.iter().map(|d| &d.time), "detections")?;
    check_sorted(truths.iter().map(|t| &t.time), "ground truth")?;
    let mut used = vec![false; truths.len()];
    let mut first_open = 0;
    let mut tp = 0;
    for d in detections {
        while first_open < truths.len() && (used[first_open] || truths[first_open].time < d.time - tolerance) {
            first_open += 1;
        }
        let hit = (first_open..truths.len())
            .take_while(|&j| truths[j].time <= d.time + tolerance)
            .find(|&j| !used[j] && truths[j].keyword == d.keyword && (truths[j].time - d.time).abs() <= tolerance);
        if let Some(j) = hit {
            used[j] = true;
            tp += 1;
        }
    }
    Ok(MatchCounts {
        tp,
        fn_: truths.len() - tp,
        fa: detections.len() - tp,
    })
}

pub fn fa_per_hour(fa: usize, hours: f64) -> Result<f64> {
    if !(hours > 0.0) {
        return Err(KwsError::invalid("duration must be positive"));
    }
    Ok(fa as f64 / hours)
}

/// A scored evaluation stream: trace, truths and duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStream {
    pub trace: ScoreTrace,
    pub truths: Vec<GroundTruthEvent>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub fa_per_hour: f64,
    pub fnr: f64,
    pub counts: MatchCounts,
}

/// Streaming operating points at every distinct trace score, using
/// `score > threshold`, suppression and matching for each.
pub fn stream_sweep(streams: &[ScoredStream], suppression: f64, tolerance: f64) -> Result<Vec<SweepPoint>> {
    let hours = streams.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0;
    let mut thresholds: Vec<f64> = streams.iter().flat_map(|s| s.trace.scores.iter().flatten().copied()).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds
        .into_iter()
        .rev()
        .map(|t| evaluate_threshold(streams, t, suppression, tolerance, hours))
        .collect()
}

fn evaluate_threshold(streams: &[ScoredStream], t: f64, suppression: f64, tolerance: f64, hours: f64) -> Result<SweepPoint> {
    let mut c = MatchCounts::default();
    for s in streams {
        let m = match_events(&detect_from_trace(&s.trace, t, suppression), &s.truths, tolerance)?;
        c.tp += m.tp;
        c.fn_ += m.fn_;
        c.fa += m.fa;
    }
    let total = c.tp + c.fn_;
    Ok(SweepPoint {
        threshold: t,
        fa_per_hour: fa_per_hour(c.fa, hours)?,
        fnr: if total == 0 { 0.0 } else { c.fn_ as f64 / total as f64 },
        counts: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FnrAtFa {
    pub fnr: f64,
    pub threshold: f64,
    pub fa_per_hour: f64,
    /// False when no threshold met the FA budget.
    pub reachable: bool,
}

/// Lowest FNR over thresholds whose FA/h stays within `target`; ties go to
/// the highest such threshold. Candidates are the distinct trace scores.
pub fn fnr_at_fa(streams: &[ScoredStream], target: f64, suppression: f64, tolerance: f64) -> Result<FnrAtFa> {
    if streams.is_empty() {
        return Err(KwsError::InsufficientData("no streams".into()));
    }
    let hours = streams.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0;
    if !(hours > 0.0) {
        return Err(KwsError::invalid("total duration must be positive"));
    }
    let n_truths: usize = streams.iter().map(|s| s.truths.len()).sum();
    let budget = target * hours;
    let mut thresholds: Vec<f64> = streams.iter().flat_map(|s| s.trace.scores.iter().flatten().copied()).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best: Option<SweepPoint> = None;
    for &t in thresholds.iter().rev() {
        let p = evaluate_threshold(streams, t, suppression, tolerance, hours)?;
        let events = p.counts.tp + p.counts.fa;
        if p.fa_per_hour <= target && best.is_none_or(|b| p.fnr < b.fnr) {
            best = Some(p);
        }
        // event counts only grow as the threshold drops, and at most
        // n_truths of them can be hits
        if events as f64 - n_truths as f64 > budget {
            break;
        }
    }
    Ok(match best {
        Some(p) => FnrAtFa {
            fnr: p.fnr,
            threshold: p.threshold,
            fa_per_hour: p.fa_per_hour,
            reachable: true,
        },
        None => FnrAtFa {
            fnr: 1.0,
            threshold: f64::INFINITY,
            fa_per_hour: f64::NAN,
            reachable: false,
        },
    })
}

/// `threshold,fa_per_hour,fnr` rows.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("threshold,fa_per_hour,fnr\n");
    for p in points {
        s.push_str(&format!("{},{:.6},{:.6}\n", p.threshold, p.fa_per_hour, p.fnr));
    }
    s
}

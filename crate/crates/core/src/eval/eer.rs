use crate::error::{KwsError, Result};

/// One operating point: accept when `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    /// Operating points in increasing threshold order, starting at `-inf`.
    pub det: Vec<DetPoint>,
}

fn sorted(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(KwsError::InsufficientData(format!("no {what} scores")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(KwsError::invalid(format!("non-finite {what} score")));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Operating points at `-inf` and at every distinct score.
pub fn det_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<DetPoint>> {
    let p = sorted(pos, "positive")?;
    let n = sorted(neg, "negative")?;
    let mut all: Vec<f64> = p.iter().chain(&n).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let (np, nn) = (p.len() as f64, n.len() as f64);
    let mut out = Vec::with_capacity(all.len() + 1);
    out.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        fnr: 0.0,
    });
    let (mut ip, mut ineg) = (0, 0);
    for t in all {
        while ip < p.len() && p[ip] <= t {
            ip += 1;
        }
        while ineg < n.len() && n[ineg] <= t {
            ineg += 1;
        }
        out.push(DetPoint {
            threshold: t,
            fpr: (n.len() - ineg) as f64 / nn,
            fnr: ip as f64 / np,
        });
    }
    Ok(out)
}

/// Equal error rate with linear interpolation between the two operating
/// points that bracket `FNR == FPR`.
pub fn compute_eer(pos: &[f64], neg: &[f64]) -> Result<EerResult> {
    let det = det_curve(pos, neg)?;
    // the last point rejects everything: fnr 1, fpr 0, so a crossing exists
    let i = det.iter().position(|d| d.fnr - d.fpr >= 0.0).expect("sweep ends at fnr 1, fpr 0");
    let (a, b) = (det[i - 1], det[i]);
    let (da, db) = (a.fnr - a.fpr, b.fnr - b.fpr);
    let t = da / (da - db);
    let eer = a.fnr + t * (b.fnr - a.fnr);
    let threshold = if a.threshold.is_finite() {
        a.threshold + t * (b.threshold - a.threshold)
    } else {
        b.threshold
    };
    Ok(EerResult { eer, threshold, det })
}

/// `threshold,fpr,fnr` rows.
pub fn det_csv(points: &[DetPoint]) -> String {
    let mut s = String::from("threshold,fpr,fnr\n");
    for p in points {
        s.push_str(&format!("{},{:.6},{:.6}\n", p.threshold, p.fpr, p.fnr));
    }
    s
}

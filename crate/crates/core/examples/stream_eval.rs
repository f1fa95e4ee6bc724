//! Streaming evaluation with a custom window scorer: cosine similarity
//! between the window's mean log-mel spectrum and a keyword template.
//! Reports the FNR at fixed false-alarm rates.
//!
//! cargo run --release --example stream_eval

use qbe_kws::audio::{AudioClip, FeatureMap, Frontend, FrontendConfig, SAMPLE_RATE};
use qbe_kws::data::toy::{toy_clip, ToyVocabulary};
use qbe_kws::eval::{build_kws_stream, fnr_at_fa, stream_sweep, ScoredStream, MATCH_TOLERANCE};
use qbe_kws::stream::{score_trace, StreamConfig, WindowScorer};

struct TemplateScorer {
    frontend: Frontend,
    keyword: String,
    template: Vec<f64>,
}

fn mean_spectrum(f: &FeatureMap) -> Vec<f64> {
    (0..f.n_mels)
        .map(|m| (0..f.n_frames).map(|t| f.get(m, t)).sum::<f64>() / f.n_frames as f64)
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-12)
}

impl WindowScorer for TemplateScorer {
    fn keywords(&self) -> Vec<String> {
        vec![self.keyword.clone()]
    }

    fn score_window(&mut self, window: &AudioClip) -> qbe_kws::Result<Vec<f64>> {
        let s = mean_spectrum(&self.frontend.compute(window)?);
        Ok(vec![cosine(&s, &self.template)])
    }
}

fn main() -> qbe_kws::Result<()> {
    let vocab = ToyVocabulary::generate(12, 4, 31)?;
    let frontend = Frontend::new(FrontendConfig::default())?;
    let keyword = vocab.words[0].name.clone();

    // template from five examples; the rest are stream targets
    let clips: Vec<AudioClip> = (0..25).map(|k| toy_clip(&vocab.words[0], SAMPLE_RATE, k).audio).collect();
    let mut template = vec![0.0; frontend.config().n_mels];
    for c in &clips[..5] {
        for (t, v) in template.iter_mut().zip(mean_spectrum(&frontend.compute(c)?)) {
            *t += v / 5.0;
        }
    }
    let fillers: Vec<AudioClip> = vocab.words[1..]
        .iter()
        .enumerate()
        .flat_map(|(w, word)| (0..10).map(move |k| toy_clip(word, SAMPLE_RATE, 1000 + 10 * w as u64 + k).audio))
        .collect();

    let mut scorer = TemplateScorer {
        frontend,
        keyword: keyword.clone(),
        template,
    };
    let cfg = StreamConfig::default();
    let mut streams = Vec::new();
    for seed in 0..2 {
        let test = build_kws_stream(&keyword, &clips[5..], 20, &fillers, 100, seed)?;
        let trace = score_trace(&test.audio, &mut scorer, &cfg)?;
        println!("stream {seed}: {:.0} s, {} windows, {} keyword occurrences", test.duration_s(), trace.len(), test.truths.len());
        streams.push(ScoredStream {
            duration_s: test.duration_s(),
            trace,
            truths: test.truths,
        });
    }

    let sweep = stream_sweep(&streams, cfg.suppression, MATCH_TOLERANCE)?;
    println!("{} operating points", sweep.len());
    for target in [1.0, 10.0, 100.0] {
        let r = fnr_at_fa(&streams, target, cfg.suppression, MATCH_TOLERANCE)?;
        println!(
            "FA/h <= {target:>5}: FNR {:.3} at threshold {:.4} (FA/h {:.1}, reachable {})",
            r.fnr, r.threshold, r.fa_per_hour, r.reachable
        );
    }
    Ok(())
}

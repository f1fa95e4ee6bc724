//! EER/DET and the classification protocol against direct recomputation.

mod common;

use common::oracles::eer_oracle;
use proptest::prelude::*;
use qbe_kws::eval::{classification_protocol, compute_eer, det_csv, det_curve, LabeledEmbedding};
use qbe_kws::model::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn worked_example() {
    let r = compute_eer(&[0.8, 0.2], &[0.6, 0.4]).unwrap();
    assert!((r.eer - 0.5).abs() < 1e-12);
    assert_eq!(eer_oracle(&[0.8, 0.2], &[0.6, 0.4]), 0.5);
}

#[test]
fn eer_matches_oracle_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..1000 {
        let (np, nn) = (rng.gen_range(1..60), rng.gen_range(1..60));
        let (pos, neg): (Vec<f64>, Vec<f64>) = if case % 2 == 0 {
            // continuous, overlapping
            (
                (0..np).map(|_| rng.gen_range(-0.2..1.0)).collect(),
                (0..nn).map(|_| rng.gen_range(-1.0..0.4)).collect(),
            )
        } else {
            // coarse grid with ties across classes
            (
                (0..np).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect(),
                (0..nn).map(|_| rng.gen_range(0..8) as f64 / 10.0).collect(),
            )
        };
        let got = compute_eer(&pos, &neg).unwrap().eer;
        let want = eer_oracle(&pos, &neg);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn empty_sides_are_errors() {
    assert!(compute_eer(&[], &[0.1]).is_err());
    assert!(compute_eer(&[0.1], &[]).is_err());
}

#[test]
fn det_csv_lists_every_point() {
    let det = det_curve(&[0.9, 0.7], &[0.1, 0.8]).unwrap();
    let csv = det_csv(&det);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,fpr,fnr"));
    assert_eq!(lines.count(), det.len());
}

proptest! {
    #[test]
    fn eer_is_a_rate_and_rank_based(
        pos in prop::collection::vec(-1.0f64..1.0, 1..50),
        neg in prop::collection::vec(-1.0f64..1.0, 1..50),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let e = compute_eer(&pos, &neg).unwrap().eer;
        prop_assert!((0.0..=1.0).contains(&e));
        let t = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let e2 = compute_eer(&t(&pos), &t(&neg)).unwrap().eer;
        prop_assert!((e - e2).abs() < 1e-9);
    }

    #[test]
    fn separated_scores_have_zero_eer(
        pos in prop::collection::vec(0.51f64..1.0, 1..30),
        neg in prop::collection::vec(-1.0f64..0.5, 1..30),
    ) {
        prop_assert_eq!(compute_eer(&pos, &neg).unwrap().eer, 0.0);
    }
}

fn noisy_items(rng: &mut ChaCha8Rng, words: usize, per_word: usize, noise: f64) -> Vec<LabeledEmbedding> {
    let centers: Vec<Vec<f64>> = (0..words).map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut items = Vec::new();
    for (w, c) in centers.iter().enumerate() {
        for _ in 0..per_word {
            let v: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-noise..noise)).collect();
            items.push(LabeledEmbedding {
                word: format!("w{w}"),
                language: if w % 2 == 0 { "en".into() } else { "de".into() },
                embedding: Embedding::new(v).unwrap(),
            });
        }
    }
    items
}

#[test]
fn protocol_scores_reproduce_reported_eer() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let items = noisy_items(&mut rng, 8, 12, 1.0);
    let r = classification_protocol(&items, 5, 3).unwrap();
    assert_eq!(r.keywords.len(), 8);
    for k in &r.keywords {
        // negatives come from the other same-language words only
        assert_eq!((k.n_positive, k.n_negative), (7, 36));
        assert_eq!((k.pos_scores.len(), k.neg_scores.len()), (7, 36));
        assert!((k.eer - eer_oracle(&k.pos_scores, &k.neg_scores)).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&k.top1));
    }
    let mean = r.keywords.iter().map(|k| k.eer).sum::<f64>() / 8.0;
    assert!((r.mean_eer - mean).abs() < 1e-12);
    assert_eq!(classification_protocol(&items, 5, 3).unwrap(), r);
}

use super::*;
use crate::audio::FeatureMap;
use crate::autodiff::{Graph, Tensor};
use crate::KwsError;

fn features(n_mels: usize, t: usize, seed: u64) -> FeatureMap {
    let values: Vec<f64> = (0..n_mels * t)
        .map(|i| (((i as u64 + 1) * (seed * 2 + 7)) as f64 * 0.618).sin() - 3.0)
        .collect();
    FeatureMap {
        n_mels,
        n_frames: t,
        values,
        frame_times: (0..t).map(|i| i as f64 * 0.01).collect(),
    }
}

fn small_spec() -> EmbeddingModelSpec {
    EmbeddingModelSpec {
        channels: [4, 4, 8, 8, 8],
        blocks: [1, 2, 1, 1],
        embedding_dim: 16,
        n_mels: 40,
    }
}

#[test]
fn backbone_parameter_count_near_reference() {
    let m = EmbeddingModel::new(EmbeddingModelSpec::default(), 1).unwrap();
    let n = m.parameter_count() as f64;
    assert!((n - 1.4e6).abs() / 1.4e6 <= 0.10, "{n}");
}

#[test]
fn stage_shapes_follow_table() {
    let m = EmbeddingModel::new(EmbeddingModelSpec::default(), 1).unwrap();
    for t in [40usize, 98, 100] {
        let f = features(40, t, 3);
        let x = m.batch_tensor(&[&f]).unwrap();
        let mut g = Graph::new(false);
        let xi = g.input(x);
        let (out, trace) = m.forward_traced(&mut g, xi).unwrap();
        assert_eq!(g.shape(out), &[1, 256]);
        let q = t.div_ceil(4);
        let expect: Vec<(&str, Vec<usize>)> = vec![
            ("conv1", vec![16, 20, t]),
            ("conv2", vec![16, 20, t]),
            ("conv3", vec![32, 10, t.div_ceil(2)]),
            ("conv4", vec![64, 5, q]),
            ("conv5", vec![128, 5, q]),
            ("freq_mean", vec![128, 1, q]),
            ("tap", vec![128]),
            ("fc", vec![256]),
        ];
        let got: Vec<(&str, Vec<usize>)> = trace.iter().map(|s| (s.stage.as_str(), s.shape.clone())).collect();
        assert_eq!(got, expect, "T={t}");
        for (stage, shape) in m.spec().stage_shapes(t) {
            let s = trace.iter().find(|s| s.stage == stage).unwrap();
            assert_eq!(s.shape, shape.to_vec());
        }
    }
}

#[test]
fn embed_is_deterministic_and_length_independent() {
    let m = EmbeddingModel::new(small_spec(), 4).unwrap();
    let a = features(40, 98, 1);
    let e1 = m.embed_one(&a).unwrap();
    let e2 = m.embed_one(&a).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(m.embed_one(&features(40, 80, 2)).unwrap().dim(), 16);
}

#[test]
fn wrong_mel_count_is_a_shape_error() {
    let m = EmbeddingModel::new(small_spec(), 4).unwrap();
    assert!(matches!(m.embed_one(&features(39, 98, 1)), Err(KwsError::Shape { .. })));
    assert!(m.embed_one(&features(40, 3, 1)).is_err());
}

#[test]
fn zero_head_returns_bias() {
    let m = EmbeddingModel::new(small_spec(), 4).unwrap();
    let mut head = ClassifierHead::new(16, 3, 1).unwrap();
    head.params_mut().by_name_mut("head.w").unwrap().tensor = Tensor::zeros(vec![3, 16]);
    head.params_mut().by_name_mut("head.b").unwrap().tensor = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
    let logits = head.classify(&m, &[&features(40, 50, 1)]).unwrap();
    assert_eq!(logits, vec![vec![0.5, -1.0, 2.0]]);
    let wrong = ClassifierHead::new(8, 3, 1).unwrap();
    assert!(wrong.classify(&m, &[&features(40, 50, 1)]).is_err());
}

#[test]
fn large_head_output_length() {
    let m = EmbeddingModel::new(small_spec(), 4).unwrap();
    let head = ClassifierHead::new(16, 3917, 1).unwrap();
    let logits = head.classify(&m, &[&features(40, 50, 1)]).unwrap();
    assert_eq!(logits[0].len(), 3917);
}

#[test]
fn set_trainable_freezes_named_stages() {
    let mut m = EmbeddingModel::new(small_spec(), 4).unwrap();
    m.set_trainable(&["conv1", "conv2", "conv3", "conv4"], false).unwrap();
    assert_eq!(m.trainable_stages(), vec!["conv5", "fc"]);
    for p in m.params().iter().filter(|p| p.trainable) {
        assert!(p.name.starts_with("conv5.") || p.name.starts_with("fc."), "{}", p.name);
    }
    m.set_trainable(&STAGES, true).unwrap();
    assert_eq!(m.trainable_stages().len(), STAGES.len());
    assert!(matches!(m.set_trainable(&["conv9"], false), Err(KwsError::UnknownStage(_))));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.kwsm");
    let m = EmbeddingModel::new(small_spec(), 9).unwrap();
    let head = ClassifierHead::new(16, 5, 2).unwrap();
    save_embedding_model(&path, &m, Some(&head)).unwrap();
    let (m2, h2) = load_embedding_model(&path).unwrap();
    assert_eq!(m2.spec(), m.spec());
    assert_eq!(h2.unwrap().n_classes(), 5);
    let card = std::fs::read_to_string(card_path(&path)).unwrap();
    assert!(card.contains("channels=4,4,8,8,8"));
    let f = features(40, 60, 5);
    let (a, b) = (m.embed_one(&f).unwrap(), m2.embed_one(&f).unwrap());
    assert!(a.cosine(&b).unwrap() > 1.0 - 1e-9);
    save_embedding_model(&path, &m2, None).unwrap();
    let (m3, h3) = load_embedding_model(&path).unwrap();
    assert!(h3.is_none());
    assert_eq!(m3, m2);
}

fn p2e_small() -> P2EModel {
    P2EModel::new(
        P2ESpec {
            phoneme_embed_dim: 8,
            lstm_hidden: 12,
            output_dim: 10,
            ..P2ESpec::default()
        },
        3,
    )
    .unwrap()
}

#[test]
fn p2e_stage_shapes() {
    let m = P2EModel::new(P2ESpec::default(), 1).unwrap();
    let mut g = Graph::new(false);
    let (out, trace) = m.forward_traced(&mut g, &[vec![3, 17, 40]]).unwrap();
    assert_eq!(g.shape(out), &[1, 256]);
    let got: Vec<(&str, Vec<usize>)> = trace.iter().map(|s| (s.stage.as_str(), s.shape.clone())).collect();
    assert_eq!(
        got,
        vec![("lookup", vec![128, 3]), ("lstm", vec![256, 3]), ("mean", vec![256]), ("fc", vec![256])]
    );
}

#[test]
fn p2e_padding_is_masked() {
    let m = p2e_small();
    let single = m.embed(&[4, 9, 60]).unwrap();
    let batch = m
        .embed_batch(&[vec![4, 9, 60, 0, 0, 0, 0, 0], vec![1, 2, 3, 4, 5, 6, 7, 8]])
        .unwrap();
    for (a, b) in single.values().iter().zip(batch[0].values()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn p2e_is_a_sequence_model() {
    let m = p2e_small();
    let a = m.embed(&[5, 5, 5]).unwrap();
    let b = m.embed(&[5]).unwrap();
    assert!(a.values().iter().zip(b.values()).any(|(x, y)| (x - y).abs() > 1e-9));
    let f = m.embed(&[1, 2, 3]).unwrap();
    let r = m.embed(&[3, 2, 1]).unwrap();
    assert!(f.values().iter().zip(r.values()).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn p2e_rejects_bad_ids() {
    let m = p2e_small();
    assert!(matches!(m.embed(&[70]), Err(KwsError::OutOfVocabulary { id: 70, .. })));
    assert!(m.embed(&[]).is_err());
    assert!(m.embed_batch(&[vec![1, 0, 2]]).is_err());
}

#[test]
fn p2e_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.kwsm");
    let m = p2e_small();
    save_p2e_model(&path, &m).unwrap();
    let m2 = load_p2e_model(&path).unwrap();
    assert_eq!(m2.spec(), m.spec());
    assert!(m.embed(&[1, 2]).unwrap().cosine(&m2.embed(&[1, 2]).unwrap()).unwrap() > 1.0 - 1e-9);
}

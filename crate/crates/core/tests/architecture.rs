//! Stage shapes of both networks and the backbone size.

use qbe_kws::audio::{AudioClip, FeatureMap, Frontend, FrontendConfig, SAMPLE_RATE};
use qbe_kws::autodiff::Graph;
use qbe_kws::model::{ClassifierHead, EmbeddingModel, EmbeddingModelSpec, P2EModel, P2ESpec, PhonemeInventory};

fn synthetic(t: usize) -> FeatureMap {
    FeatureMap {
        n_mels: 40,
        n_frames: t,
        values: (0..40 * t).map(|i| (i as f64 * 0.37).sin() - 2.0).collect(),
        frame_times: (0..t).map(|i| i as f64 * 0.01).collect(),
    }
}

fn trace(model: &EmbeddingModel, f: &FeatureMap) -> Vec<(String, Vec<usize>)> {
    let mut g = Graph::new(false);
    let x = g.input(model.batch_tensor(&[f]).unwrap());
    let (out, trace) = model.forward_traced(&mut g, x).unwrap();
    assert_eq!(g.shape(out), &[1, 256]);
    trace.into_iter().map(|s| (s.stage, s.shape)).collect()
}

/// Output sizes listed for an input of 1 x 40 x T, with ceil division.
fn table(t: usize) -> Vec<(String, Vec<usize>)> {
    let (t2, t4) = (t.div_ceil(2), t.div_ceil(4));
    [
        ("conv1", vec![16, 20, t]),
        ("conv2", vec![16, 20, t]),
        ("conv3", vec![32, 10, t2]),
        ("conv4", vec![64, 5, t4]),
        ("conv5", vec![128, 5, t4]),
        ("freq_mean", vec![128, 1, t4]),
        ("tap", vec![128]),
        ("fc", vec![256]),
    ]
    .into_iter()
    .map(|(s, v)| (s.to_string(), v))
    .collect()
}

#[test]
fn embedding_stage_shapes() {
    let model = EmbeddingModel::new(EmbeddingModelSpec::default(), 0).unwrap();
    for t in [40, 98, 100] {
        assert_eq!(trace(&model, &synthetic(t)), table(t), "T={t}");
    }
}

#[test]
fn one_second_of_audio_gives_98_frames() {
    let frontend = Frontend::new(FrontendConfig::default()).unwrap();
    let f = frontend.compute(&AudioClip::silence(SAMPLE_RATE as usize, SAMPLE_RATE)).unwrap();
    assert_eq!((f.n_mels, f.n_frames), (40, 98));
    let model = EmbeddingModel::new(EmbeddingModelSpec::default(), 0).unwrap();
    assert_eq!(trace(&model, &f), table(98));
}

#[test]
fn backbone_size_is_near_reference() {
    let model = EmbeddingModel::new(EmbeddingModelSpec::default(), 0).unwrap();
    let n = model.parameter_count() as f64;
    assert!((n - 1.4e6).abs() <= 0.14e6, "{n} weights");
}

#[test]
fn head_maps_embedding_to_classes() {
    let model = EmbeddingModel::new(EmbeddingModelSpec::default(), 0).unwrap();
    let head = ClassifierHead::new(256, 7, 1).unwrap();
    let p = head.classify(&model, &[&synthetic(98), &synthetic(98)]).unwrap();
    assert_eq!(p.len(), 2);
    assert!(p.iter().all(|row| row.len() == 7));
}

#[test]
fn p2e_shapes() {
    let spec = P2ESpec::default();
    assert_eq!(spec.phoneme_vocab_size, PhonemeInventory::arpabet().len());
    assert_eq!(spec.phoneme_vocab_size, 69);
    let model = P2EModel::new(spec, 0).unwrap();
    assert_eq!(model.params().by_name("p2e.lookup").unwrap().tensor.shape(), &[70, 128]);
    for n in [1usize, 4, 11] {
        let ids: Vec<usize> = (1..=n).collect();
        let mut g = Graph::new(false);
        let (out, trace) = model.forward_traced(&mut g, &[ids]).unwrap();
        assert_eq!(g.shape(out), &[1, 256]);
        let got: Vec<(String, Vec<usize>)> = trace.into_iter().map(|s| (s.stage, s.shape)).collect();
        let want: Vec<(String, Vec<usize>)> = [
            ("lookup", vec![128, n]),
            ("lstm", vec![256, n]),
            ("mean", vec![256]),
            ("fc", vec![256]),
        ]
        .into_iter()
        .map(|(s, v)| (s.to_string(), v))
        .collect();
        assert_eq!(got, want, "N={n}");
    }
}

#[test]
fn p2e_batch_with_padding() {
    let model = P2EModel::new(P2ESpec::default(), 0).unwrap();
    let batch = vec![vec![5, 6, 7, 0, 0], vec![1, 2, 3, 4, 5]];
    let mut g = Graph::new(false);
    let out = model.forward(&mut g, &batch).unwrap();
    assert_eq!(g.shape(out), &[2, 256]);
    let alone = model.embed(&[5, 6, 7]).unwrap();
    for (a, b) in alone.values().iter().zip(&g.value(out).data()[..256]) {
        assert!((a - b).abs() < 1e-12);
    }
}

//! End-to-end runs of the command-line tool: exit codes, progress lines
//! and byte-identical artifacts for repeated seeded runs.

mod common;

use common::cli::{artifacts, ok, pipeline, run};

#[test]
fn every_verb_is_deterministic_and_quiet_changes_nothing() {
    let (a, b, q) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = pipeline(a.path(), "3", false);
    let out_b = pipeline(b.path(), "3", false);
    let out_q = pipeline(q.path(), "3", true);

    let (fa, fb, fq) = (artifacts(a.path()), artifacts(b.path()), artifacts(q.path()));
    for name in [
        "toy/clips.jsonl", "toy/lexicon.txt", "cls.kwsm", "cls.jsonl", "circ.kwsm", "prof.kwsm", "trace.csv", "scores.csv",
        "class.jsonl", "det.csv", "streams.json", "stream.json", "sweep.csv", "p2e.kwsm", "p2e.jsonl", "base.kwsm",
        "base.jsonl",
    ] {
        assert!(fa.contains_key(name), "missing artifact {name}");
    }
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between identical runs");
        assert!(bytes == &fq[name], "{name} differs under --quiet");
    }
    for ((verb, x), (_, y)) in out_a.iter().zip(&out_b) {
        assert_eq!(x.stdout, y.stdout, "stdout of {verb}");
    }
    for (verb, o) in &out_q {
        assert!(o.stderr.is_empty(), "{verb} wrote to stderr under --quiet");
    }

    let c = tempfile::tempdir().unwrap();
    pipeline(c.path(), "4", true);
    let fc = artifacts(c.path());
    assert_ne!(fa["cls.kwsm"], fc["cls.kwsm"]);
}

#[test]
fn progress_lines_carry_the_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // eight held-out clips per word leave positives after five enrollment shots
    ok(d, &["prepare", "--toy-words", "3", "--toy-clips", "16", "--toy-val", "8", "--out", "toy"]);
    let out = ok(
        d,
        &[
            "train-classifier", "--clips", "toy", "--out", "m.kwsm", "--channels", "4,4,4,4,8", "--blocks", "1,1,1,1",
            "--embedding-dim", "8", "--set", "epochs=2", "--set", "batch_size=4",
        ],
    );
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().filter(|l| l.starts_with("stage=")).collect();
    assert_eq!(lines.len(), 2, "{stderr}");
    for (i, line) in lines.iter().enumerate() {
        let keys: Vec<&str> = line.split(' ').map(|kv| kv.split('=').next().unwrap()).collect();
        assert_eq!(keys, ["stage", "epoch", "lr", "loss", "val_acc", "val_eer", "secs"], "{line}");
        assert!(line.starts_with(&format!("stage=classifier epoch={}/2 ", i + 1)));
    }
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary.is_object());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &["--version"]).status.code(), Some(0));
    let bogus = run(d, &["bogus"]);
    assert_eq!(bogus.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bogus.stderr).to_lowercase().contains("usage"));
    assert_eq!(run(d, &["spot", "--model", "nope.kwsm", "--profiles", "p.kwsm", "--audio", "x.wav"]).status.code(), Some(1));
    assert_eq!(run(d, &["prepare", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(d, &["prepare", "--toy-words", "3", "--toy-clips", "4", "--toy-val", "9", "--out", "x"]).status.code(), Some(1));

    ok(d, &["prepare", "--toy-words", "3", "--toy-clips", "8", "--toy-val", "3", "--out", "toy"]);
    let bad_set = run(d, &["train-classifier", "--clips", "toy", "--out", "m.kwsm", "--set", "epochs=zero"]);
    assert_eq!(bad_set.status.code(), Some(1));
    let unknown_key = run(d, &["train-classifier", "--clips", "toy", "--out", "m.kwsm", "--set", "nonsense=1"]);
    assert_eq!(unknown_key.status.code(), Some(1));
    // a corrupt checkpoint passes argument validation but fails at load time
    std::fs::write(d.join("broken.kwsm"), b"not a checkpoint").unwrap();
    let broken = run(d, &["eval-class", "--model", "broken.kwsm", "--clips", "toy"]);
    assert!(matches!(broken.status.code(), Some(1) | Some(2)), "{:?}", broken.status);
    assert!(String::from_utf8_lossy(&broken.stderr).starts_with("error:"));
}

//! Drives the command-line binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_qbe-kws");

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs every verb once in `dir`; returns each verb's stdout and stderr.
pub fn pipeline(dir: &Path, seed: &str, quiet: bool) -> Vec<(String, Output)> {
    let mut global = vec!["--seed", seed];
    if quiet {
        global.push("--quiet");
    }
    let with = |rest: &[&str]| -> Vec<String> { global.iter().chain(rest).map(|s| s.to_string()).collect() };
    let mut outputs = Vec::new();
    let mut step = |name: &str, rest: &[&str]| {
        let args = with(rest);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        outputs.push((name.to_string(), ok(dir, &refs)));
    };
    step("prepare", &["prepare", "--toy-words", "4", "--toy-clips", "12", "--toy-val", "6", "--out", "toy"]);
    step(
        "train-classifier",
        &[
            "train-classifier", "--clips", "toy", "--out", "cls.kwsm", "--channels", "4,4,8,8,16", "--blocks", "1,1,1,1",
            "--embedding-dim", "16", "--set", "epochs=2", "--set", "batch_size=8", "--report", "cls.jsonl",
        ],
    );
    step(
        "finetune-circle",
        &[
            "finetune-circle", "--model", "cls.kwsm", "--clips", "toy", "--out", "circ.kwsm", "--set", "epochs=1", "--set",
            "pk_p=3", "--set", "pk_k=4", "--report", "circ.jsonl",
        ],
    );
    let word = first_word(dir);
    let shots: Vec<String> = (0..5).map(|k| format!("toy/clips/{word}_{k:04}.wav")).collect();
    let mut enroll = vec!["enroll", "--model", "circ.kwsm", "--keyword", &word, "--out", "prof.kwsm"];
    enroll.extend(shots.iter().map(String::as_str));
    step("enroll", &enroll);
    let probe = format!("toy/clips/{word}_0009.wav");
    step(
        "spot",
        &["spot", "--model", "circ.kwsm", "--profiles", "prof.kwsm", "--audio", &probe, "--threshold", "0.5", "--trace-out", "trace.csv"],
    );
    step(
        "eval-class",
        &["eval-class", "--model", "circ.kwsm", "--clips", "toy", "--shots", "2", "--scores-out", "scores.csv", "--out", "class.jsonl"],
    );
    step("export-det-scores", &["export-det", "--scores", "scores.csv", "--out", "det.csv"]);
    step(
        "eval-stream",
        &[
            "eval-stream", "--model", "circ.kwsm", "--clips", "toy", "--shots", "2", "--targets", "4", "--fillers", "10",
            "--target-fa", "100", "--streams-out", "streams.json", "--out", "stream.json",
        ],
    );
    step("export-det-streams", &["export-det", "--streams", "streams.json", "--out", "sweep.csv"]);
    step(
        "train-p2e",
        &[
            "train-p2e", "--model", "circ.kwsm", "--clips", "toy", "--lexicon", "toy/lexicon.txt", "--out", "p2e.kwsm",
            "--val-fraction", "0.25", "--set", "epochs=2", "--report", "p2e.jsonl",
        ],
    );
    let phonemes = lexicon_entry(dir, &word);
    step(
        "enroll-phonemes",
        &["enroll", "--p2e", "p2e.kwsm", "--keyword", "spoken", "--phonemes", &phonemes, "--out", "prof.kwsm", "--merge", "--model", "circ.kwsm"],
    );
    step(
        "finetune-baseline",
        &[
            "finetune-baseline", "--model", "cls.kwsm", "--clips", "toy", "--keyword", &word, "--out", "base.kwsm", "--set",
            "epochs=1", "--set", "batch_size=64", "--report", "base.jsonl",
        ],
    );
    outputs
}

fn first_word(dir: &Path) -> String {
    let lexicon = std::fs::read_to_string(dir.join("toy/lexicon.txt")).unwrap();
    lexicon.split_whitespace().next().unwrap().to_string()
}

fn lexicon_entry(dir: &Path, word: &str) -> String {
    let lexicon = std::fs::read_to_string(dir.join("toy/lexicon.txt")).unwrap();
    let line = lexicon.lines().find(|l| l.split_whitespace().next() == Some(word)).unwrap();
    line.split_whitespace().skip(1).collect::<Vec<_>>().join(" ")
}

/// Every file under `dir`, keyed by relative path.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexcascade::lexicon::{Lexicon, Normalization};
use lexcascade::postgram::{
    save_posteriorgram, write_manifest, Alphabet, Posteriorgram, WordSample,
};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Hand-simulated fixture: what each of the three classifiers reads for
/// each word, in stage order.
pub const GOLDEN_WORDS: &[(&str, &str, [&str; 3])] = &[
    ("w1", "chat", ["chat", "chat", "chat"]),
    ("w2", "chien", ["chien", "chin", "chien"]),
    ("w3", "ai", ["ai", "a", "ai"]),
    ("w4", "niche", ["chien", "nche", "chien"]),
];

pub const GOLDEN_LEXICON: &[&str] = &["chat", "chien", "niche", "ai"];

/// A peak frame for every character followed by a blank frame.
pub fn peaky(alphabet: &Arc<Alphabet>, text: &str) -> Posteriorgram {
    let c = alphabet.len();
    let row = |hot: usize| {
        let mut r = vec![0.1 / (c - 1) as f64; c];
        r[hot] = 0.9;
        r
    };
    let mut rows = Vec::new();
    for class in alphabet.encode(text).unwrap() {
        rows.push(row(class));
        rows.push(row(0));
    }
    if rows.is_empty() {
        rows.push(row(0));
    }
    Posteriorgram::from_weights(alphabet.clone(), &rows).unwrap()
}

/// Writes the fixture inputs (not the expected report) under `dir`.
pub fn write_golden_inputs(dir: &Path) {
    let alphabet = Arc::new(Alphabet::from_chars("acehint".chars()).unwrap());
    std::fs::create_dir_all(dir).unwrap();
    let samples: Vec<WordSample> = GOLDEN_WORDS
        .iter()
        .map(|(id, r, _)| WordSample::new(*id, *r))
        .collect();
    write_manifest(&samples, dir.join("manifest.jsonl")).unwrap();
    std::fs::write(dir.join("classifiers.txt"), "c1\nc2\nc3\n").unwrap();
    for k in 0..3 {
        let cdir = dir.join(format!("c{}", k + 1));
        std::fs::create_dir_all(&cdir).unwrap();
        for (sample, (_, _, reads)) in samples.iter().zip(GOLDEN_WORDS) {
            save_posteriorgram(
                &peaky(&alphabet, reads[k]),
                sample.posteriorgram_path(&cdir),
            )
            .unwrap();
        }
    }
    std::fs::write(dir.join("words.txt"), GOLDEN_LEXICON.join("\n") + "\n").unwrap();
    Lexicon::build(GOLDEN_LEXICON, Normalization::Lower)
        .save(dir.join("lexicon.lexv"))
        .unwrap();
}

/// CLI arguments for the golden cascade run.
pub fn golden_args(dir: &Path, report: &Path, workers: usize) -> Vec<String> {
    let p = |name: &str| dir.join(name).display().to_string();
    [
        "lexcascade",
        "cascade",
        "run",
        "--manifest",
        &p("manifest.jsonl"),
        "--classifiers",
        &p("classifiers.txt"),
        "--lexicon",
        &p("lexicon.lexv"),
        "--mnda-long",
        "2",
        "--mnda-short",
        "3",
        "--short-len",
        "4",
        "--fallback",
        "none",
        "--seed",
        "0",
        "--workers",
        &workers.to_string(),
        "--report",
        &report.display().to_string(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Checks a golden report against the hand simulation; returns the first
/// disagreement.
pub fn check_hand_simulation(report: &lexcascade::report::RunReport) -> Result<(), String> {
    use lexcascade::cascade::Status;
    // (status, text, stage, stages decoded)
    let expected = [
        (Status::Accepted, Some("chat"), Some(2), 2),
        (Status::Accepted, Some("chien"), Some(3), 3),
        (Status::Rejected, None, None, 3),
        (Status::Accepted, Some("chien"), Some(3), 3),
    ];
    for (o, (status, text, stage, decoded)) in report.outcomes.iter().zip(expected) {
        let got = (o.status, o.text.as_deref(), o.stage_accepted, o.trace.len());
        if got != (status, text, stage, decoded) {
            return Err(format!("{}: got {got:?}", o.id));
        }
    }
    let m = &report.metrics;
    if (m.wrr, m.wer, m.wjr) != (50.0, 25.0, 25.0) {
        return Err(format!("rates {} {} {}", m.wrr, m.wer, m.wjr));
    }
    // niche -> chien costs 4 edits over 14 reference characters of decided
    // words; the rejected "ai" adds 2 errors and 2 characters.
    if (m.cer, m.cer_all_words) != (4.0 / 14.0, 6.0 / 16.0) {
        return Err(format!("cer {} {}", m.cer, m.cer_all_words));
    }
    // 11 hypotheses evaluated; only the third "chien" for niche is a
    // wrong member with enough agreement.
    let o = &report.pfa.overall;
    if (o.trials, o.false_acceptances) != (11, 1) {
        return Err(format!("pfa {}/{}", o.false_acceptances, o.trials));
    }
    if report.stage_histogram != [0, 1, 2] || report.stage_decodes != [4, 4, 3] {
        return Err(format!(
            "histogram {:?} decodes {:?}",
            report.stage_histogram, report.stage_decodes
        ));
    }
    Ok(())
}

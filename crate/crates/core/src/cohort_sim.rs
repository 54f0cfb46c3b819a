//! Seeded synthetic cohorts of complementary classifiers.
//!
//! Each word gets one peak frame per character inside a blank-dominated
//! posteriorgram. Every classifier may corrupt a character's peak, turning it
//! into a substitution or a deletion. Per `(word, character)` there is one
//! corruption draw shared by the whole cohort and one private draw per
//! classifier; a classifier follows the shared draw with probability `rho`.
//! `eps` sets how often a draw is a corruption, so it fixes the
//! single-classifier error rate, while `rho` sets how alike classifiers are.
//!
//! # Random streams
//!
//! A word's key is FNV-1a over `(seed, word id)`. ChaCha8 seeded with that key
//! runs stream 0 for the shared draws and stream `c + 1` for classifier `c`.
//! Every character consumes a fixed number of uniforms from each stream
//! (three shared; four private: follow-shared, corrupt, kind, target), so
//! changing `eps` or `rho` never shifts the draws of later characters.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc_decode::best_path_decode;
use crate::error::{Error, Result};
use crate::metrics::wcso_aligned;
use crate::postgram::{
    save_posteriorgram, write_manifest, Alphabet, Posteriorgram, WordSample, BLANK,
};
use crate::seeding;
use crate::source::PosteriorSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_classifiers: usize,
    /// Mass on the emitted class at peak frames, and on the blank elsewhere.
    pub gamma: f64,
    pub frames_per_char: usize,
    /// Per-character corruption probability.
    pub eps: f64,
    /// Probability a classifier follows the cohort-wide draw.
    pub rho: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_classifiers: 100,
            gamma: 0.9,
            frames_per_char: 4,
            eps: 0.0,
            rho: 0.0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.frames_per_char < 2 {
            return bad("frames_per_char must be >= 2");
        }
        if !(0.0..1.0).contains(&self.eps) {
            return bad("eps must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if self.n_classifiers == 0 {
            return bad("n_classifiers must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Peak {
    Clean,
    Substituted(usize),
    Deleted,
}

/// Three uniforms: corrupt?, kind, target.
fn draw_peak(rng: &mut ChaCha8Rng, eps: f64, true_class: usize, classes: usize) -> Peak {
    let corrupt: f64 = rng.gen();
    let kind: f64 = rng.gen();
    let target: f64 = rng.gen();
    if corrupt >= eps {
        return Peak::Clean;
    }
    // non-blank classes other than the true one
    let others = classes - 2;
    if kind < 0.5 && others > 0 {
        let mut c = 1 + ((target * others as f64) as usize).min(others - 1);
        if c >= true_class {
            c += 1;
        }
        Peak::Substituted(c)
    } else {
        Peak::Deleted
    }
}

/// Spreads `mass` uniformly over non-blank classes not in `skip`; falls back
/// to the blank when no such class exists.
fn spread(row: &mut [f64], mass: f64, skip: &[usize]) {
    let targets = (1..row.len()).filter(|c| !skip.contains(c)).count();
    if targets == 0 {
        row[BLANK] += mass;
        return;
    }
    let each = mass / targets as f64;
    for (c, w) in row.iter_mut().enumerate().skip(1) {
        if !skip.contains(&c) {
            *w += each;
        }
    }
}

fn peak_row(classes: usize, true_class: usize, peak: Peak, gamma: f64) -> Vec<f64> {
    let rest = 1.0 - gamma;
    let mut row = vec![0.0; classes];
    match peak {
        Peak::Clean => {
            row[true_class] += gamma;
            row[BLANK] += rest / 2.0;
            spread(&mut row, rest / 2.0, &[true_class]);
        }
        Peak::Substituted(wrong) => {
            row[wrong] += gamma;
            row[true_class] += rest / 2.0;
            row[BLANK] += rest / 4.0;
            spread(&mut row, rest / 4.0, &[true_class, wrong]);
        }
        Peak::Deleted => {
            row[BLANK] += gamma;
            row[true_class] += rest / 2.0;
            spread(&mut row, rest / 2.0, &[true_class]);
        }
    }
    row
}

/// The posteriorgram classifier `classifier` emits for `word`.
///
/// `T = frames_per_char * len(word)` (one blank frame for an empty word); the
/// peak of character `i` sits at frame `i * f + f / 2`.
pub fn synth_posteriorgram(
    spec: &CohortSpec,
    alphabet: &Arc<Alphabet>,
    word: &WordSample,
    classifier: usize,
) -> Result<Posteriorgram> {
    let labels = alphabet.encode(&word.transcript)?;
    let classes = alphabet.len();
    let f = spec.frames_per_char;
    let frames = (f * labels.len()).max(1);
    let key = seeding::derive_key(&[spec.seed], &word.id);
    let mut shared = seeding::rng(key, 0);
    let mut own = seeding::rng(key, classifier as u64 + 1);

    let mut background = vec![(1.0 - spec.gamma) / (classes - 1) as f64; classes];
    background[BLANK] = spec.gamma;
    let mut rows = vec![background; frames];
    for (i, &class) in labels.iter().enumerate() {
        let cohort_peak = draw_peak(&mut shared, spec.eps, class, classes);
        let follow: f64 = own.gen();
        let private_peak = draw_peak(&mut own, spec.eps, class, classes);
        let peak = if follow < spec.rho {
            cohort_peak
        } else {
            private_peak
        };
        rows[i * f + f / 2] = peak_row(classes, class, peak, spec.gamma);
    }
    Posteriorgram::from_weights(alphabet.clone(), &rows)
}

/// A simulated cohort usable anywhere a directory cohort is.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub spec: CohortSpec,
    pub alphabet: Arc<Alphabet>,
}

impl SimulatedCohort {
    pub fn new(spec: CohortSpec, alphabet: Arc<Alphabet>) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, alphabet })
    }

    /// Best-path output of `classifier` on every word.
    pub fn decode_all(&self, classifier: usize, words: &[WordSample]) -> Result<Vec<String>> {
        words
            .par_iter()
            .map(|w| Ok(best_path_decode(&self.load(classifier, w)?).text))
            .collect()
    }

    /// Raw best-path WER in percent, averaged over `classifiers`.
    pub fn raw_wer(&self, words: &[WordSample], classifiers: usize) -> Result<f64> {
        let mut wrong = 0usize;
        for c in 0..classifiers {
            let out = self.decode_all(c, words)?;
            wrong += out
                .iter()
                .zip(words)
                .filter(|(h, w)| **h != w.transcript)
                .count();
        }
        Ok(100.0 * wrong as f64 / (words.len() * classifiers).max(1) as f64)
    }

    /// Mean pairwise WCSO in percent among the first `classifiers`.
    pub fn mean_wcso(&self, words: &[WordSample], classifiers: usize) -> Result<f64> {
        let outputs = (0..classifiers)
            .map(|c| self.decode_all(c, words))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..outputs.len() {
            for j in i + 1..outputs.len() {
                total += wcso_aligned(&outputs[i], &outputs[j]);
                pairs += 1;
            }
        }
        Ok(if pairs == 0 {
            100.0
        } else {
            total / pairs as f64
        })
    }

    /// Writes one directory per classifier (`c000`, `c001`, ...), a
    /// `manifest.jsonl` and a `classifiers.txt` list under `out`.
    pub fn write(&self, out: &Path, words: &[WordSample]) -> Result<()> {
        std::fs::create_dir_all(out)?;
        write_manifest(words, out.join("manifest.jsonl"))?;
        let names: Vec<String> = (0..self.spec.n_classifiers)
            .map(|c| format!("c{c:03}"))
            .collect();
        std::fs::write(out.join("classifiers.txt"), names.join("\n") + "\n")?;
        names.par_iter().enumerate().try_for_each(|(c, name)| {
            let dir = out.join(name);
            std::fs::create_dir_all(&dir)?;
            for w in words {
                save_posteriorgram(&self.load(c, w)?, w.posteriorgram_path(&dir))?;
            }
            Ok(())
        })
    }
}

impl PosteriorSource for SimulatedCohort {
    fn classifier_count(&self) -> usize {
        self.spec.n_classifiers
    }

    fn load(&self, classifier: usize, word: &WordSample) -> Result<Posteriorgram> {
        if classifier >= self.spec.n_classifiers {
            return Err(Error::MissingPosteriorgram {
                word: word.id.clone(),
                classifier,
            });
        }
        synth_posteriorgram(&self.spec, &self.alphabet, word, classifier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    /// Raw single-classifier WER in percent.
    pub wer: Option<f64>,
    /// Mean pairwise WCSO in percent.
    pub wcso: Option<f64>,
    pub wer_tolerance: f64,
    pub wcso_tolerance: f64,
    /// Classifiers measured per probe.
    pub probe_classifiers: usize,
    pub max_iterations: usize,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            wer: None,
            wcso: None,
            wer_tolerance: 3.0,
            wcso_tolerance: 5.0,
            probe_classifiers: 10,
            max_iterations: 24,
        }
    }
}

/// Bisects a monotone response for `target` on `[lo, hi]`; returns the probe
/// closest to the target.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    iterations: usize,
    increasing: bool,
    mut measure: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let value = measure(mid)?;
        if best.map_or(true, |(_, v)| (value - target).abs() < (v - target).abs()) {
            best = Some((mid, value));
        }
        if (value < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.ok_or_else(|| Error::TargetUnreachable("no bisection iterations".into()))
}

/// Tunes `eps` toward a raw WER target, then `rho` toward a WCSO target, and
/// checks the result on the held-out seed `seed + 1`.
pub fn calibrate(
    template: &CohortSpec,
    alphabet: &Arc<Alphabet>,
    words: &[WordSample],
    targets: &CalibrationTargets,
) -> Result<CohortSpec> {
    template.validate()?;
    let probes = targets.probe_classifiers.clamp(1, template.n_classifiers);
    let mut spec = *template;
    let cohort = |s: CohortSpec| SimulatedCohort::new(s, alphabet.clone());

    if let Some(target) = targets.wer {
        let at_zero = cohort(CohortSpec { eps: 0.0, ..spec })?.raw_wer(words, probes)?;
        spec.eps = if target <= at_zero {
            if at_zero - target > targets.wer_tolerance {
                return Err(Error::TargetUnreachable(format!(
                    "WER {target} is below the error-free floor {at_zero:.2}"
                )));
            }
            0.0
        } else {
            let hi = 0.999;
            let top = cohort(CohortSpec { eps: hi, ..spec })?.raw_wer(words, probes)?;
            if target > top + targets.wer_tolerance {
                return Err(Error::TargetUnreachable(format!(
                    "WER {target} exceeds the maximum {top:.2}"
                )));
            }
            bisect(0.0, hi, target, targets.max_iterations, true, |eps| {
                cohort(CohortSpec { eps, ..spec })?.raw_wer(words, probes)
            })?
            .0
        };
    }

    if let Some(target) = targets.wcso {
        let wcso_probes = probes.max(2);
        spec.rho = if target >= 100.0 {
            1.0
        } else {
            let floor = cohort(CohortSpec { rho: 0.0, ..spec })?.mean_wcso(words, wcso_probes)?;
            if target <= floor {
                if floor - target > targets.wcso_tolerance {
                    return Err(Error::TargetUnreachable(format!(
                        "WCSO {target} is below the independent-error floor {floor:.2}"
                    )));
                }
                0.0
            } else {
                bisect(0.0, 1.0, target, targets.max_iterations, true, |rho| {
                    cohort(CohortSpec { rho, ..spec })?.mean_wcso(words, wcso_probes)
                })?
                .0
            }
        };
    }

    let held_out = cohort(CohortSpec {
        seed: spec.seed.wrapping_add(1),
        ..spec
    })?;
    if let Some(target) = targets.wer {
        let got = held_out.raw_wer(words, probes)?;
        if (got - target).abs() > targets.wer_tolerance {
            return Err(Error::TargetUnreachable(format!(
                "held-out WER {got:.2} misses target {target}"
            )));
        }
    }
    if let Some(target) = targets.wcso {
        let got = held_out.mean_wcso(words, probes.max(2))?;
        if (got - target).abs() > targets.wcso_tolerance {
            return Err(Error::TargetUnreachable(format!(
                "held-out WCSO {got:.2} misses target {target}"
            )));
        }
    }
    Ok(spec)
}

/// Pseudo-French vocabulary for synthetic lexicons and word sets.
pub mod words {
    use super::*;

    const ONSETS: &[&str] = &[
        "", "", "b", "c", "d", "f", "g", "j", "l", "m", "n", "p", "r", "s", "t", "v", "ch", "br",
        "tr", "pl", "gr", "cr", "fr", "qu", "bl", "pr",
    ];
    const NUCLEI: &[&str] = &[
        "a", "e", "i", "o", "u", "é", "è", "ou", "ai", "an", "on", "eu", "oi", "in", "ê", "au",
    ];
    const CODAS: &[&str] = &["", "", "", "", "r", "s", "l", "n", "t", "x", "rs", "nt"];
    // weights for 1..=5 syllables
    const SYLLABLES: &[f64] = &[0.12, 0.38, 0.30, 0.14, 0.06];

    /// Letters the generator can emit, plus digits and word symbols so that
    /// substitutions can also land outside the vocabulary's letters.
    pub fn alphabet() -> Arc<Alphabet> {
        let mut chars: Vec<char> = ONSETS
            .iter()
            .chain(NUCLEI)
            .chain(CODAS)
            .flat_map(|s| s.chars())
            .collect();
        chars.extend("abcdefghijklmnopqrstuvwxyzàâçéèêëîïôûùüœ'-0123456789".chars());
        Arc::new(Alphabet::from_chars(chars).expect("non-empty alphabet"))
    }

    fn syllable(rng: &mut ChaCha8Rng) -> String {
        let pick = |rng: &mut ChaCha8Rng, set: &[&'static str]| set[rng.gen_range(0..set.len())];
        let mut s = String::new();
        s.push_str(pick(rng, ONSETS));
        s.push_str(pick(rng, NUCLEI));
        s.push_str(pick(rng, CODAS));
        s
    }

    fn word(rng: &mut ChaCha8Rng) -> String {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut n = SYLLABLES.len();
        for (i, w) in SYLLABLES.iter().enumerate() {
            acc += w;
            if u < acc {
                n = i + 1;
                break;
            }
        }
        (0..n).map(|_| syllable(rng)).collect()
    }

    /// `count` distinct pseudo-words in generation order.
    pub fn pseudo_words(count: usize, seed: u64) -> Vec<String> {
        let mut rng = seeding::rng(seeding::derive_key(&[seed], "pseudo-words"), 0);
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let w = word(&mut rng);
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    }

    /// Manifest records `w00000`, `w00001`, ... for `words`.
    pub fn samples(words: &[String]) -> Vec<WordSample> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| WordSample::new(format!("w{i:05}"), w.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_alphabet() -> Arc<Alphabet> {
        Arc::new(Alphabet::from_chars("abdemnrz".chars()).unwrap())
    }

    #[test]
    fn clean_cohort_decodes_exactly() {
        let spec = CohortSpec {
            n_classifiers: 5,
            ..CohortSpec::default()
        };
        let alpha = small_alphabet();
        let word = WordSample::new("w0", "demander");
        for c in 0..5 {
            let p = synth_posteriorgram(&spec, &alpha, &word, c).unwrap();
            assert_eq!(p.frames(), 32);
            assert_eq!(best_path_decode(&p).text, "demander");
        }
    }

    #[test]
    fn repeated_letters_survive_two_frames_per_char() {
        let spec = CohortSpec {
            frames_per_char: 2,
            ..CohortSpec::default()
        };
        let p =
            synth_posteriorgram(&spec, &small_alphabet(), &WordSample::new("x", "aab"), 0).unwrap();
        assert_eq!(best_path_decode(&p).text, "aab");
    }

    #[test]
    fn unknown_character_is_reported() {
        let spec = CohortSpec::default();
        let err = synth_posteriorgram(&spec, &small_alphabet(), &WordSample::new("x", "abc"), 0)
            .unwrap_err();
        assert!(matches!(err, Error::UnknownCharacter(c) if c == "c"));
    }

    #[test]
    fn full_sharing_makes_classifiers_identical() {
        let spec = CohortSpec {
            eps: 0.4,
            rho: 1.0,
            ..CohortSpec::default()
        };
        let alpha = small_alphabet();
        let word = WordSample::new("w7", "demander");
        let first = synth_posteriorgram(&spec, &alpha, &word, 0).unwrap();
        for c in 1..20 {
            assert_eq!(synth_posteriorgram(&spec, &alpha, &word, c).unwrap(), first);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = CohortSpec {
            eps: 0.3,
            rho: 0.5,
            seed: 11,
            ..CohortSpec::default()
        };
        let alpha = small_alphabet();
        let word = WordSample::new("w1", "rabane");
        let a = synth_posteriorgram(&spec, &alpha, &word, 3).unwrap();
        let b = synth_posteriorgram(&spec, &alpha, &word, 3).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn spec_ranges_are_enforced() {
        let ok = CohortSpec::default();
        assert!(ok.validate().is_ok());
        for bad in [
            CohortSpec { gamma: 0.0, ..ok },
            CohortSpec {
                frames_per_char: 1,
                ..ok
            },
            CohortSpec { eps: 1.0, ..ok },
            CohortSpec { rho: 1.5, ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn pseudo_words_are_distinct_and_encodable() {
        let words = words::pseudo_words(2000, 3);
        let set: HashSet<_> = words.iter().collect();
        assert_eq!(set.len(), 2000);
        let alpha = words::alphabet();
        assert!(words.iter().all(|w| alpha.encode(w).is_ok()));
        assert_eq!(words, words::pseudo_words(2000, 3));
    }

    #[test]
    fn zero_wer_target_gives_zero_eps() {
        let alpha = words::alphabet();
        let samples = words::samples(&words::pseudo_words(50, 1));
        let spec = calibrate(
            &CohortSpec {
                n_classifiers: 4,
                eps: 0.2,
                ..CohortSpec::default()
            },
            &alpha,
            &samples,
            &CalibrationTargets {
                wer: Some(0.0),
                ..CalibrationTargets::default()
            },
        )
        .unwrap();
        assert_eq!(spec.eps, 0.0);
        let spec = calibrate(
            &CohortSpec {
                n_classifiers: 4,
                eps: 0.2,
                ..CohortSpec::default()
            },
            &alpha,
            &samples,
            &CalibrationTargets {
                wcso: Some(100.0),
                ..CalibrationTargets::default()
            },
        )
        .unwrap();
        assert_eq!(spec.rho, 1.0);
    }
}

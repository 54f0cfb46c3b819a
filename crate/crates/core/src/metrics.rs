//! Evaluation quantities: edit alignments, word/character rates, false
//! acceptance estimates by word length, and cohort similarity (WCSO).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cascade::{AgreementTracker, DecisionOutcome, MndaRule, Status};
use crate::error::{Error, Result};
use crate::lexicon::Normalization;

/// Unit-cost edit counts turning a reference into a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditAlignment {
    pub substitutions: usize,
    /// Hypothesis characters absent from the reference.
    pub insertions: usize,
    /// Reference characters missing from the hypothesis.
    pub deletions: usize,
}

impl EditAlignment {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein alignment over Unicode scalar values. On backtrace ties a
/// substitution (or match) is preferred over a deletion, and a deletion over
/// an insertion.
pub fn levenshtein_align(reference: &str, hypothesis: &str) -> EditAlignment {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    let cols = h.len() + 1;
    let mut d = vec![0usize; (r.len() + 1) * cols];
    for j in 0..cols {
        d[j] = j;
    }
    for i in 1..=r.len() {
        d[i * cols] = i;
        for j in 1..cols {
            let diag = d[(i - 1) * cols + j - 1] + usize::from(r[i - 1] != h[j - 1]);
            let up = d[(i - 1) * cols + j] + 1;
            let left = d[i * cols + j - 1] + 1;
            d[i * cols + j] = diag.min(up).min(left);
        }
    }
    let mut out = EditAlignment::default();
    let (mut i, mut j) = (r.len(), h.len());
    while i > 0 || j > 0 {
        let here = d[i * cols + j];
        if i > 0 && j > 0 {
            let cost = usize::from(r[i - 1] != h[j - 1]);
            if d[(i - 1) * cols + j - 1] + cost == here {
                out.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * cols + j] + 1 == here {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

/// Word-level rates in percent and the character error rate as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub words: usize,
    pub accepted: usize,
    pub fallback_decoded: usize,
    pub rejected: usize,
    pub correct: usize,
    /// Accepted by the cascade but different from the reference.
    pub false_acceptances: usize,
    pub wrr: f64,
    pub wer: f64,
    pub wjr: f64,
    /// Edit distance over reference characters, non-rejected words only.
    pub cer: f64,
    /// Same, counting each rejected word as an empty hypothesis.
    pub cer_all_words: f64,
}

/// Computes WRR/WER/WJR/CER for outcomes against `references` (id to
/// transcript). Texts are compared after `normalization`.
pub fn run_metrics(
    outcomes: &[DecisionOutcome],
    references: &HashMap<String, String>,
    normalization: Normalization,
) -> Result<RunMetrics> {
    let mut m = RunMetrics {
        words: outcomes.len(),
        ..RunMetrics::default()
    };
    let (mut errors, mut ref_chars, mut all_errors, mut all_chars) =
        (0usize, 0usize, 0usize, 0usize);
    let mut wrong = 0usize;
    for o in outcomes {
        let reference = references
            .get(&o.id)
            .ok_or_else(|| Error::MissingReference(o.id.clone()))?;
        let reference = normalization.apply(reference);
        let chars = reference.chars().count();
        all_chars += chars;
        match (o.status, &o.text) {
            (Status::Rejected, _) | (_, None) => {
                m.rejected += 1;
                all_errors += chars;
            }
            (status, Some(text)) => {
                let text = normalization.apply(text);
                let dist = levenshtein_align(&reference, &text).distance();
                errors += dist;
                ref_chars += chars;
                all_errors += dist;
                if status == Status::Accepted {
                    m.accepted += 1;
                } else {
                    m.fallback_decoded += 1;
                }
                if text == reference {
                    m.correct += 1;
                } else {
                    wrong += 1;
                    if status == Status::Accepted {
                        m.false_acceptances += 1;
                    }
                }
            }
        }
    }
    if m.words > 0 {
        let n = m.words as f64;
        m.wrr = 100.0 * m.correct as f64 / n;
        m.wer = 100.0 * wrong as f64 / n;
        m.wjr = 100.0 * m.rejected as f64 / n;
    }
    m.cer = ratio(errors, ref_chars);
    m.cer_all_words = ratio(all_errors, all_chars);
    Ok(m)
}

/// `run_metrics` using the reference stored in each outcome.
pub fn outcome_metrics(outcomes: &[DecisionOutcome], normalization: Normalization) -> RunMetrics {
    let refs = outcomes
        .iter()
        .map(|o| (o.id.clone(), o.reference.clone()))
        .collect();
    run_metrics(outcomes, &refs, normalization).expect("every outcome carries its reference")
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Reference-length bins; bin `i` covers `[edges[i], edges[i + 1])` and the
/// last bin is open-ended. Lengths below the first edge fall in the first bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBins {
    edges: Vec<usize>,
}

impl LengthBins {
    pub fn new(mut edges: Vec<usize>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        assert!(!edges.is_empty(), "at least one bin edge");
        Self { edges }
    }

    fn bin_of(&self, len: usize) -> usize {
        self.edges.partition_point(|&e| e <= len).saturating_sub(1)
    }
}

impl Default for LengthBins {
    /// `1, 2, ..., 10, 11+`
    fn default() -> Self {
        Self::new((1..=11).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaBin {
    pub min_len: usize,
    /// Inclusive; `None` for the open-ended bin.
    pub max_len: Option<usize>,
    pub trials: u64,
    pub false_acceptances: u64,
    pub estimate: f64,
}

impl PfaBin {
    fn new(min_len: usize, max_len: Option<usize>, trials: u64, false_acceptances: u64) -> Self {
        let estimate = if trials == 0 {
            0.0
        } else {
            false_acceptances as f64 / trials as f64
        };
        Self {
            min_len,
            max_len,
            trials,
            false_acceptances,
            estimate,
        }
    }
}

/// Estimated probability that an evaluated hypothesis is wrong, in the
/// lexicon, and backed by enough agreement to be accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaTable {
    pub bins: Vec<PfaBin>,
    pub overall: PfaBin,
}

impl PfaTable {
    /// Pools every bin lying entirely within `min_len..=max_len`.
    pub fn pooled(&self, min_len: usize, max_len: usize) -> PfaBin {
        let (trials, fa) = self
            .bins
            .iter()
            .filter(|b| b.min_len >= min_len && b.max_len.is_some_and(|m| m <= max_len))
            .fold((0, 0), |(t, f), b| (t + b.trials, f + b.false_acceptances));
        PfaBin::new(min_len, Some(max_len), trials, fa)
    }
}

/// Counts, per reference-length bin, every hypothesis the cascade evaluated
/// (trials) and those that were wrong, lexicon members, and had reached the
/// agreement `rule` demands at their stage (false acceptances). With
/// `MndaRule::uniform(1)` this is the plain verification-rule error rate.
pub fn estimate_pfa(
    outcomes: &[DecisionOutcome],
    bins: &LengthBins,
    rule: &MndaRule,
    normalization: Normalization,
) -> PfaTable {
    let n = bins.edges.len();
    let mut trials = vec![0u64; n];
    let mut fas = vec![0u64; n];
    for o in outcomes {
        let reference = normalization.apply(&o.reference);
        let bin = bins.bin_of(reference.chars().count());
        let mut tracker = AgreementTracker::new();
        for h in &o.trace {
            let count = tracker.push(&h.text, h.in_lexicon);
            trials[bin] += 1;
            if h.in_lexicon
                && h.text != *reference
                && count >= rule.threshold(h.text.chars().count())
            {
                fas[bin] += 1;
            }
        }
    }
    let table: Vec<PfaBin> = (0..n)
        .map(|i| {
            let max = bins.edges.get(i + 1).map(|e| e - 1);
            PfaBin::new(bins.edges[i], max, trials[i], fas[i])
        })
        .collect();
    let overall = PfaBin::new(0, None, trials.iter().sum(), fas.iter().sum());
    PfaTable {
        bins: table,
        overall,
    }
}

/// Decoded text per word id for one classifier.
pub type Outputs = BTreeMap<String, String>;

/// Percentage of words on which two classifiers emit identical strings.
pub fn wcso(a: &Outputs, b: &Outputs) -> Result<f64> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::WordSetMismatch);
    }
    Ok(wcso_aligned(a.values(), b.values()))
}

/// WCSO over two word-aligned sequences.
pub fn wcso_aligned<'a, A, B>(a: A, b: B) -> f64
where
    A: IntoIterator<Item = &'a String>,
    B: IntoIterator<Item = &'a String>,
{
    let (same, total) = a
        .into_iter()
        .zip(b)
        .fold((0usize, 0usize), |(s, t), (x, y)| {
            (s + usize::from(x == y), t + 1)
        });
    if total == 0 {
        100.0
    } else {
        100.0 * same as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WcsoSeries {
    /// WCSO of every unordered pair `(i, j)`, `i < j`, row-major.
    pub pairwise: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `pairwise`, in percent like the mean.
    pub std: f64,
    /// WCSO of consecutive classifiers `(i, i + 1)`.
    pub consecutive: Vec<f64>,
    /// Least-squares slope of `consecutive` against 1-based index.
    pub slope: f64,
}

/// Pairwise and consecutive similarity across a cohort given word-aligned
/// outputs (`outputs[classifier][word]`).
pub fn wcso_series(outputs: &[Vec<String>]) -> Result<WcsoSeries> {
    if outputs.len() < 2 {
        return Err(Error::ConfigInvalid(
            "WCSO needs at least two classifiers".into(),
        ));
    }
    let words = outputs[0].len();
    if outputs.iter().any(|o| o.len() != words) {
        return Err(Error::WordSetMismatch);
    }
    let mut pairwise = Vec::with_capacity(outputs.len() * (outputs.len() - 1) / 2);
    for i in 0..outputs.len() {
        for j in i + 1..outputs.len() {
            pairwise.push(wcso_aligned(&outputs[i], &outputs[j]));
        }
    }
    let (mean, std) = mean_std(&pairwise);
    let consecutive: Vec<f64> = outputs
        .windows(2)
        .map(|w| wcso_aligned(&w[0], &w[1]))
        .collect();
    let xs: Vec<f64> = (1..=consecutive.len()).map(|i| i as f64).collect();
    let slope = ols_slope(&xs, &consecutive);
    Ok(WcsoSeries {
        pairwise,
        mean,
        std,
        consecutive,
        slope,
    })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ordinary least-squares slope; 0 when `xs` has no spread.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::StageHypothesis;
    use proptest::prelude::*;

    fn outcome(id: &str, reference: &str, status: Status, text: Option<&str>) -> DecisionOutcome {
        DecisionOutcome {
            id: id.into(),
            reference: reference.into(),
            status,
            text: text.map(String::from),
            stage_accepted: None,
            agreement: 0,
            trace: Vec::new(),
            fallback: None,
            elapsed_ns: None,
        }
    }

    #[test]
    fn empty_reference_means_insertions() {
        let a = levenshtein_align("", "abc");
        assert_eq!(a.distance(), 3);
        assert_eq!(a.insertions, 3);
        let a = levenshtein_align("abc", "");
        assert_eq!(a.deletions, 3);
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein_align("kitten", "sitting").distance(), 3);
        let a = levenshtein_align("demander", "demandez");
        assert_eq!((a.distance(), a.substitutions), (1, 1));
        let a = levenshtein_align("demander", "demande");
        assert_eq!((a.distance(), a.deletions), (1, 1));
    }

    #[test]
    fn counting_rates() {
        let outcomes = vec![
            outcome("1", "chat", Status::Accepted, Some("chat")),
            outcome("2", "chien", Status::Accepted, Some("chien")),
            outcome("3", "niche", Status::Accepted, Some("chien")),
            outcome("4", "ai", Status::Rejected, None),
        ];
        let m = outcome_metrics(&outcomes, Normalization::Lower);
        assert_eq!((m.wrr, m.wer, m.wjr), (50.0, 25.0, 25.0));
        assert_eq!(m.false_acceptances, 1);
        let d = levenshtein_align("niche", "chien").distance() as f64;
        assert_eq!(m.cer, d / 14.0);
        assert_eq!(m.cer_all_words, (d + 2.0) / 16.0);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let outcomes = vec![outcome("1", "chat", Status::Accepted, Some("chat"))];
        let err = run_metrics(&outcomes, &HashMap::new(), Normalization::None).unwrap_err();
        assert!(matches!(err, Error::MissingReference(id) if id == "1"));
    }

    #[test]
    fn all_correct() {
        let outcomes = vec![outcome("1", "Chat", Status::Accepted, Some("chat"))];
        let m = outcome_metrics(&outcomes, Normalization::Lower);
        assert_eq!((m.wrr, m.wer, m.wjr, m.cer), (100.0, 0.0, 0.0, 0.0));
    }

    fn traced(reference: &str, hyps: &[(&str, bool)]) -> DecisionOutcome {
        let mut o = outcome("w", reference, Status::Rejected, None);
        o.trace = hyps
            .iter()
            .enumerate()
            .map(|(i, &(t, m))| StageHypothesis {
                stage: i + 1,
                classifier: i,
                text: t.into(),
                in_lexicon: m,
                score: 0.0,
            })
            .collect();
        o
    }

    #[test]
    fn pfa_counts_by_reference_length() {
        // 50 trials on a 3-letter word, 2 of them wrong lexicon members
        let mut hyps = vec![("abc", true); 48];
        hyps.push(("abd", true));
        hyps.push(("abe", true));
        let table = estimate_pfa(
            &[traced("abc", &hyps)],
            &LengthBins::default(),
            &MndaRule::uniform(1),
            Normalization::None,
        );
        let bin = &table.bins[2];
        assert_eq!((bin.min_len, bin.max_len), (3, Some(3)));
        assert_eq!((bin.trials, bin.false_acceptances), (50, 2));
        assert_eq!(bin.estimate, 0.04);
        assert_eq!(table.overall.trials, 50);
        assert_eq!(table.pooled(1, 3).estimate, 0.04);
        let strict = estimate_pfa(
            &[traced("abc", &hyps)],
            &LengthBins::default(),
            &MndaRule::uniform(2),
            Normalization::None,
        );
        assert_eq!(strict.overall.false_acceptances, 0);
    }

    #[test]
    fn long_words_share_the_open_bin() {
        let table = estimate_pfa(
            &[traced("abcdefghijklmn", &[("x", true)])],
            &LengthBins::default(),
            &MndaRule::uniform(1),
            Normalization::None,
        );
        let last = table.bins.last().unwrap();
        assert_eq!(
            (last.min_len, last.max_len, last.false_acceptances),
            (11, None, 1)
        );
    }

    #[test]
    fn wcso_basics() {
        let a: Outputs = [("1", "a"), ("2", "b"), ("3", "c"), ("4", "d")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut b = a.clone();
        assert_eq!(wcso(&a, &b).unwrap(), 100.0);
        b.insert("3".into(), "x".into());
        b.insert("4".into(), "y".into());
        assert_eq!(wcso(&a, &b).unwrap(), 50.0);
        b.remove("4");
        assert!(matches!(wcso(&a, &b), Err(Error::WordSetMismatch)));
    }

    #[test]
    fn exact_line_slope() {
        assert_eq!(ols_slope(&[1.0, 2.0, 3.0], &[70.0, 69.0, 68.0]), -1.0);
        assert_eq!(ols_slope(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_with_swapped_indels(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let x = levenshtein_align(&a, &b);
            let y = levenshtein_align(&b, &a);
            prop_assert_eq!(x.distance(), y.distance());
            prop_assert!(x.deletions <= a.chars().count());
            // the tie rule may redistribute, but indel balance is fixed by lengths
            prop_assert_eq!(x.deletions as i64 - x.insertions as i64, a.len() as i64 - b.len() as i64);
        }

        #[test]
        fn triangle_inequality(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
            let d = |x: &str, y: &str| levenshtein_align(x, y).distance();
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }
    }
}

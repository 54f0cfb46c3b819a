//! The verification cascade.
//!
//! Classifiers are visited in a fixed order. After each stage the hypotheses
//! produced so far for a word are grouped; the most frequent one that is a
//! lexicon member is accepted once its count reaches the minimum number of
//! decision agreements (MNDA) for its length. An accepted word leaves the
//! cascade immediately, so later classifiers never see it. Words nobody
//! accepts are rejected, or handed to a lexicon Viterbi decode over averaged
//! posteriors when a fallback is configured.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc_decode::{best_path_decode, LexiconDecoder, Source, ViterbiStrategy};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Normalization};
use crate::metrics::levenshtein_align;
use crate::postgram::{average_posteriors, WordSample};
use crate::seeding;
use crate::source::PosteriorSource;

/// Agreement required before accepting a hypothesis, by hypothesis length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MndaRule {
    pub long: u32,
    pub short: u32,
    /// Hypotheses with fewer characters than this are "short".
    pub short_len: usize,
}

impl MndaRule {
    pub fn uniform(mnda: u32) -> Self {
        Self {
            long: mnda,
            short: mnda,
            short_len: 1,
        }
    }

    pub fn threshold(&self, chars: usize) -> u32 {
        if chars < self.short_len {
            self.short
        } else {
            self.long
        }
    }
}

/// What happens to words still unaccepted after the last stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fallback {
    None,
    /// Lexicon Viterbi decode over the mean posteriors of `k` random classifiers.
    Viterbi {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub mnda_long: u32,
    pub mnda_short: u32,
    pub short_len_threshold: usize,
    pub fallback: Fallback,
    /// Classifier indices in stage order; empty means identity.
    pub order: Vec<usize>,
    /// When false every classifier decodes every word (analysis mode); the
    /// first acceptance still decides the outcome.
    pub early_exit: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            mnda_long: 3,
            mnda_short: 10,
            short_len_threshold: 4,
            fallback: Fallback::None,
            order: Vec::new(),
            early_exit: true,
        }
    }
}

impl CascadeConfig {
    pub fn mnda(&self) -> MndaRule {
        MndaRule {
            long: self.mnda_long,
            short: self.mnda_short,
            short_len: self.short_len_threshold,
        }
    }

    /// Checks parameter ranges and that `order` is a permutation of `0..classifiers`.
    pub fn validate(&self, classifiers: usize) -> Result<()> {
        if self.mnda_long < 1 || self.mnda_short < self.mnda_long {
            return Err(Error::ConfigInvalid(format!(
                "need mnda_short >= mnda_long >= 1, got {} and {}",
                self.mnda_short, self.mnda_long
            )));
        }
        if self.short_len_threshold < 1 {
            return Err(Error::ConfigInvalid(
                "short_len_threshold must be >= 1".into(),
            ));
        }
        if let Fallback::Viterbi { k } = self.fallback {
            if k < 1 {
                return Err(Error::ConfigInvalid("fallback k must be >= 1".into()));
            }
        }
        if classifiers == 0 {
            return Err(Error::ConfigInvalid("cohort has no classifiers".into()));
        }
        if !self.order.is_empty() {
            let mut seen = vec![false; classifiers];
            for &c in &self.order {
                if c >= classifiers || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::ConfigInvalid(format!(
                        "order is not a permutation of 0..{classifiers}"
                    )));
                }
            }
            if self.order.len() != classifiers {
                return Err(Error::ConfigInvalid(format!(
                    "order lists {} of {classifiers} classifiers",
                    self.order.len()
                )));
            }
        }
        Ok(())
    }

    /// Stage order resolved against the cohort size.
    pub fn stage_order(&self, classifiers: usize) -> Vec<usize> {
        if self.order.is_empty() {
            (0..classifiers).collect()
        } else {
            self.order.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Accept { text: String, agreement: u32 },
    Continue,
}

/// Running hypothesis counts for one word.
#[derive(Debug, Default, Clone)]
pub struct AgreementTracker {
    counts: HashMap<String, (u32, usize)>,
    seen: usize,
    // most frequent lexicon member: (text, count, first occurrence)
    best: Option<(String, u32, usize)>,
}

impl AgreementTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one normalized hypothesis; returns its count so far.
    pub fn push(&mut self, text: &str, in_lexicon: bool) -> u32 {
        let position = self.seen;
        self.seen += 1;
        let entry = self.counts.entry(text.to_owned()).or_insert((0, position));
        entry.0 += 1;
        let (count, first) = *entry;
        if in_lexicon {
            let better = match &self.best {
                None => true,
                Some((_, c, f)) => count > *c || (count == *c && first < *f),
            };
            if better {
                self.best = Some((text.to_owned(), count, first));
            }
        }
        count
    }

    /// The most frequent lexicon member and its count; earliest first
    /// occurrence wins count ties.
    pub fn leader(&self) -> Option<(&str, u32)> {
        self.best.as_ref().map(|(t, c, _)| (t.as_str(), *c))
    }

    pub fn decision(&self, rule: &MndaRule) -> Decision {
        match self.leader() {
            Some((text, count)) if count >= rule.threshold(text.chars().count()) => {
                Decision::Accept {
                    text: text.to_owned(),
                    agreement: count,
                }
            }
            _ => Decision::Continue,
        }
    }
}

/// The decision stage applied to hypotheses from stages `1..=k`.
pub fn decide<S: AsRef<str>>(
    hypotheses: &[S],
    lexicon: &Lexicon,
    config: &CascadeConfig,
) -> Decision {
    let mut tracker = AgreementTracker::new();
    for h in hypotheses {
        let text = lexicon.normalize(h.as_ref());
        let member = lexicon.contains_normalized(&text);
        tracker.push(&text, member);
    }
    tracker.decision(&config.mnda())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Rejected,
    FallbackDecoded,
}

/// One stage's hypothesis for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHypothesis {
    /// 1-based stage index.
    pub stage: usize,
    pub classifier: usize,
    /// Normalized decoded text.
    pub text: String,
    pub in_lexicon: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackTrace {
    pub classifiers: Vec<usize>,
    pub score: f64,
}

/// Everything the cascade did for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub id: String,
    pub reference: String,
    pub status: Status,
    pub text: Option<String>,
    pub stage_accepted: Option<usize>,
    pub agreement: u32,
    pub trace: Vec<StageHypothesis>,
    pub fallback: Option<FallbackTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ns: Option<u64>,
}

impl DecisionOutcome {
    /// Stages whose classifier was loaded and decoded for this word.
    pub fn stages_evaluated(&self) -> usize {
        self.trace.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub record_timing: bool,
    pub viterbi: ViterbiStrategy,
}

/// Per-word outcomes of a cascade run, sorted by word id.
#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub outcomes: Vec<DecisionOutcome>,
    pub classifier_count: usize,
    pub order: Vec<usize>,
    /// Lexicon entries the fallback could not score (0 without fallback).
    pub unscoreable_entries: usize,
}

struct Engine<'a, S> {
    source: &'a S,
    lexicon: &'a Lexicon,
    config: &'a CascadeConfig,
    options: &'a RunOptions,
    order: Vec<usize>,
    rule: MndaRule,
    decoder: OnceLock<LexiconDecoder>,
}

impl<S: PosteriorSource> Engine<'_, S> {
    fn evaluate(&self, word: &WordSample) -> Result<DecisionOutcome> {
        let started = self.options.record_timing.then(Instant::now);
        let mut tracker = AgreementTracker::new();
        let mut trace = Vec::new();
        let mut accepted: Option<(String, u32, usize)> = None;
        for (i, &classifier) in self.order.iter().enumerate() {
            let stage = i + 1;
            let p = self.source.load(classifier, word)?;
            let hyp = best_path_decode(&p);
            let text = self.lexicon.normalize(&hyp.text).into_owned();
            let in_lexicon = self.lexicon.contains_normalized(&text);
            tracker.push(&text, in_lexicon);
            trace.push(StageHypothesis {
                stage,
                classifier,
                text,
                in_lexicon,
                score: hyp.score,
            });
            if accepted.is_none() {
                if let Decision::Accept { text, agreement } = tracker.decision(&self.rule) {
                    accepted = Some((text, agreement, stage));
                    if self.config.early_exit {
                        break;
                    }
                }
            }
        }
        let mut outcome = DecisionOutcome {
            id: word.id.clone(),
            reference: word.transcript.clone(),
            status: Status::Rejected,
            text: None,
            stage_accepted: None,
            agreement: 0,
            trace,
            fallback: None,
            elapsed_ns: None,
        };
        if let Some((text, agreement, stage)) = accepted {
            outcome.status = Status::Accepted;
            outcome.text = Some(text);
            outcome.agreement = agreement;
            outcome.stage_accepted = Some(stage);
        } else if let Fallback::Viterbi { k } = self.config.fallback {
            self.fallback(word, k, &mut outcome)?;
        }
        outcome.elapsed_ns = started.map(|s| s.elapsed().as_nanos() as u64);
        Ok(outcome)
    }

    fn fallback(&self, word: &WordSample, k: usize, outcome: &mut DecisionOutcome) -> Result<()> {
        let n = self.order.len();
        let key = seeding::derive_key(&[self.options.seed, 0xFA11], &word.id);
        let mut rng = seeding::rng(key, 0);
        let mut picked = sample(&mut rng, n, k.min(n)).into_vec();
        picked.sort_unstable();
        let ps = picked
            .iter()
            .map(|&c| self.source.load(c, word))
            .collect::<Result<Vec<_>>>()?;
        let mean = average_posteriors(&ps)?;
        let decoder = self.decoder.get_or_init(|| {
            LexiconDecoder::new(self.lexicon, mean.alphabet().clone(), self.options.viterbi)
        });
        match decoder.decode(&mean) {
            Ok(h) => {
                let h = h.with_source(Source::AveragedFallback);
                outcome.status = Status::FallbackDecoded;
                outcome.text = Some(h.text);
                outcome.fallback = Some(FallbackTrace {
                    classifiers: picked,
                    score: h.score,
                });
            }
            Err(Error::NoFeasibleWord { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

/// Runs every manifest word through the cascade.
///
/// Words are evaluated in parallel; the result is sorted by word id, so the
/// worker count never changes it.
pub fn run_cascade<S: PosteriorSource>(
    source: &S,
    manifest: &[WordSample],
    lexicon: &Lexicon,
    config: &CascadeConfig,
    options: &RunOptions,
) -> Result<CascadeRun> {
    let classifiers = source.classifier_count();
    config.validate(classifiers)?;
    let engine = Engine {
        source,
        lexicon,
        config,
        options,
        order: config.stage_order(classifiers),
        rule: config.mnda(),
        decoder: OnceLock::new(),
    };
    let evaluate_all = || {
        manifest
            .par_iter()
            .map(|w| engine.evaluate(w))
            .collect::<Result<Vec<_>>>()
    };
    let mut outcomes = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?
            .install(evaluate_all)?,
        None => evaluate_all()?,
    };
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    let unscoreable_entries = engine.decoder.get().map_or(0, |d| d.unscoreable());
    Ok(CascadeRun {
        outcomes,
        classifier_count: classifiers,
        order: engine.order,
        unscoreable_entries,
    })
}

/// Deletion rate of one classifier: deleted reference characters over all
/// reference characters, after normalization.
pub fn deletion_rate<S: PosteriorSource>(
    source: &S,
    classifier: usize,
    validation: &[WordSample],
    normalization: Normalization,
) -> Result<f64> {
    let mut deletions = 0usize;
    let mut chars = 0usize;
    for word in validation {
        let hyp = best_path_decode(&source.load(classifier, word)?);
        let reference = normalization.apply(&word.transcript);
        let decoded = normalization.apply(&hyp.text);
        deletions += levenshtein_align(&reference, &decoded).deletions;
        chars += reference.chars().count();
    }
    Ok(if chars == 0 {
        0.0
    } else {
        deletions as f64 / chars as f64
    })
}

/// Ascending rate order; equal rates keep index order.
pub fn order_from_rates(rates: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]).then(a.cmp(&b)));
    order
}

/// Orders classifiers by ascending deletion rate on a validation set.
/// Returns the permutation and the per-classifier rates.
pub fn order_by_deletion<S: PosteriorSource>(
    source: &S,
    validation: &[WordSample],
    normalization: Normalization,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let rates = (0..source.classifier_count())
        .into_par_iter()
        .map(|c| deletion_rate(source, c, validation, normalization))
        .collect::<Result<Vec<_>>>()?;
    Ok((order_from_rates(&rates), rates))
}

/// Every classifier's normalized best-path output on every word, in stage order.
#[derive(Debug, Clone)]
pub struct DecodedCohort {
    pub ids: Vec<String>,
    /// Normalized references.
    pub references: Vec<String>,
    /// Original classifier index of each stage.
    pub classifiers: Vec<usize>,
    /// `texts[stage][word]`
    pub texts: Vec<Vec<String>>,
    /// `in_lexicon[stage][word]`
    pub in_lexicon: Vec<Vec<bool>>,
}

impl DecodedCohort {
    /// Decodes every word with every classifier in `order` (identity when empty).
    pub fn decode<S: PosteriorSource>(
        source: &S,
        words: &[WordSample],
        lexicon: &Lexicon,
        order: &[usize],
    ) -> Result<Self> {
        let classifiers: Vec<usize> = if order.is_empty() {
            (0..source.classifier_count()).collect()
        } else {
            order.to_vec()
        };
        let columns = classifiers
            .par_iter()
            .map(|&c| {
                words
                    .iter()
                    .map(|w| {
                        let text = lexicon
                            .normalize(&best_path_decode(&source.load(c, w)?).text)
                            .into_owned();
                        let member = lexicon.contains_normalized(&text);
                        Ok((text, member))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let (texts, in_lexicon) = columns
            .into_iter()
            .map(|col| col.into_iter().unzip())
            .unzip();
        Ok(Self {
            ids: words.iter().map(|w| w.id.clone()).collect(),
            references: words
                .iter()
                .map(|w| lexicon.normalize(&w.transcript).into_owned())
                .collect(),
            classifiers,
            texts,
            in_lexicon,
        })
    }

    /// Rebuilds the matrix from full traces (a run with early exit disabled).
    pub fn from_outcomes(
        outcomes: &[DecisionOutcome],
        normalization: Normalization,
    ) -> Result<Self> {
        let stages = outcomes.first().map_or(0, |o| o.trace.len());
        let mut texts = vec![Vec::with_capacity(outcomes.len()); stages];
        let mut in_lexicon = vec![Vec::with_capacity(outcomes.len()); stages];
        let classifiers = outcomes
            .first()
            .map(|o| o.trace.iter().map(|h| h.classifier).collect())
            .unwrap_or_default();
        for o in outcomes {
            if o.trace.len() != stages {
                return Err(Error::ConfigInvalid(format!(
                    "word {:?} has {} of {stages} stages; rerun with early exit disabled",
                    o.id,
                    o.trace.len()
                )));
            }
            for (s, h) in o.trace.iter().enumerate() {
                texts[s].push(h.text.clone());
                in_lexicon[s].push(h.in_lexicon);
            }
        }
        Ok(Self {
            ids: outcomes.iter().map(|o| o.id.clone()).collect(),
            references: outcomes
                .iter()
                .map(|o| normalization.apply(&o.reference).into_owned())
                .collect(),
            classifiers,
            texts,
            in_lexicon,
        })
    }

    pub fn stages(&self) -> usize {
        self.texts.len()
    }

    pub fn words(&self) -> usize {
        self.ids.len()
    }

    pub fn is_correct(&self, stage: usize, word: usize) -> bool {
        self.texts[stage][word] == self.references[word]
    }
}

/// Percentage of words that at least one of the first `k` stages decodes
/// correctly, for every `k` in `1..=stages`.
pub fn oracle_recognition(cohort: &DecodedCohort) -> Vec<f64> {
    let words = cohort.words();
    let mut found = vec![false; words];
    let mut hits = 0usize;
    (0..cohort.stages())
        .map(|s| {
            for (w, f) in found.iter_mut().enumerate() {
                if !*f && cohort.is_correct(s, w) {
                    *f = true;
                    hits += 1;
                }
            }
            if words == 0 {
                0.0
            } else {
                100.0 * hits as f64 / words as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoteBaselines {
    pub plain_vote_wrr: f64,
    pub verified_vote_wrr: f64,
}

/// Word recognition rates of a plain majority vote and of a majority vote
/// restricted to lexicon members; count ties go to the earliest stage.
pub fn majority_vote_baselines(cohort: &DecodedCohort) -> VoteBaselines {
    let words = cohort.words();
    let mut plain = 0usize;
    let mut verified = 0usize;
    for w in 0..words {
        let mut all = AgreementTracker::new();
        let mut members = AgreementTracker::new();
        for s in 0..cohort.stages() {
            let text = cohort.texts[s][w].as_str();
            all.push(text, true);
            members.push(text, cohort.in_lexicon[s][w]);
        }
        let reference = cohort.references[w].as_str();
        if all.leader().map(|(t, _)| t) == Some(reference) {
            plain += 1;
        }
        if members.leader().map(|(t, _)| t) == Some(reference) {
            verified += 1;
        }
    }
    let pct = |n: usize| {
        if words == 0 {
            0.0
        } else {
            100.0 * n as f64 / words as f64
        }
    };
    VoteBaselines {
        plain_vote_wrr: pct(plain),
        verified_vote_wrr: pct(verified),
    }
}

/// Replays the decision stage over recorded traces, using only the stages
/// flagged in `active` (indexed by stage position). Returns, per word, the
/// accepted text and the 1-based position of the accepting stage.
pub fn replay_traces(
    outcomes: &[DecisionOutcome],
    active: &[bool],
    rule: &MndaRule,
) -> Vec<Option<(String, usize)>> {
    outcomes
        .iter()
        .map(|o| {
            let mut tracker = AgreementTracker::new();
            for h in &o.trace {
                if !active.get(h.stage - 1).copied().unwrap_or(false) {
                    continue;
                }
                tracker.push(&h.text, h.in_lexicon);
                if let Decision::Accept { text, .. } = tracker.decision(rule) {
                    return Some((text, h.stage));
                }
            }
            None
        })
        .collect()
}

//! Cohort decimation from a full validation run.
//!
//! Input is a [`RunReport`] produced with early exit disabled, so every stage
//! decoded every word. A stage is removed when its classifier
//!
//! * emits more wrong lexicon words than the false-acceptance threshold
//!   (`excess_false_acceptances`), or
//! * is not needed for any word (`no_new_acceptances`). A stage is needed for
//!   a word it decodes correctly while fewer earlier surviving stages than the
//!   agreement rule demands decode it correctly too. With an agreement of one
//!   this is "decodes a word no earlier stage gets right".
//!
//! The default strategy is a single backward pass over decoded outputs;
//! removing an unneeded stage never makes a later stage needed, so one pass
//! suffices.
//! [`PruneStrategy::Iterative`] walks backward too, but judges each stage by
//! replaying the agreement rule without it: the stage goes if the replay
//! accepts no fewer correct words and no more wrong ones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascade::{replay_traces, DecisionOutcome, MndaRule, Status};
use crate::error::{Error, Result};
use crate::lexicon::Normalization;
use crate::metrics::{outcome_metrics, RunMetrics};
use crate::report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    NoNewAcceptances,
    ExcessFalseAcceptances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    #[default]
    OnePass,
    Iterative,
}

/// Either an absolute count or a percentage of validation words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaThreshold {
    Count(u64),
    Percent(f64),
}

impl Default for FaThreshold {
    fn default() -> Self {
        FaThreshold::Percent(0.5)
    }
}

impl FaThreshold {
    /// Absolute count for a validation set of `words` words (percentages round down).
    pub fn resolve(&self, words: usize) -> u64 {
        match *self {
            FaThreshold::Count(n) => n,
            FaThreshold::Percent(p) => (p / 100.0 * words as f64).floor() as u64,
        }
    }
}

impl FromStr for FaThreshold {
    type Err = Error;

    /// `12` is a count, `0.5%` a percentage.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::ConfigInvalid(format!("invalid false-acceptance threshold {s:?}"));
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(0.0..=100.0).contains(&p) {
                return Err(bad());
            }
            Ok(FaThreshold::Percent(p))
        } else {
            s.parse().map(FaThreshold::Count).map_err(|_| bad())
        }
    }
}

impl fmt::Display for FaThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaThreshold::Count(n) => write!(f, "{n}"),
            FaThreshold::Percent(p) => write!(f, "{p}%"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub classifier: usize,
    /// 1-based stage position in the validation run.
    pub stage: usize,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub strategy: PruneStrategy,
    pub fa_threshold: FaThreshold,
    /// The threshold as a count of wrong lexicon hypotheses.
    pub fa_threshold_count: u64,
    /// Surviving classifiers in cascade order.
    pub kept: Vec<usize>,
    /// Sorted by stage.
    pub removed: Vec<Removal>,
    /// Wrong lexicon hypotheses per stage of the validation run.
    pub stage_false_lexicon_hits: Vec<u64>,
    /// Cascade replayed over every stage, without fallback.
    pub before: RunMetrics,
    /// Cascade replayed over the kept stages, without fallback.
    pub after: RunMetrics,
}

/// Outcomes of the agreement rule replayed over the stages flagged `active`.
pub fn replay_outcomes(
    outcomes: &[DecisionOutcome],
    active: &[bool],
    rule: &MndaRule,
) -> Vec<DecisionOutcome> {
    let decisions = replay_traces(outcomes, active, rule);
    outcomes
        .iter()
        .zip(decisions)
        .map(|(o, d)| {
            let trace = o
                .trace
                .iter()
                .filter(|h| active.get(h.stage - 1).copied().unwrap_or(false))
                .cloned()
                .collect();
            let (status, text, stage) = match d {
                Some((text, stage)) => (Status::Accepted, Some(text), Some(stage)),
                None => (Status::Rejected, None, None),
            };
            let agreement = text.as_ref().map_or(0, |t: &String| {
                o.trace
                    .iter()
                    .filter(|h| {
                        active.get(h.stage - 1).copied().unwrap_or(false)
                            && stage.is_some_and(|s| h.stage <= s)
                            && h.text == *t
                    })
                    .count() as u32
            });
            DecisionOutcome {
                id: o.id.clone(),
                reference: o.reference.clone(),
                status,
                text,
                stage_accepted: stage,
                agreement,
                trace,
                fallback: None,
                elapsed_ns: None,
            }
        })
        .collect()
}

struct Validation<'a> {
    outcomes: &'a [DecisionOutcome],
    classifiers: Vec<usize>,
    /// `correct[stage][word]`
    correct: Vec<Vec<bool>>,
    false_hits: Vec<u64>,
    /// Agreement each word's reference needs.
    needed: Vec<u32>,
    rule: MndaRule,
}

impl<'a> Validation<'a> {
    fn new(report: &'a RunReport) -> Result<Self> {
        let outcomes = report.outcomes.as_slice();
        let norm: Normalization = report.config.normalization;
        let stages = report.config.classifier_count;
        if outcomes.is_empty() {
            return Err(Error::ConfigInvalid("validation run has no words".into()));
        }
        let mut classifiers = vec![usize::MAX; stages];
        let mut correct = vec![vec![false; outcomes.len()]; stages];
        let mut false_hits = vec![0u64; stages];
        let rule = report.config.cascade.mnda();
        let mut needed = Vec::with_capacity(outcomes.len());
        for (w, o) in outcomes.iter().enumerate() {
            if o.trace.len() != stages {
                return Err(Error::ConfigInvalid(format!(
                    "word {:?} has {} of {stages} stages; pruning needs a run with early exit disabled",
                    o.id,
                    o.trace.len()
                )));
            }
            let reference = norm.apply(&o.reference);
            needed.push(rule.threshold(reference.chars().count()));
            for (s, h) in o.trace.iter().enumerate() {
                if h.stage != s + 1 {
                    return Err(Error::ConfigInvalid(format!(
                        "word {:?} has an out-of-order trace",
                        o.id
                    )));
                }
                if classifiers[s] == usize::MAX {
                    classifiers[s] = h.classifier;
                } else if classifiers[s] != h.classifier {
                    return Err(Error::ConfigInvalid(format!(
                        "stage {} maps to classifiers {} and {}",
                        s + 1,
                        classifiers[s],
                        h.classifier
                    )));
                }
                let right = h.text == *reference;
                correct[s][w] = right;
                if h.in_lexicon && !right {
                    false_hits[s] += 1;
                }
            }
        }
        Ok(Self {
            outcomes,
            classifiers,
            correct,
            false_hits,
            needed,
            rule,
        })
    }

    fn stages(&self) -> usize {
        self.classifiers.len()
    }

    /// Correct and wrong acceptances when replaying over `active`.
    fn acceptances(&self, active: &[bool]) -> (usize, usize) {
        replay_traces(self.outcomes, active, &self.rule)
            .iter()
            .enumerate()
            .filter_map(|(w, d)| d.as_ref().map(|(_, stage)| self.correct[stage - 1][w]))
            .fold(
                (0, 0),
                |(c, f), ok| if ok { (c + 1, f) } else { (c, f + 1) },
            )
    }
}

/// Prunes the cohort behind a full validation run.
pub fn prune(
    report: &RunReport,
    fa_threshold: FaThreshold,
    strategy: PruneStrategy,
) -> Result<PruneReport> {
    let v = Validation::new(report)?;
    let n = v.stages();
    let threshold = fa_threshold.resolve(v.outcomes.len());
    let mut reason: Vec<Option<RemovalReason>> = v
        .false_hits
        .iter()
        .map(|&h| (h > threshold).then_some(RemovalReason::ExcessFalseAcceptances))
        .collect();

    match strategy {
        PruneStrategy::OnePass => {
            // When a stage is examined every earlier stage not dropped for
            // false acceptances is still present.
            let mut needed = vec![false; n];
            for w in 0..v.outcomes.len() {
                (0..n)
                    .filter(|&s| reason[s].is_none() && v.correct[s][w])
                    .take(v.needed[w] as usize)
                    .for_each(|s| needed[s] = true);
            }
            for s in (0..n).rev() {
                if reason[s].is_none() && !needed[s] {
                    reason[s] = Some(RemovalReason::NoNewAcceptances);
                }
            }
        }
        PruneStrategy::Iterative => {
            let mut active: Vec<bool> = reason.iter().map(Option::is_none).collect();
            let (mut correct, mut wrong) = v.acceptances(&active);
            for s in (0..n).rev() {
                if !active[s] {
                    continue;
                }
                active[s] = false;
                let (c, w) = v.acceptances(&active);
                if c >= correct && w <= wrong {
                    reason[s] = Some(RemovalReason::NoNewAcceptances);
                    (correct, wrong) = (c, w);
                } else {
                    active[s] = true;
                }
            }
        }
    }

    let active: Vec<bool> = reason.iter().map(Option::is_none).collect();
    if !active.iter().any(|&a| a) {
        return Err(Error::EmptyResult);
    }
    let all = vec![true; n];
    let norm = report.config.normalization;
    let before = outcome_metrics(&replay_outcomes(v.outcomes, &all, &v.rule), norm);
    let after = outcome_metrics(&replay_outcomes(v.outcomes, &active, &v.rule), norm);
    Ok(PruneReport {
        strategy,
        fa_threshold,
        fa_threshold_count: threshold,
        kept: (0..n)
            .filter(|&s| active[s])
            .map(|s| v.classifiers[s])
            .collect(),
        removed: reason
            .iter()
            .enumerate()
            .filter_map(|(s, r)| {
                r.map(|reason| Removal {
                    classifier: v.classifiers[s],
                    stage: s + 1,
                    reason,
                })
            })
            .collect(),
        stage_false_lexicon_hits: v.false_hits,
        before,
        after,
    })
}

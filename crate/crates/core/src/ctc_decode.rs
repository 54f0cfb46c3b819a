//! Lexicon-free best-path decoding and lexicon-constrained Viterbi decoding.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::postgram::{Alphabet, Posteriorgram, BLANK};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-30;

/// Where a hypothesis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Unattributed,
    Classifier(usize),
    AveragedFallback,
}

/// A decoded character string and the log-probability of its path.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub text: String,
    pub score: f64,
    pub source: Source,
}

impl Hypothesis {
    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }
}

#[inline]
fn log_prob(p: f32) -> f64 {
    f64::from(p).max(PROB_FLOOR).ln()
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(row: &[f32]) -> (usize, f32) {
    let mut best = (0, row[0]);
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}

/// Greedy CTC decoding: per-frame argmax, collapse repeats, drop blanks.
pub fn best_path_decode(p: &Posteriorgram) -> Hypothesis {
    let alphabet = p.alphabet();
    let mut text = String::new();
    let mut score = 0.0;
    let mut prev = None;
    for row in p.rows() {
        let (class, prob) = argmax(row);
        score += log_prob(prob);
        if prev != Some(class) && class != BLANK {
            text.push_str(alphabet.label(class).unwrap_or_default());
        }
        prev = Some(class);
    }
    Hypothesis {
        text,
        score,
        source: Source::Unattributed,
    }
}

/// Per-frame log posteriors, `frames x classes`.
pub struct LogPosteriors {
    frames: usize,
    classes: usize,
    values: Vec<f64>,
}

impl LogPosteriors {
    pub fn new(p: &Posteriorgram) -> Self {
        Self {
            frames: p.frames(),
            classes: p.classes(),
            values: p.as_slice().iter().map(|&v| log_prob(v)).collect(),
        }
    }

    #[inline]
    fn at(&self, t: usize, class: usize) -> f64 {
        self.values[t * self.classes + class]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
}

/// Shortest frame count able to emit `labels` under CTC rules.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Best single-alignment log score of `labels`, or `-inf` when no alignment fits.
pub fn max_path_score(lp: &LogPosteriors, labels: &[usize]) -> f64 {
    let frames = lp.frames;
    if labels.is_empty() {
        return (0..frames).map(|t| lp.at(t, BLANK)).sum();
    }
    if min_frames(labels) > frames {
        return f64::NEG_INFINITY;
    }
    // states: even = blank, odd = labels[(s - 1) / 2]
    let states = 2 * labels.len() + 1;
    let class_of = |s: usize| if s % 2 == 0 { BLANK } else { labels[s / 2] };
    let mut prev = vec![f64::NEG_INFINITY; states];
    let mut cur = vec![f64::NEG_INFINITY; states];
    prev[0] = lp.at(0, BLANK);
    prev[1] = lp.at(0, labels[0]);
    for t in 1..frames {
        for s in 0..states {
            let mut best = prev[s];
            if s >= 1 {
                best = best.max(prev[s - 1]);
            }
            if s >= 3 && s % 2 == 1 && labels[s / 2] != labels[s / 2 - 1] {
                best = best.max(prev[s - 2]);
            }
            cur[s] = best + lp.at(t, class_of(s));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[states - 1].max(prev[states - 2])
}

/// How the lexicon is traversed during Viterbi decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViterbiStrategy {
    /// One independent dynamic program per word.
    #[default]
    Naive,
    /// Words sharing a prefix share the DP columns of that prefix.
    PrefixTrie,
}

#[derive(Default)]
struct TrieNode {
    children: BTreeMap<usize, usize>,
    word: Option<usize>,
}

/// Lexicon entries pre-encoded against one alphabet.
pub struct LexiconDecoder {
    alphabet: Arc<Alphabet>,
    // sorted by text
    words: Vec<(String, Vec<usize>)>,
    unscoreable: usize,
    strategy: ViterbiStrategy,
    trie: Vec<TrieNode>,
}

impl LexiconDecoder {
    pub fn new(lexicon: &Lexicon, alphabet: Arc<Alphabet>, strategy: ViterbiStrategy) -> Self {
        let mut words = Vec::with_capacity(lexicon.len());
        let mut unscoreable = 0;
        for entry in lexicon.iter() {
            match alphabet.encode(entry) {
                Ok(labels) if !labels.is_empty() => words.push((entry.to_owned(), labels)),
                _ => unscoreable += 1,
            }
        }
        words.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut trie = Vec::new();
        if strategy == ViterbiStrategy::PrefixTrie {
            trie.push(TrieNode::default());
            for (i, (_, labels)) in words.iter().enumerate() {
                let mut node = 0;
                for &c in labels {
                    node = match trie[node].children.get(&c) {
                        Some(&next) => next,
                        None => {
                            trie.push(TrieNode::default());
                            let next = trie.len() - 1;
                            trie[node].children.insert(c, next);
                            next
                        }
                    };
                }
                // two entries can encode identically only with overlapping multi-char labels
                trie[node].word.get_or_insert(i);
            }
        }
        Self {
            alphabet,
            words,
            unscoreable,
            strategy,
            trie,
        }
    }

    /// Lexicon entries that contain characters outside the alphabet.
    pub fn unscoreable(&self) -> usize {
        self.unscoreable
    }

    pub fn scoreable(&self) -> usize {
        self.words.len()
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    /// Returns the lexicon word with the highest max-path score; ties go to
    /// the lexicographically smallest word.
    pub fn decode(&self, p: &Posteriorgram) -> Result<Hypothesis> {
        if **p.alphabet() != *self.alphabet {
            return Err(Error::ShapeMismatch(
                "posteriorgram alphabet differs from the decoder's".into(),
            ));
        }
        let lp = LogPosteriors::new(p);
        let best = match self.strategy {
            ViterbiStrategy::Naive => self.decode_naive(&lp),
            ViterbiStrategy::PrefixTrie => self.decode_trie(&lp),
        };
        match best {
            Some((i, score)) => Ok(Hypothesis {
                text: self.words[i].0.clone(),
                score,
                source: Source::Unattributed,
            }),
            None => Err(Error::NoFeasibleWord { frames: p.frames() }),
        }
    }

    fn decode_naive(&self, lp: &LogPosteriors) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, labels)) in self.words.iter().enumerate() {
            let score = max_path_score(lp, labels);
            if score == f64::NEG_INFINITY {
                continue;
            }
            // words are sorted, so strict improvement keeps the smallest on ties
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        best
    }

    fn decode_trie(&self, lp: &LogPosteriors) -> Option<(usize, f64)> {
        let frames = lp.frames;
        let mut root_blank = vec![0.0; frames];
        root_blank[0] = lp.at(0, BLANK);
        for t in 1..frames {
            root_blank[t] = root_blank[t - 1] + lp.at(t, BLANK);
        }
        let mut best = None;
        let mut walk = TrieWalk {
            trie: &self.trie,
            lp,
            best: &mut best,
        };
        walk.descend(0, None, &[], &root_blank, 0, 0);
        best
    }
}

struct TrieWalk<'a> {
    trie: &'a [TrieNode],
    lp: &'a LogPosteriors,
    best: &'a mut Option<(usize, f64)>,
}

impl TrieWalk<'_> {
    /// `label_col` and `blank_col` hold the DP columns of the last label state
    /// and the trailing blank state of the prefix ending at `node`.
    fn descend(
        &mut self,
        node: usize,
        label: Option<usize>,
        label_col: &[f64],
        blank_col: &[f64],
        depth: usize,
        repeats: usize,
    ) {
        let frames = self.lp.frames;
        for (&c, &child) in &self.trie[node].children {
            let repeat = label == Some(c);
            let child_repeats = repeats + usize::from(repeat);
            if depth + 1 + child_repeats > frames {
                continue;
            }
            let mut l = vec![f64::NEG_INFINITY; frames];
            let mut b = vec![f64::NEG_INFINITY; frames];
            if depth == 0 {
                l[0] = self.lp.at(0, c);
            }
            for t in 1..frames {
                let mut best = l[t - 1].max(blank_col[t - 1]);
                if depth >= 1 && !repeat {
                    best = best.max(label_col[t - 1]);
                }
                l[t] = best + self.lp.at(t, c);
                b[t] = b[t - 1].max(l[t - 1]) + self.lp.at(t, BLANK);
            }
            if let Some(word) = self.trie[child].word {
                let score = l[frames - 1].max(b[frames - 1]);
                if score > f64::NEG_INFINITY {
                    let better = match *self.best {
                        None => true,
                        Some((w, s)) => score > s || (score == s && word < w),
                    };
                    if better {
                        *self.best = Some((word, score));
                    }
                }
            }
            self.descend(child, Some(c), &l, &b, depth + 1, child_repeats);
        }
    }
}

/// Convenience wrapper building a naive decoder for one call.
pub fn viterbi_lexicon_decode(p: &Posteriorgram, lexicon: &Lexicon) -> Result<Hypothesis> {
    LexiconDecoder::new(lexicon, p.alphabet().clone(), ViterbiStrategy::Naive).decode(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Normalization;

    fn alphabet() -> Arc<Alphabet> {
        Arc::new(Alphabet::from_chars("ab".chars()).unwrap())
    }

    /// One-hot-ish frames following `classes`, 0.9 on the chosen class.
    fn peaky(alpha: &Arc<Alphabet>, classes: &[usize]) -> Posteriorgram {
        let rows: Vec<Vec<f64>> = classes
            .iter()
            .map(|&c| {
                let mut row = vec![0.1 / (alpha.len() - 1) as f64; alpha.len()];
                row[c] = 0.9;
                row
            })
            .collect();
        Posteriorgram::from_weights(alpha.clone(), &rows).unwrap()
    }

    #[test]
    fn collapse_then_strip() {
        let a = alphabet();
        assert_eq!(best_path_decode(&peaky(&a, &[1, 1, 0, 2, 2])).text, "ab");
        assert_eq!(best_path_decode(&peaky(&a, &[0, 0, 0])).text, "");
        assert_eq!(best_path_decode(&peaky(&a, &[1, 0, 1, 2])).text, "aab");
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let a = alphabet();
        let p = Posteriorgram::new(a, 2, vec![0.0, 0.5, 0.5, 0.4, 0.3, 0.3]).unwrap();
        let h = best_path_decode(&p);
        assert_eq!(h.text, "a");
        assert!((h.score - (0.5f64.ln() + f64::from(0.4f32).ln())).abs() < 1e-12);
    }

    #[test]
    fn min_frames_counts_repeats() {
        assert_eq!(min_frames(&[1, 2]), 2);
        assert_eq!(min_frames(&[1, 1, 2, 2, 2]), 8);
    }

    #[test]
    fn single_frame_cannot_hold_two_labels() {
        let a = alphabet();
        let lex = Lexicon::build(["ab"], Normalization::None);
        let p = peaky(&a, &[1]);
        assert!(matches!(
            viterbi_lexicon_decode(&p, &lex),
            Err(Error::NoFeasibleWord { frames: 1 })
        ));
    }

    #[test]
    fn uniform_posteriors_tie_to_smallest_word() {
        let a = alphabet();
        let p = Posteriorgram::from_weights(a.clone(), &vec![vec![1.0; 3]; 4]).unwrap();
        let lex = Lexicon::build(["ba", "ab"], Normalization::None);
        for strategy in [ViterbiStrategy::Naive, ViterbiStrategy::PrefixTrie] {
            let h = LexiconDecoder::new(&lex, a.clone(), strategy)
                .decode(&p)
                .unwrap();
            assert_eq!(h.text, "ab");
        }
    }

    #[test]
    fn unscoreable_entries_are_counted_and_skipped() {
        let a = alphabet();
        let lex = Lexicon::build(["ab", "abc", "z"], Normalization::None);
        let dec = LexiconDecoder::new(&lex, a.clone(), ViterbiStrategy::Naive);
        assert_eq!(dec.unscoreable(), 2);
        let h = dec.decode(&peaky(&a, &[1, 0, 2])).unwrap();
        assert_eq!(h.text, "ab");
    }

    #[test]
    fn trie_matches_naive_on_shared_prefixes() {
        let a = Arc::new(Alphabet::from_chars("abc".chars()).unwrap());
        let lex = Lexicon::build(
            [
                "a", "aa", "ab", "abc", "abca", "b", "ba", "bab", "cab", "cc", "ccc",
            ],
            Normalization::None,
        );
        let naive = LexiconDecoder::new(&lex, a.clone(), ViterbiStrategy::Naive);
        let trie = LexiconDecoder::new(&lex, a.clone(), ViterbiStrategy::PrefixTrie);
        for seq in [
            vec![1, 0, 2, 3],
            vec![3, 3, 0, 3, 3],
            vec![2, 1, 2, 0, 0],
            vec![1, 1, 1],
            vec![0],
        ] {
            let p = peaky(&a, &seq);
            let x = naive.decode(&p).unwrap();
            let y = trie.decode(&p).unwrap();
            assert_eq!(x, y, "sequence {seq:?}");
        }
    }
}

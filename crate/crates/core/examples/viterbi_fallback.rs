//! Lexicon-constrained decoding of an ambiguous posteriorgram, and the same
//! decode over the averaged outputs of several classifiers.
//!
//! cargo run -p lexcascade --example viterbi_fallback

use std::sync::Arc;

use lexcascade::ctc_decode::{
    best_path_decode, viterbi_lexicon_decode, LexiconDecoder, ViterbiStrategy,
};
use lexcascade::lexicon::{Lexicon, Normalization};
use lexcascade::postgram::{average_posteriors, Alphabet, Posteriorgram};

fn frames(alphabet: &Arc<Alphabet>, peaks: &[(&str, f64)]) -> lexcascade::Result<Posteriorgram> {
    let c = alphabet.len();
    let mut rows = Vec::new();
    for &(label, mass) in peaks {
        let hot = alphabet.index_of(label).expect("label in alphabet");
        let mut row = vec![(1.0 - mass) / (c - 1) as f64; c];
        row[hot] = mass;
        rows.push(row);
    }
    Posteriorgram::from_weights(alphabet.clone(), &rows)
}

fn main() -> lexcascade::Result<()> {
    let alphabet = Arc::new(Alphabet::from_chars("abcdeghilnrt".chars())?);
    let lexicon = Lexicon::build(
        ["chat", "chien", "chine", "niche", "rat"],
        Normalization::Lower,
    );

    // the i is weak and loses to e, so best path reads the non-word "chen"
    let a = frames(
        &alphabet,
        &[("c", 0.9), ("h", 0.8), ("e", 0.4), ("e", 0.5), ("n", 0.9)],
    )?;
    let b = frames(
        &alphabet,
        &[("c", 0.9), ("h", 0.9), ("i", 0.6), ("e", 0.7), ("n", 0.8)],
    )?;
    println!("best path a: {:?}", best_path_decode(&a).text);
    println!("best path b: {:?}", best_path_decode(&b).text);

    let h = viterbi_lexicon_decode(&a, &lexicon)?;
    println!("lexicon decode a: {:?} ({:.3})", h.text, h.score);

    let mean = average_posteriors(&[a, b])?;
    let decoder = LexiconDecoder::new(&lexicon, alphabet, ViterbiStrategy::PrefixTrie);
    let h = decoder.decode(&mean)?;
    println!("lexicon decode of the mean: {:?} ({:.3})", h.text, h.score);
    Ok(())
}

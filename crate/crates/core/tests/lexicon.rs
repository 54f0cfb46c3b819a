use lexcascade::lexicon::{Lexicon, Normalization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_words(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chars: Vec<char> = "abcdefghijklmnopqrstuvwxyzéèàç'-".chars().collect();
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=14);
            (0..len)
                .map(|_| chars[rng.gen_range(0..chars.len())])
                .collect()
        })
        .collect()
}

#[test]
fn large_lexicon_survives_a_file_round_trip() {
    let words = random_words(1_000_000, 1);
    let lex = Lexicon::build(&words, Normalization::None);
    let distinct: std::collections::HashSet<&String> = words.iter().collect();
    assert_eq!(lex.len(), distinct.len());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.lexv");
    lex.save(&path).unwrap();
    let back = Lexicon::load(&path).unwrap();
    assert_eq!(back.len(), lex.len());
    assert_eq!(back.mode(), Normalization::None);
    assert_eq!(back.sorted(), lex.sorted());
    for w in words.iter().step_by(97) {
        assert!(back.contains(w));
    }
    for w in random_words(10_000, 2) {
        assert_eq!(back.contains(&w), distinct.contains(&w));
    }
}

#[test]
fn duplicates_collapse_after_normalization() {
    let words = ["Élève", "eleve", "ÉLÈVE", "élève", " eleve "];
    assert_eq!(Lexicon::build(words, Normalization::None).len(), 4);
    assert_eq!(Lexicon::build(words, Normalization::Lower).len(), 2);
    assert_eq!(
        Lexicon::build(words, Normalization::LowerNoAccents).len(),
        1
    );
}

#[test]
fn word_list_files_are_merged() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    std::fs::write(&a, "chat\nchien\n\n").unwrap();
    std::fs::write(&b, "Chat\nniche\r\n").unwrap();
    let lex = Lexicon::from_files(&[a, b], Normalization::Lower).unwrap();
    assert_eq!(lex.sorted(), ["chat", "chien", "niche"]);
    assert!(lex.contains("NICHE"));
}

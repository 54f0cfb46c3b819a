//! Build a lexicon, query it with normalization, save it and time lookups.
//!
//! cargo run --release -p lexcascade --example lexicon_lookup

use lexcascade::cli::bench_queries;
use lexcascade::cohort_sim::words;
use lexcascade::lexicon::{Lexicon, Normalization};

fn main() -> lexcascade::Result<()> {
    let lex = Lexicon::build(
        ["Éléphant", "chien", "CHAT", "garçon"],
        Normalization::LowerNoAccents,
    );
    for q in ["elephant", "Chat", "garcon", "chiens"] {
        println!("{q:>10} -> {}", lex.contains(q));
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("small.lexv");
    lex.save(&path)?;
    println!(
        "reloaded {} entries: {:?}",
        Lexicon::load(&path)?.len(),
        Lexicon::load(&path)?.sorted()
    );

    let big = Lexicon::build(words::pseudo_words(200_000, 3), Normalization::Lower);
    let bench = bench_queries(&big, 1_000_000, 0);
    println!(
        "{} entries, {} KiB heap; {} queries ({} hits) median {} ns, p90 {} ns",
        big.len(),
        big.heap_bytes() / 1024,
        bench.queries,
        bench.hits,
        bench.median_ns,
        bench.p90_ns
    );
    Ok(())
}

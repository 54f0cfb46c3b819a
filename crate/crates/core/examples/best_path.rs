//! Greedy CTC decoding of a hand-written posteriorgram.
//!
//! cargo run -p lexcascade --example best_path

use std::sync::Arc;

use lexcascade::ctc_decode::best_path_decode;
use lexcascade::postgram::{Alphabet, Posteriorgram};

fn main() -> lexcascade::Result<()> {
    // class 0 is the blank
    let alphabet = Arc::new(Alphabet::from_chars("acht".chars())?);
    let rows = vec![
        vec![0.1, 0.0, 0.8, 0.1, 0.0], // c
        vec![0.1, 0.0, 0.7, 0.1, 0.1], // c again, collapsed
        vec![0.9, 0.0, 0.0, 0.1, 0.0],
        vec![0.2, 0.0, 0.0, 0.8, 0.0], // h
        vec![0.1, 0.8, 0.0, 0.1, 0.0], // a
        vec![0.7, 0.1, 0.0, 0.0, 0.2],
        vec![0.1, 0.0, 0.0, 0.0, 0.9], // t
    ];
    let p = Posteriorgram::from_weights(alphabet, &rows)?;
    let h = best_path_decode(&p);
    println!("{:?}  log-score {:.4}", h.text, h.score);
    Ok(())
}

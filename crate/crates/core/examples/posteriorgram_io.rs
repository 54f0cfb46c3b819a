//! Write and read back the binary posteriorgram format and a word manifest.
//!
//! cargo run -p lexcascade --example posteriorgram_io

use std::sync::Arc;

use lexcascade::postgram::{
    load_manifest, load_posteriorgram, save_posteriorgram, write_manifest, Alphabet, Posteriorgram,
    WordSample,
};

fn main() -> lexcascade::Result<()> {
    let dir = tempfile::tempdir()?;
    let alphabet = Arc::new(Alphabet::new(["a", "b", "ch"])?);
    let p = Posteriorgram::from_weights(
        alphabet,
        &[
            vec![1.0, 2.0, 0.5, 0.5],
            vec![3.0, 0.0, 0.0, 1.0],
            vec![0.2, 0.1, 0.1, 0.6],
        ],
    )?;
    let sample = WordSample::new("w00001", "ach");
    let path = sample.posteriorgram_path(dir.path());
    save_posteriorgram(&p, &path)?;
    let back = load_posteriorgram(&path)?;
    println!(
        "{} bytes, {} frames x {} classes, identical: {}",
        std::fs::metadata(&path)?.len(),
        back.frames(),
        back.classes(),
        back.as_slice() == p.as_slice()
    );

    let manifest = dir.path().join("manifest.jsonl");
    write_manifest(&[sample, WordSample::new("w00002", "bach")], &manifest)?;
    print!("{}", std::fs::read_to_string(&manifest)?);
    println!("{:?}", load_manifest(&manifest)?);
    Ok(())
}

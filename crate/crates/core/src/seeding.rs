//! Stable seed derivation. Every random stream in the toolkit is keyed by
//! FNV-1a over little-endian seed words and UTF-8 identifiers, so streams are
//! identical across runs, platforms and thread schedules.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Builds a stream key from numeric parts and one string identifier.
pub fn derive_key(parts: &[u64], ident: &str) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(&p.to_le_bytes());
    }
    h.write(ident.as_bytes());
    h.finish()
}

/// A ChaCha8 generator for `key` positioned on `stream`.
pub fn rng(key: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

//! Immutable string-membership store for lexicon verification.
//!
//! Entries are normalized once at build time and packed back to back in a
//! single byte arena; an open-addressing table of entry indices (hashbrown's
//! SwissTable, hashed with FxHash) answers membership queries. At a few
//! million entries the whole structure is a few tens of megabytes.
//!
//! # LEXV v1 file layout
//!
//! All integers little-endian:
//!
//! ```text
//! "LEXV"          4 bytes magic
//! version  u32    = 1
//! mode     u8     0 = none, 1 = lower, 2 = lower-noaccents
//! count    u64    number of entries
//! count times, entries in ascending byte order:
//!   len    u32    byte length (> 0)
//!   bytes  [u8]   normalized UTF-8
//! ```

use std::borrow::Cow;
use std::fmt;
use std::hash::{BuildHasher, Hasher};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use hashbrown::HashTable;
use rustc_hash::FxBuildHasher;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LEXV";
pub const VERSION: u32 = 1;

/// How words are canonicalized before storage and lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    None,
    Lower,
    LowerNoAccents,
}

impl Normalization {
    pub fn apply<'a>(&self, word: &'a str) -> Cow<'a, str> {
        match self {
            Normalization::None => Cow::Borrowed(word),
            Normalization::Lower => {
                if word.chars().any(|c| c.is_uppercase()) {
                    Cow::Owned(word.to_lowercase())
                } else {
                    Cow::Borrowed(word)
                }
            }
            Normalization::LowerNoAccents => {
                if word.is_ascii() {
                    return Normalization::Lower.apply(word);
                }
                let stripped: String = word
                    .nfd()
                    .filter(|c| !is_combining_mark(*c))
                    .collect::<String>()
                    .to_lowercase()
                    .nfd()
                    .filter(|c| !is_combining_mark(*c))
                    .nfc()
                    .collect();
                Cow::Owned(stripped)
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Normalization::None => 0,
            Normalization::Lower => 1,
            Normalization::LowerNoAccents => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Normalization::None),
            1 => Some(Normalization::Lower),
            2 => Some(Normalization::LowerNoAccents),
            _ => None,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Lower => "lower",
            Normalization::LowerNoAccents => "lower-noaccents",
        })
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Normalization::None),
            "lower" | "lowercase" => Ok(Normalization::Lower),
            "lower-noaccents" | "lowercase_strip_accents" => Ok(Normalization::LowerNoAccents),
            other => Err(format!("unknown normalization {other:?}")),
        }
    }
}

/// A set of normalized, non-empty words.
pub struct Lexicon {
    mode: Normalization,
    arena: Vec<u8>,
    // entry i is arena[ends[i - 1]..ends[i]]
    ends: Vec<usize>,
    table: HashTable<u32>,
    hasher: FxBuildHasher,
}

impl fmt::Debug for Lexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lexicon")
            .field("mode", &self.mode)
            .field("len", &self.len())
            .finish()
    }
}

impl Lexicon {
    /// Builds a lexicon, dropping empty and whitespace-only words and trimming
    /// surrounding whitespace from the rest.
    pub fn build<I, S>(words: I, mode: Normalization) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Self::empty(mode);
        for word in words {
            lex.insert(word.as_ref());
        }
        lex.arena.shrink_to_fit();
        lex.ends.shrink_to_fit();
        lex
    }

    /// Builds from UTF-8 text with one word per line.
    pub fn from_reader<R: Read>(reader: R, mode: Normalization) -> Result<Self> {
        let mut lex = Self::empty(mode);
        for line in BufReader::new(reader).lines() {
            lex.insert(&line?);
        }
        Ok(lex)
    }

    /// Builds from several word-list files.
    pub fn from_files<P: AsRef<Path>>(paths: &[P], mode: Normalization) -> Result<Self> {
        let mut lex = Self::empty(mode);
        for path in paths {
            let file = std::fs::File::open(path)?;
            for line in BufReader::new(file).lines() {
                lex.insert(&line?);
            }
        }
        Ok(lex)
    }

    fn empty(mode: Normalization) -> Self {
        Self {
            mode,
            arena: Vec::new(),
            ends: Vec::new(),
            table: HashTable::new(),
            hasher: FxBuildHasher,
        }
    }

    fn insert(&mut self, word: &str) {
        let word = word.trim();
        if word.is_empty() {
            return;
        }
        let normalized = self.mode.apply(word);
        if normalized.is_empty() {
            return;
        }
        self.insert_normalized(normalized.as_bytes());
    }

    fn insert_normalized(&mut self, key: &[u8]) -> bool {
        let hash = self.hash(key);
        let Self {
            arena,
            ends,
            table,
            hasher,
            ..
        } = self;
        let entry = |i: u32| -> &[u8] {
            let i = i as usize;
            let start = if i == 0 { 0 } else { ends[i - 1] };
            &arena[start..ends[i]]
        };
        if table.find(hash, |&i| entry(i) == key).is_some() {
            return false;
        }
        let index = u32::try_from(ends.len()).expect("lexicon holds at most 2^32 entries");
        let rehash = |&i: &u32| {
            let mut h = hasher.build_hasher();
            h.write(entry(i));
            h.finish()
        };
        table.insert_unique(hash, index, rehash);
        arena.extend_from_slice(key);
        ends.push(arena.len());
        true
    }

    fn hash(&self, key: &[u8]) -> u64 {
        let mut h = self.hasher.build_hasher();
        h.write(key);
        h.finish()
    }

    fn entry_bytes(&self, i: usize) -> &[u8] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.arena[start..self.ends[i]]
    }

    /// True iff the normalized form of `word` is an entry.
    pub fn contains(&self, word: &str) -> bool {
        if word.is_empty() {
            return false;
        }
        self.contains_normalized(&self.mode.apply(word))
    }

    /// Membership test for a string that is already normalized.
    pub fn contains_normalized(&self, key: &str) -> bool {
        let key = key.as_bytes();
        self.table
            .find(self.hash(key), |&i| self.entry_bytes(i as usize) == key)
            .is_some()
    }

    pub fn normalize<'a>(&self, word: &'a str) -> Cow<'a, str> {
        self.mode.apply(word)
    }

    pub fn mode(&self) -> Normalization {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.len()).map(|i| {
            // entries are only ever inserted from &str
            std::str::from_utf8(self.entry_bytes(i)).expect("entries are UTF-8")
        })
    }

    /// Entries in ascending byte order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut all: Vec<&str> = self.iter().collect();
        all.sort_unstable();
        all
    }

    /// Bytes held on the heap by the structure.
    pub fn heap_bytes(&self) -> usize {
        self.arena.capacity()
            + self.ends.capacity() * std::mem::size_of::<usize>()
            + self.table.allocation_size()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&[self.mode.code()])?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for entry in self.sorted() {
            out.write_all(&(entry.len() as u32).to_le_bytes())?;
            out.write_all(entry.as_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut reader = std::io::BufReader::new(reader);
        let mut header = [0u8; 17];
        read_exact(&mut reader, &mut header, origin)?;
        if &header[..4] != MAGIC {
            return Err(Error::malformed(origin, "bad magic"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::malformed(
                origin,
                format!("unsupported version {version}"),
            ));
        }
        let mode = Normalization::from_code(header[8])
            .ok_or_else(|| Error::malformed(origin, format!("unknown mode {}", header[8])))?;
        let count = u64::from_le_bytes(header[9..17].try_into().unwrap());
        let mut lex = Self::empty(mode);
        let mut len_buf = [0u8; 4];
        let mut word = Vec::new();
        for _ in 0..count {
            read_exact(&mut reader, &mut len_buf, origin)?;
            let len = u32::from_le_bytes(len_buf) as usize;
            if len == 0 {
                return Err(Error::malformed(origin, "empty entry"));
            }
            word.resize(len, 0);
            read_exact(&mut reader, &mut word, origin)?;
            if std::str::from_utf8(&word).is_err() {
                return Err(Error::malformed(origin, "entry is not UTF-8"));
            }
            if !lex.insert_normalized(&word) {
                return Err(Error::malformed(origin, "duplicate entry"));
            }
        }
        if reader.read(&mut [0u8; 1])? != 0 {
            return Err(Error::malformed(origin, "trailing bytes"));
        }
        Ok(lex)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_from(std::fs::File::open(path)?, path)
    }
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8], origin: &Path) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::malformed(origin, "truncated"),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dedups_under_lowercase() {
        let lex = Lexicon::build(["Je", "je", "demander"], Normalization::Lower);
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("JE"));
        assert!(lex.contains("demander"));
        assert!(!lex.contains("demandez"));
    }

    #[test]
    fn empty_lexicon_and_empty_query() {
        let lex = Lexicon::build(Vec::<String>::new(), Normalization::None);
        assert!(lex.is_empty());
        assert!(!lex.contains(""));
        assert!(!lex.contains("x"));
        let lex = Lexicon::build(["", "   ", "\t", "a"], Normalization::None);
        assert_eq!(lex.len(), 1);
        assert!(!lex.contains(""));
    }

    #[test]
    fn none_mode_keeps_case() {
        let lex = Lexicon::build(["Paris"], Normalization::None);
        assert!(lex.contains("Paris"));
        assert!(!lex.contains("paris"));
    }

    #[test]
    fn strips_accents_from_composed_and_decomposed_forms() {
        let lex = Lexicon::build(["Élève"], Normalization::LowerNoAccents);
        assert!(lex.contains("eleve"));
        assert!(lex.contains("E\u{301}le\u{300}ve"));
        assert!(lex.contains("ÉLÈVE"));
        assert_eq!(lex.sorted(), vec!["eleve"]);
    }

    #[test]
    fn symbols_are_kept_verbatim() {
        let lex = Lexicon::build(["aujourd'hui", "peut-être"], Normalization::Lower);
        assert!(lex.contains("aujourd'hui"));
        assert!(!lex.contains("aujourdhui"));
        assert!(lex.contains("Peut-Être"));
    }

    #[test]
    fn file_round_trip() {
        let lex = Lexicon::build(["chat", "chien", "ai"], Normalization::Lower);
        let mut bytes = Vec::new();
        lex.write_to(&mut bytes).unwrap();
        let back = Lexicon::read_from(bytes.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.mode(), Normalization::Lower);
        for w in ["chat", "chien", "ai"] {
            assert!(back.contains(w));
        }
        for w in ["chats", "chie", "a"] {
            assert!(!back.contains(w));
        }
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        let lex = Lexicon::build(["chat"], Normalization::None);
        let mut bytes = Vec::new();
        lex.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Lexicon::read_from(bad.as_slice(), Path::new("mem")),
            Err(Error::MalformedFile { .. })
        ));
        let cut = &bytes[..bytes.len() - 2];
        assert!(matches!(
            Lexicon::read_from(cut, Path::new("mem")),
            Err(Error::MalformedFile { .. })
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(word in "\\PC{0,12}") {
            for mode in [Normalization::None, Normalization::Lower, Normalization::LowerNoAccents] {
                let once = mode.apply(&word).into_owned();
                let twice = mode.apply(&once).into_owned();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn superset_lexicon_accepts_everything_the_subset_does(
            small in proptest::collection::vec("[a-eA-E]{1,4}", 0..20),
            extra in proptest::collection::vec("[a-eA-E]{1,4}", 0..20),
            queries in proptest::collection::vec("[a-eA-E]{0,4}", 0..40),
        ) {
            let l1 = Lexicon::build(&small, Normalization::Lower);
            let l2 = Lexicon::build(small.iter().chain(&extra), Normalization::Lower);
            for q in &queries {
                if l1.contains(q) {
                    prop_assert!(l2.contains(q));
                }
                prop_assert_eq!(l1.contains(q), small.iter().any(|w| w.to_lowercase() == q.to_lowercase()) && !q.is_empty());
            }
        }
    }
}

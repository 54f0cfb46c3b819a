//! Alphabets, posteriorgrams and their on-disk formats.
//!
//! A posteriorgram is the `T x C` matrix of per-frame class posteriors a
//! sequence classifier emits for one word image. Class 0 is always the CTC
//! blank. Probabilities are stored as `f32` (the interchange precision of the
//! POSTGRAM v1 format) and every computation over them is carried out in `f64`.
//!
//! # POSTGRAM v1
//!
//! All integers little-endian:
//!
//! ```text
//! "PGRM"            4 bytes magic
//! version  u32      = 1
//! classes  u32      C >= 2
//! frames   u32      T >= 1
//! C-1 times:        labels of classes 1..C-1
//!   len    u16      byte length
//!   bytes  [u8]     UTF-8
//! T*C      f32      probabilities, row-major (frame-major)
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLANK: usize = 0;
pub const MAGIC: &[u8; 4] = b"PGRM";
pub const VERSION: u32 = 1;
/// Maximum deviation of a row sum from 1 accepted when loading.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;
/// File extension of per-word posteriorgram files inside a classifier directory.
pub const EXTENSION: &str = "pgm1";

/// Ordered class labels. Index 0 is the blank and has no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    longest_label: usize,
}

impl Alphabet {
    /// Builds an alphabet from the labels of classes `1..C`.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![String::new()];
        let mut index = HashMap::new();
        let mut longest_label = 0;
        for label in labels {
            let label = label.into();
            if label.is_empty() {
                return Err(Error::InvariantViolation("empty alphabet label".into()));
            }
            if index.insert(label.clone(), all.len()).is_some() {
                return Err(Error::InvariantViolation(format!(
                    "duplicate alphabet label {label:?}"
                )));
            }
            longest_label = longest_label.max(label.chars().count());
            all.push(label);
        }
        if all.len() < 2 {
            return Err(Error::InvariantViolation(
                "alphabet needs at least one non-blank class".into(),
            ));
        }
        Ok(Self {
            labels: all,
            index,
            longest_label,
        })
    }

    /// One single-character class per distinct character, in sorted order.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let mut set: Vec<char> = chars.into_iter().collect();
        set.sort_unstable();
        set.dedup();
        Self::new(set.into_iter().map(String::from))
    }

    /// Number of classes, blank included.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Label of class `i`; `None` for the blank or out-of-range indices.
    pub fn label(&self, i: usize) -> Option<&str> {
        if i == BLANK {
            None
        } else {
            self.labels.get(i).map(String::as_str)
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Labels of classes `1..C`.
    pub fn labels(&self) -> &[String] {
        &self.labels[1..]
    }

    /// Splits `text` into class indices by greedy longest label match.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(text.len());
        let mut rest = text;
        'outer: while !rest.is_empty() {
            let boundaries: Vec<usize> = rest
                .char_indices()
                .map(|(i, _)| i)
                .skip(1)
                .chain(std::iter::once(rest.len()))
                .take(self.longest_label)
                .collect();
            for &end in boundaries.iter().rev() {
                if let Some(&class) = self.index.get(&rest[..end]) {
                    out.push(class);
                    rest = &rest[end..];
                    continue 'outer;
                }
            }
            let bad = rest.chars().next().map(String::from).unwrap_or_default();
            return Err(Error::UnknownCharacter(bad));
        }
        Ok(out)
    }

    /// Concatenates the labels of non-blank classes.
    pub fn decode(&self, classes: &[usize]) -> String {
        classes.iter().filter_map(|&c| self.label(c)).collect()
    }
}

/// A `T x C` row-stochastic matrix of frame posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    alphabet: Arc<Alphabet>,
    frames: usize,
    probs: Vec<f32>,
}

impl Posteriorgram {
    /// Validates and wraps a row-major probability buffer.
    pub fn new(alphabet: Arc<Alphabet>, frames: usize, probs: Vec<f32>) -> Result<Self> {
        let classes = alphabet.len();
        if frames == 0 {
            return Err(Error::InvariantViolation(
                "posteriorgram has no frames".into(),
            ));
        }
        if probs.len() != frames * classes {
            return Err(Error::ShapeMismatch(format!(
                "expected {frames}x{classes} = {} values, got {}",
                frames * classes,
                probs.len()
            )));
        }
        for (t, row) in probs.chunks_exact(classes).enumerate() {
            if let Some(c) = row.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvariantViolation(format!(
                    "frame {t} class {c}: probability {} outside [0, 1]",
                    row[c]
                )));
            }
            let sum: f64 = row.iter().map(|&p| f64::from(p)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvariantViolation(format!(
                    "frame {t} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            alphabet,
            frames,
            probs,
        })
    }

    /// Builds a posteriorgram from `f64` rows, normalizing each row to sum 1.
    pub fn from_weights(alphabet: Arc<Alphabet>, rows: &[Vec<f64>]) -> Result<Self> {
        let classes = alphabet.len();
        let mut probs = Vec::with_capacity(rows.len() * classes);
        for row in rows {
            if row.len() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "row of {} weights for {classes} classes",
                    row.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || row.iter().any(|w| *w < 0.0) {
                return Err(Error::InvariantViolation(
                    "weights must be non-negative with a positive sum".into(),
                ));
            }
            probs.extend(row.iter().map(|w| (w / total) as f32));
        }
        Self::new(alphabet, rows.len(), probs)
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.alphabet.len()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let c = self.classes();
        &self.probs[t * c..(t + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.probs.chunks_exact(self.classes())
    }

    pub fn get(&self, t: usize, class: usize) -> f32 {
        self.probs[t * self.classes() + class]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.probs
    }

    /// Serializes to POSTGRAM v1 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.probs.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        for label in self.alphabet.labels() {
            out.extend_from_slice(&(label.len() as u16).to_le_bytes());
            out.extend_from_slice(label.as_bytes());
        }
        for p in &self.probs {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses POSTGRAM v1 bytes; `origin` only labels error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut cursor = Cursor {
            bytes,
            pos: 0,
            origin,
        };
        if cursor.take(4)? != MAGIC {
            return Err(Error::malformed(origin, "bad magic"));
        }
        let version = cursor.u32()?;
        if version != VERSION {
            return Err(Error::malformed(
                origin,
                format!("unsupported version {version}"),
            ));
        }
        let classes = cursor.u32()? as usize;
        let frames = cursor.u32()? as usize;
        if classes < 2 {
            return Err(Error::malformed(origin, format!("{classes} classes")));
        }
        let mut labels = Vec::with_capacity(classes - 1);
        for _ in 1..classes {
            let len = cursor.u16()? as usize;
            let raw = cursor.take(len)?;
            let label = std::str::from_utf8(raw)
                .map_err(|_| Error::malformed(origin, "label is not UTF-8"))?;
            labels.push(label.to_owned());
        }
        let alphabet = Alphabet::new(labels)
            .map_err(|e| Error::malformed(origin, format!("alphabet: {e}")))?;
        let count = frames
            .checked_mul(classes)
            .ok_or_else(|| Error::malformed(origin, "dimensions overflow"))?;
        let body = cursor.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::malformed(origin, "dimensions overflow"))?,
        )?;
        if cursor.pos != bytes.len() {
            return Err(Error::malformed(origin, "trailing bytes"));
        }
        let probs = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(Arc::new(alphabet), frames, probs)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::malformed(self.origin, "truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_posteriorgram(path: impl AsRef<Path>) -> Result<Posteriorgram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    Posteriorgram::from_bytes(&bytes, path)
}

pub fn save_posteriorgram(p: &Posteriorgram, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, p.to_bytes())?;
    Ok(())
}

/// Element-wise mean of posteriorgrams sharing alphabet and frame count.
///
/// Each cell is summed in ascending order of its values, so the result does
/// not depend on the order of `ps`.
pub fn average_posteriors(ps: &[Posteriorgram]) -> Result<Posteriorgram> {
    let first = ps
        .first()
        .ok_or_else(|| Error::ShapeMismatch("nothing to average".into()))?;
    for p in &ps[1..] {
        if p.frames != first.frames {
            return Err(Error::ShapeMismatch(format!(
                "frame counts {} and {}",
                first.frames, p.frames
            )));
        }
        if !Arc::ptr_eq(&p.alphabet, &first.alphabet) && p.alphabet != first.alphabet {
            return Err(Error::ShapeMismatch("alphabets differ".into()));
        }
    }
    let k = ps.len() as f64;
    let mut cell = Vec::with_capacity(ps.len());
    let probs = (0..first.probs.len())
        .map(|i| {
            cell.clear();
            cell.extend(ps.iter().map(|p| f64::from(p.probs[i])));
            cell.sort_by(f64::total_cmp);
            (cell.iter().sum::<f64>() / k) as f32
        })
        .collect();
    Posteriorgram::new(first.alphabet.clone(), first.frames, probs)
}

/// One manifest record: a word image and its reference transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSample {
    pub id: String,
    pub transcript: String,
}

impl WordSample {
    pub fn new(id: impl Into<String>, transcript: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            transcript: transcript.into(),
        }
    }

    /// Location of this word's posteriorgram inside a classifier directory.
    pub fn posteriorgram_path(&self, classifier_dir: &Path) -> PathBuf {
        classifier_dir.join(format!("{}.{EXTENSION}", self.id))
    }
}

/// Reads a JSON Lines manifest. Ids must be unique.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<WordSample>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: WordSample = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, format!("line {}: {e}", n + 1)))?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::malformed(
                path,
                format!("line {}: duplicate id {:?}", n + 1, sample.id),
            ));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_manifest(samples: &[WordSample], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Arc<Alphabet> {
        Arc::new(Alphabet::from_chars("abc".chars()).unwrap())
    }

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        assert!(Alphabet::new([""]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn encode_prefers_longest_label() {
        let alpha = Alphabet::new(["a", "b", "ab"]).unwrap();
        assert_eq!(alpha.encode("aba").unwrap(), vec![3, 1]);
        assert!(matches!(alpha.encode("ax"), Err(Error::UnknownCharacter(c)) if c == "x"));
        assert_eq!(alpha.decode(&[3, 0, 1]), "aba");
    }

    #[test]
    fn rejects_rows_off_the_simplex() {
        let err = Posteriorgram::new(abc(), 1, vec![0.5, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        let err = Posteriorgram::new(abc(), 1, vec![1.5, -0.5, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        assert!(Posteriorgram::new(abc(), 0, vec![]).is_err());
    }

    #[test]
    fn uniform_round_trip() {
        let alpha = Arc::new(Alphabet::new(["x"]).unwrap());
        let p = Posteriorgram::new(alpha, 1, vec![0.5, 0.5]).unwrap();
        let back = Posteriorgram::from_bytes(&p.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let alpha = Arc::new(Alphabet::new(["x"]).unwrap());
        let p = Posteriorgram::new(alpha, 2, vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        let mut bytes = p.to_bytes();
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(
            Posteriorgram::from_bytes(short, Path::new("mem")),
            Err(Error::MalformedFile { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            Posteriorgram::from_bytes(&bytes, Path::new("mem")),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn average_of_opposites_is_half() {
        let alpha = Arc::new(Alphabet::new(["x"]).unwrap());
        let a = Posteriorgram::new(alpha.clone(), 1, vec![1.0, 0.0]).unwrap();
        let b = Posteriorgram::new(alpha, 1, vec![0.0, 1.0]).unwrap();
        let avg = average_posteriors(&[a.clone(), b]).unwrap();
        assert_eq!(avg.as_slice(), &[0.5, 0.5]);
        let same = average_posteriors(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(same, a);
    }

    #[test]
    fn average_rejects_mismatched_shapes() {
        let alpha = Arc::new(Alphabet::new(["x"]).unwrap());
        let a = Posteriorgram::new(alpha.clone(), 1, vec![1.0, 0.0]).unwrap();
        let b = Posteriorgram::new(alpha, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            average_posteriors(&[a.clone(), b]),
            Err(Error::ShapeMismatch(_))
        ));
        let other = Arc::new(Alphabet::new(["y"]).unwrap());
        let c = Posteriorgram::new(other, 1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            average_posteriors(&[a, c]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(average_posteriors(&[]).is_err());
    }
}

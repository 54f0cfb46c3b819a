//! Where the cascade gets classifier posteriorgrams from.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::postgram::{Posteriorgram, WordSample};

/// A cohort of classifiers whose per-word outputs can be loaded on demand.
pub trait PosteriorSource: Sync {
    fn classifier_count(&self) -> usize;

    /// Loads the posteriorgram classifier `classifier` produced for `word`.
    fn load(&self, classifier: usize, word: &WordSample) -> Result<Posteriorgram>;
}

impl<S: PosteriorSource + ?Sized> PosteriorSource for &S {
    fn classifier_count(&self) -> usize {
        (**self).classifier_count()
    }

    fn load(&self, classifier: usize, word: &WordSample) -> Result<Posteriorgram> {
        (**self).load(classifier, word)
    }
}

/// One directory of `<id>.pgm1` files per classifier.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    dirs: Vec<PathBuf>,
}

impl DirectorySource {
    pub fn new(dirs: Vec<PathBuf>) -> Self {
        Self { dirs }
    }

    /// Reads a list file with one classifier directory per line. Relative
    /// paths are resolved against the list file's own directory.
    pub fn from_list_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let text = std::fs::read_to_string(path)?;
        let dirs: Vec<PathBuf> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect();
        if dirs.is_empty() {
            return Err(Error::malformed(path, "no classifier directories listed"));
        }
        Ok(Self { dirs })
    }

    pub fn dirs(&self) -> &[PathBuf] {
        &self.dirs
    }
}

impl PosteriorSource for DirectorySource {
    fn classifier_count(&self) -> usize {
        self.dirs.len()
    }

    fn load(&self, classifier: usize, word: &WordSample) -> Result<Posteriorgram> {
        let missing = || Error::MissingPosteriorgram {
            word: word.id.clone(),
            classifier,
        };
        let dir = self.dirs.get(classifier).ok_or_else(missing)?;
        let path = word.posteriorgram_path(dir);
        match std::fs::read(&path) {
            Ok(bytes) => Posteriorgram::from_bytes(&bytes, &path),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(missing()),
            Err(e) => Err(e.into()),
        }
    }
}

/// Wraps a source and records every load.
pub struct CountingSource<S> {
    inner: S,
    per_classifier: Vec<AtomicU64>,
    log: Mutex<Vec<(String, usize)>>,
}

impl<S: PosteriorSource> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        let per_classifier = (0..inner.classifier_count())
            .map(|_| AtomicU64::new(0))
            .collect();
        Self {
            inner,
            per_classifier,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn loads(&self, classifier: usize) -> u64 {
        self.per_classifier[classifier].load(Ordering::Relaxed)
    }

    pub fn total_loads(&self) -> u64 {
        self.per_classifier
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .sum()
    }

    /// Classifiers loaded for `word_id`, in load order.
    pub fn loads_for(&self, word_id: &str) -> Vec<usize> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|(id, _)| id == word_id)
            .map(|&(_, c)| c)
            .collect()
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: PosteriorSource> PosteriorSource for CountingSource<S> {
    fn classifier_count(&self) -> usize {
        self.inner.classifier_count()
    }

    fn load(&self, classifier: usize, word: &WordSample) -> Result<Posteriorgram> {
        if let Some(c) = self.per_classifier.get(classifier) {
            c.fetch_add(1, Ordering::Relaxed);
        }
        self.log.lock().unwrap().push((word.id.clone(), classifier));
        self.inner.load(classifier, word)
    }
}

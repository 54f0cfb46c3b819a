//! Independent reference implementations used to check the library.

#![allow(dead_code)]

/// Per-frame argmax (first maximum), collapse runs, drop blanks; returns labels.
pub fn best_path_labels(rows: &[Vec<f32>]) -> Vec<usize> {
    let mut path = Vec::with_capacity(rows.len());
    for row in rows {
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        path.push(best);
    }
    let mut collapsed: Vec<usize> = Vec::new();
    for (i, &c) in path.iter().enumerate() {
        if i == 0 || path[i - 1] != c {
            collapsed.push(c);
        }
    }
    collapsed.into_iter().filter(|&c| c != 0).collect()
}

pub fn best_path_score(rows: &[Vec<f32>]) -> f64 {
    rows.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            (m as f64).max(1e-30).ln()
        })
        .sum()
}

/// Best score over every frame labelling that collapses to `word`, found by
/// depth-first enumeration of alignments. `None` when no alignment fits.
pub fn exhaustive_alignment_score(rows: &[Vec<f32>], word: &[usize]) -> Option<f64> {
    fn walk(
        rows: &[Vec<f32>],
        word: &[usize],
        t: usize,
        // labels emitted so far, and whether the last frame was that label
        emitted: usize,
        on_label: bool,
        acc: f64,
        best: &mut Option<f64>,
    ) {
        let remaining_frames = rows.len() - t;
        // each remaining label needs a frame, plus a blank between repeats
        let mut need = 0;
        for i in emitted..word.len() {
            need += 1;
            let prev = if i == 0 { None } else { Some(word[i - 1]) };
            if prev == Some(word[i]) && (i > emitted || on_label) {
                need += 1;
            }
        }
        if need > remaining_frames {
            return;
        }
        if t == rows.len() {
            if emitted == word.len() && best.map_or(true, |b| acc > b) {
                *best = Some(acc);
            }
            return;
        }
        let lp = |c: usize| (rows[t][c] as f64).max(1e-30).ln();
        // blank
        walk(rows, word, t + 1, emitted, false, acc + lp(0), best);
        // stay on the current label
        if on_label {
            let c = word[emitted - 1];
            walk(rows, word, t + 1, emitted, true, acc + lp(c), best);
        }
        // next label; a repeat needs a blank in between
        if emitted < word.len() {
            let c = word[emitted];
            let blocked = on_label && word[emitted - 1] == c;
            if !blocked {
                walk(rows, word, t + 1, emitted + 1, true, acc + lp(c), best);
            }
        }
    }
    let mut best = None;
    walk(rows, word, 0, 0, false, 0.0, &mut best);
    best
}

/// Textbook full-matrix Levenshtein distance over Unicode scalars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

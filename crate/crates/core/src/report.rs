//! Machine-readable run reports.
//!
//! Every aggregate in a [`RunReport`] is a pure function of the per-word
//! outcomes and the echoed configuration, so [`audit`] can rebuild the report
//! from its own outcomes and demand a byte-identical serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeConfig, CascadeRun, DecisionOutcome, MndaRule, Status};
use crate::error::{Error, Result};
use crate::lexicon::Normalization;
use crate::metrics::{estimate_pfa, outcome_metrics, LengthBins, PfaTable, RunMetrics};

pub const TOOL: &str = "lexcascade";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub cascade: CascadeConfig,
    pub normalization: Normalization,
    pub classifier_count: usize,
    pub lexicon_size: usize,
    pub unscoreable_lexicon_entries: usize,
}

/// Stages evaluated per word (a rejected word counts every stage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean: f64,
    pub p50: usize,
    pub p80: usize,
    pub p90: usize,
}

/// Per-word wall time in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p80_us: f64,
    pub p90_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: ReportConfig,
    pub metrics: RunMetrics,
    /// False-acceptance estimate under the configured agreement rule.
    pub pfa: PfaTable,
    /// Words accepted at each stage; index 0 is stage 1.
    pub stage_histogram: Vec<u64>,
    /// Words decoded at each stage.
    pub stage_decodes: Vec<u64>,
    pub stages: StageStats,
    pub timing: Option<TimingStats>,
    pub outcomes: Vec<DecisionOutcome>,
}

/// Nearest-rank percentile of sorted values.
fn percentile<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

impl RunReport {
    pub fn new(run: &CascadeRun, config: ReportConfig, seed: u64) -> Self {
        let mut config = config;
        config.cascade.order = run.order.clone();
        config.classifier_count = run.classifier_count;
        config.unscoreable_lexicon_entries = run.unscoreable_entries;
        let mut report = Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            metrics: RunMetrics::default(),
            pfa: estimate_pfa(
                &[],
                &LengthBins::default(),
                &MndaRule::uniform(1),
                Normalization::None,
            ),
            stage_histogram: Vec::new(),
            stage_decodes: Vec::new(),
            stages: StageStats {
                mean: 0.0,
                p50: 0,
                p80: 0,
                p90: 0,
            },
            timing: None,
            outcomes: run.outcomes.clone(),
        };
        report.recompute();
        report
    }

    /// Rebuilds every aggregate from `outcomes` and `config`.
    pub fn recompute(&mut self) {
        let norm = self.config.normalization;
        let n = self.config.classifier_count;
        self.metrics = outcome_metrics(&self.outcomes, norm);
        self.pfa = estimate_pfa(
            &self.outcomes,
            &LengthBins::default(),
            &self.config.cascade.mnda(),
            norm,
        );
        self.stage_histogram = vec![0; n];
        self.stage_decodes = vec![0; n];
        for o in &self.outcomes {
            if o.status == Status::Accepted {
                if let Some(s) = o.stage_accepted.filter(|s| (1..=n).contains(s)) {
                    self.stage_histogram[s - 1] += 1;
                }
            }
            for h in &o.trace {
                if let Some(d) = self.stage_decodes.get_mut(h.stage.wrapping_sub(1)) {
                    *d += 1;
                }
            }
        }
        let mut stages: Vec<usize> = self
            .outcomes
            .iter()
            .map(|o| o.stage_accepted.unwrap_or(n))
            .collect();
        stages.sort_unstable();
        self.stages = StageStats {
            mean: if stages.is_empty() {
                0.0
            } else {
                stages.iter().sum::<usize>() as f64 / stages.len() as f64
            },
            p50: percentile(&stages, 50.0).unwrap_or(0),
            p80: percentile(&stages, 80.0).unwrap_or(0),
            p90: percentile(&stages, 90.0).unwrap_or(0),
        };
        let mut times: Vec<f64> = self
            .outcomes
            .iter()
            .filter_map(|o| o.elapsed_ns.map(|ns| ns as f64 / 1000.0))
            .collect();
        self.timing = if times.is_empty() || times.len() != self.outcomes.len() {
            None
        } else {
            times.sort_by(f64::total_cmp);
            Some(TimingStats {
                mean_us: times.iter().sum::<f64>() / times.len() as f64,
                p50_us: percentile(&times, 50.0).unwrap_or(0.0),
                p80_us: percentile(&times, 80.0).unwrap_or(0.0),
                p90_us: percentile(&times, 90.0).unwrap_or(0.0),
            })
        };
    }

    /// Pretty JSON with a trailing newline; key order follows field order.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::malformed(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }
}

/// Recomputes every aggregate of a serialized report and checks the result
/// serializes to exactly the same bytes.
pub fn audit(text: &str) -> Result<RunReport> {
    let stored = RunReport::from_json(text)?;
    let mut rebuilt = stored.clone();
    rebuilt.recompute();
    let json = rebuilt.to_json()?;
    if json == text {
        return Ok(rebuilt);
    }
    let a = serde_json::to_value(&stored)?;
    let b = serde_json::to_value(&rebuilt)?;
    let mut differing: Vec<String> = match (a.as_object(), b.as_object()) {
        (Some(a), Some(b)) => a
            .iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect(),
        _ => Vec::new(),
    };
    if differing.is_empty() {
        differing.push("formatting".into());
    }
    Err(Error::AuditMismatch(format!(
        "recomputed values differ in: {}",
        differing.join(", ")
    )))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&v, 50.0), Some(5));
        assert_eq!(percentile(&v, 80.0), Some(8));
        assert_eq!(percentile(&v, 90.0), Some(9));
        assert_eq!(percentile(&[7], 90.0), Some(7));
        assert_eq!(percentile::<u8>(&[], 50.0), None);
    }
}

//! Run a cohort without early exit on validation words, then drop the
//! classifiers the cascade does not need.
//!
//! cargo run --release -p lexcascade --example prune

use lexcascade::cascade::{run_cascade, CascadeConfig, RunOptions};
use lexcascade::cohort_sim::{words, CohortSpec, SimulatedCohort};
use lexcascade::lexicon::{Lexicon, Normalization};
use lexcascade::pruning::{prune, FaThreshold, PruneStrategy};
use lexcascade::report::{ReportConfig, RunReport};

fn main() -> lexcascade::Result<()> {
    let vocab = words::pseudo_words(5000, 1);
    let validation = words::samples(&vocab[..1000]);
    let lexicon = Lexicon::build(&vocab, Normalization::Lower);
    let cohort = SimulatedCohort::new(
        CohortSpec {
            seed: 9,
            n_classifiers: 60,
            eps: 0.04,
            ..CohortSpec::default()
        },
        words::alphabet(),
    )?;
    let cfg = CascadeConfig {
        early_exit: false,
        ..CascadeConfig::default()
    };
    let run = run_cascade(&cohort, &validation, &lexicon, &cfg, &RunOptions::default())?;
    let report = RunReport::new(
        &run,
        ReportConfig {
            cascade: cfg,
            normalization: lexicon.mode(),
            classifier_count: run.classifier_count,
            lexicon_size: lexicon.len(),
            unscoreable_lexicon_entries: 0,
        },
        0,
    );
    for strategy in [PruneStrategy::OnePass, PruneStrategy::Iterative] {
        let p = prune(&report, FaThreshold::default(), strategy)?;
        println!(
            "{strategy:?}: kept {} of 60 {:?}; WRR {:.2} -> {:.2}; false acceptances {} -> {}",
            p.kept.len(),
            p.kept,
            p.before.wrr,
            p.after.wrr,
            p.before.false_acceptances,
            p.after.false_acceptances
        );
    }
    Ok(())
}

//! Run a lexicon-verified cascade over a synthetic cohort, with and without
//! the Viterbi fallback, and print the report summary.
//!
//! cargo run --release -p lexcascade --example cascade

use lexcascade::cascade::{order_by_deletion, run_cascade, CascadeConfig, Fallback, RunOptions};
use lexcascade::cohort_sim::{words, CohortSpec, SimulatedCohort};
use lexcascade::lexicon::{Lexicon, Normalization};
use lexcascade::report::{audit, ReportConfig, RunReport};

fn main() -> lexcascade::Result<()> {
    let vocab = words::pseudo_words(5000, 1);
    let samples = words::samples(&vocab[..1000]);
    let lexicon = Lexicon::build(&vocab, Normalization::Lower);
    let cohort = SimulatedCohort::new(
        CohortSpec {
            seed: 3,
            n_classifiers: 30,
            eps: 0.05,
            rho: 0.5,
            ..CohortSpec::default()
        },
        words::alphabet(),
    )?;
    let (order, rates) = order_by_deletion(&cohort, &samples[..200], Normalization::Lower)?;
    println!(
        "first stages {:?}, deletion rates {:.4} .. {:.4}",
        &order[..5],
        rates[order[0]],
        rates[order[29]]
    );

    for fallback in [Fallback::None, Fallback::Viterbi { k: 10 }] {
        let cfg = CascadeConfig {
            order: order.clone(),
            fallback,
            ..CascadeConfig::default()
        };
        let run = run_cascade(&cohort, &samples, &lexicon, &cfg, &RunOptions::default())?;
        let report = RunReport::new(
            &run,
            ReportConfig {
                cascade: cfg,
                normalization: lexicon.mode(),
                classifier_count: run.classifier_count,
                lexicon_size: lexicon.len(),
                unscoreable_lexicon_entries: run.unscoreable_entries,
            },
            0,
        );
        let m = &report.metrics;
        println!(
            "{fallback:?}: WRR {:.2} WER {:.2} WJR {:.2} CER {:.4}; mean stages {:.2}; P_FA {:.5}",
            m.wrr, m.wer, m.wjr, m.cer, report.stages.mean, report.pfa.overall.estimate
        );
        audit(&report.to_json()?)?;
    }
    Ok(())
}

//! How much a cohort gains from its members disagreeing: pairwise similarity,
//! the oracle recognition curve, and plain against lexicon-verified voting.
//!
//! cargo run --release -p lexcascade --example complementarity

use lexcascade::cascade::{majority_vote_baselines, oracle_recognition, DecodedCohort};
use lexcascade::cohort_sim::{words, CohortSpec, SimulatedCohort};
use lexcascade::lexicon::{Lexicon, Normalization};
use lexcascade::metrics::wcso_series;

fn main() -> lexcascade::Result<()> {
    let vocab = words::pseudo_words(5000, 1);
    let samples = words::samples(&vocab[..500]);
    let lexicon = Lexicon::build(&vocab, Normalization::Lower);
    for rho in [0.0, 0.5, 0.9] {
        let cohort = SimulatedCohort::new(
            CohortSpec {
                seed: 5,
                n_classifiers: 40,
                eps: 0.04,
                rho,
                ..CohortSpec::default()
            },
            words::alphabet(),
        )?;
        let decoded = DecodedCohort::decode(&cohort, &samples, &lexicon, &[])?;
        let series = wcso_series(&decoded.texts)?;
        let curve = oracle_recognition(&decoded);
        let votes = majority_vote_baselines(&decoded);
        println!(
            "rho {rho}: WCSO {:.1} +/- {:.1}; oracle WRR with 1/10/40 members {:.1}/{:.1}/{:.1}; vote {:.1}, verified vote {:.1}",
            series.mean, series.std, curve[0], curve[9], curve[39], votes.plain_vote_wrr, votes.verified_vote_wrr
        );
    }
    Ok(())
}

//! Calibrate a synthetic cohort to a raw WER and a pairwise similarity
//! target, then write it to disk in the cascade's input layout.
//!
//! cargo run --release -p lexcascade --example simulate_cohort [out-dir]

use lexcascade::cohort_sim::{calibrate, words, CalibrationTargets, CohortSpec, SimulatedCohort};

fn main() -> lexcascade::Result<()> {
    let vocab = words::pseudo_words(2000, 1);
    let samples = words::samples(&vocab[..300]);
    let alphabet = words::alphabet();
    let template = CohortSpec {
        seed: 7,
        n_classifiers: 20,
        ..CohortSpec::default()
    };
    let targets = CalibrationTargets {
        wer: Some(33.0),
        wcso: Some(67.0),
        ..CalibrationTargets::default()
    };
    let spec = calibrate(&template, &alphabet, &samples, &targets)?;
    println!("calibrated eps {:.4}, rho {:.4}", spec.eps, spec.rho);

    let cohort = SimulatedCohort::new(CohortSpec { seed: 8, ..spec }, alphabet)?;
    println!(
        "fresh seed: raw WER {:.2}, mean WCSO {:.2}",
        cohort.raw_wer(&samples, 20)?,
        cohort.mean_wcso(&samples, 20)?
    );
    for (w, h) in samples
        .iter()
        .zip(cohort.decode_all(0, &samples)?)
        .filter(|(w, h)| w.transcript != *h)
        .take(5)
    {
        println!("  {:>12} read as {h:?}", w.transcript);
    }

    if let Some(out) = std::env::args().nth(1) {
        cohort.write(out.as_ref(), &samples)?;
        println!("wrote {out}");
    }
    Ok(())
}

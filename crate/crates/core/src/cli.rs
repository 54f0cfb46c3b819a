//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 failed self-audit or invariant violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::cascade::{order_by_deletion, run_cascade, CascadeConfig, Fallback, RunOptions};
use crate::cohort_sim::{words, CohortSpec, SimulatedCohort};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Normalization};
use crate::postgram::{load_manifest, Alphabet, WordSample};
use crate::pruning::{prune, FaThreshold, PruneStrategy};
use crate::report::{audit, write_atomic, ReportConfig, RunReport};
use crate::seeding;
use crate::source::DirectorySource;

#[derive(Debug, Parser)]
#[command(
    name = "lexcascade",
    version,
    about = "Lexicon-verified classifier cascades"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build, query or benchmark a lexicon.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Write a synthetic classifier cohort.
    Simulate(SimulateArgs),
    /// Run a cascade.
    #[command(subcommand)]
    Cascade(CascadeCommand),
    /// Recompute and audit a run report.
    Metrics(MetricsArgs),
    /// Prune a cohort from a full validation run.
    Prune(PruneArgs),
}

#[derive(Debug, Subcommand)]
enum LexiconCommand {
    Build {
        /// Word lists, one word per line.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "lower")]
        normalize: Normalization,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        lex: PathBuf,
        #[arg(long)]
        word: String,
    },
    Bench {
        #[arg(long)]
        lex: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Transcripts, one per line.
    #[arg(long)]
    words: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    frames_per_char: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum CascadeCommand {
    Run(CascadeRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FallbackKind {
    None,
    Viterbi,
}

#[derive(Debug, Args)]
struct CascadeRunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// File listing one classifier directory per line.
    #[arg(long)]
    classifiers: PathBuf,
    /// Persisted lexicon.
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = 3)]
    mnda_long: u32,
    #[arg(long, default_value_t = 10)]
    mnda_short: u32,
    #[arg(long, default_value_t = 4)]
    short_len: usize,
    /// `auto-deletion`, or a file with one classifier index per line.
    #[arg(long)]
    order: Option<String>,
    /// Manifest used to rank classifiers for `--order auto-deletion`
    /// (defaults to `--manifest`).
    #[arg(long)]
    validation_manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    fallback: FallbackKind,
    #[arg(long, default_value_t = 10)]
    fallback_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Decode every stage for every word.
    #[arg(long)]
    no_early_exit: bool,
    /// Include per-word wall time (makes the report non-deterministic).
    #[arg(long)]
    record_timing: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct PruneArgs {
    /// Report of a run with early exit disabled.
    #[arg(long)]
    run: PathBuf,
    /// Count (`5`) or percentage of validation words (`0.5%`).
    #[arg(long, default_value = "0.5%")]
    fa_threshold: String,
    #[arg(long)]
    out: PathBuf,
    /// Judge each removal by replaying the cascade.
    #[arg(long)]
    iterative: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigInvalid(_) | Error::TargetUnreachable(_) => 1,
        Error::InvariantViolation(_) | Error::AuditMismatch(_) => 3,
        _ => 2,
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Lexicon(c) => lexicon(c, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Cascade(CascadeCommand::Run(a)) => cascade_run(a, out),
        Command::Metrics(a) => metrics(a, out),
        Command::Prune(a) => prune_cmd(a, out),
    }
}

fn lexicon(command: LexiconCommand, out: &mut dyn Write) -> Result<()> {
    match command {
        LexiconCommand::Build {
            input,
            normalize,
            out: path,
        } => {
            let started = Instant::now();
            let lex = Lexicon::from_files(&input, normalize)?;
            lex.save(&path)?;
            writeln!(
                out,
                "{} entries ({normalize}), {} heap bytes, built in {:.2?} -> {}",
                lex.len(),
                lex.heap_bytes(),
                started.elapsed(),
                path.display()
            )?;
        }
        LexiconCommand::Query { lex, word } => {
            let lex = Lexicon::load(&lex)?;
            let key = lex.normalize(&word);
            writeln!(out, "{}\t{key}\t{}", word, lex.contains_normalized(&key))?;
        }
        LexiconCommand::Bench { lex, queries, seed } => {
            let lex = Lexicon::load(&lex)?;
            let r = bench_queries(&lex, queries, seed);
            writeln!(
                out,
                "{} queries ({} hits): median {} ns, p90 {} ns, mean {:.1} ns; {} entries, {} heap bytes",
                r.queries,
                r.hits,
                r.median_ns,
                r.p90_ns,
                r.mean_ns,
                lex.len(),
                lex.heap_bytes()
            )?;
        }
    }
    Ok(())
}

/// Query latency measured over batches of lookups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub queries: usize,
    pub hits: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
    pub mean_ns: f64,
}

/// Times `queries` lookups, half drawn from the lexicon and half perturbed.
/// Lookups are timed in batches of 64 so the clock does not dominate.
pub fn bench_queries(lex: &Lexicon, queries: usize, seed: u64) -> BenchResult {
    const BATCH: usize = 64;
    let mut rng = seeding::rng(seed, 0);
    let entries: Vec<&str> = lex.iter().collect();
    let words: Vec<String> = (0..queries)
        .map(|i| match entries.choose(&mut rng) {
            None => format!("q{i}"),
            Some(w) if i % 2 == 0 => (*w).to_owned(),
            Some(w) => format!("{w}{}", rng.gen_range('a'..='z')),
        })
        .collect();
    let mut per_query = Vec::with_capacity(queries.div_ceil(BATCH));
    let mut hits = 0usize;
    let started = Instant::now();
    for batch in words.chunks(BATCH) {
        let t = Instant::now();
        for w in batch {
            hits += usize::from(lex.contains(std::hint::black_box(w)));
        }
        per_query.push(t.elapsed().as_nanos() as u64 / batch.len() as u64);
    }
    let total = started.elapsed();
    per_query.sort_unstable();
    let at = |p: f64| {
        per_query
            .get(((per_query.len() as f64 * p) as usize).min(per_query.len().saturating_sub(1)))
            .copied()
            .unwrap_or(0)
    };
    BenchResult {
        queries,
        hits,
        median_ns: at(0.5),
        p90_ns: at(0.9),
        mean_ns: total.as_nanos() as f64 / queries.max(1) as f64,
    }
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// The default synthetic alphabet extended with any other characters in `words`.
pub fn alphabet_for(words: &[String]) -> Result<std::sync::Arc<Alphabet>> {
    let base = words::alphabet();
    let mut labels: Vec<String> = base.labels().iter().skip(1).cloned().collect();
    let mut extra: Vec<char> = words
        .iter()
        .flat_map(|w| w.chars())
        .filter(|c| base.index_of(c.encode_utf8(&mut [0; 4])).is_none())
        .collect();
    if extra.is_empty() {
        return Ok(base);
    }
    extra.sort_unstable();
    extra.dedup();
    labels.extend(extra.into_iter().map(String::from));
    Ok(std::sync::Arc::new(Alphabet::new(labels)?))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let list = read_word_list(&a.words)?;
    let spec = CohortSpec {
        seed: a.seed,
        n_classifiers: a.n,
        gamma: a.gamma,
        frames_per_char: a.frames_per_char,
        eps: a.eps,
        rho: a.rho,
    };
    let cohort = SimulatedCohort::new(spec, alphabet_for(&list)?)?;
    let samples = words::samples(&list);
    cohort.write(&a.out, &samples)?;
    writeln!(
        out,
        "{} classifiers x {} words -> {}",
        a.n,
        samples.len(),
        a.out.display()
    )?;
    Ok(())
}

fn read_order(path: &Path) -> Result<Vec<usize>> {
    std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse()
                .map_err(|_| Error::malformed(path, format!("not a classifier index: {l:?}")))
        })
        .collect()
}

fn cascade_run(a: CascadeRunArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let source = DirectorySource::from_list_file(&a.classifiers)?;
    let lexicon = Lexicon::load(&a.lexicon)?;
    let order = match a.order.as_deref() {
        None => Vec::new(),
        Some("auto-deletion") => {
            let validation: Vec<WordSample> = match &a.validation_manifest {
                Some(p) => load_manifest(p)?,
                None => manifest.clone(),
            };
            order_by_deletion(&source, &validation, lexicon.mode())?.0
        }
        Some(file) => read_order(Path::new(file))?,
    };
    let config = CascadeConfig {
        mnda_long: a.mnda_long,
        mnda_short: a.mnda_short,
        short_len_threshold: a.short_len,
        fallback: match a.fallback {
            FallbackKind::None => Fallback::None,
            FallbackKind::Viterbi => Fallback::Viterbi { k: a.fallback_k },
        },
        order,
        early_exit: !a.no_early_exit,
    };
    let options = RunOptions {
        seed: a.seed,
        workers: a.workers,
        record_timing: a.record_timing,
        ..RunOptions::default()
    };
    let run = run_cascade(&source, &manifest, &lexicon, &config, &options)?;
    let report = RunReport::new(
        &run,
        ReportConfig {
            cascade: config,
            normalization: lexicon.mode(),
            classifier_count: run.classifier_count,
            lexicon_size: lexicon.len(),
            unscoreable_lexicon_entries: run.unscoreable_entries,
        },
        a.seed,
    );
    let json = report.to_json()?;
    audit(&json)?;
    write_atomic(&a.report, json.as_bytes())?;
    summarize(&report, out)?;
    writeln!(out, "report -> {}", a.report.display())?;
    Ok(())
}

fn summarize(report: &RunReport, out: &mut dyn Write) -> Result<()> {
    let m = &report.metrics;
    writeln!(
        out,
        "words {}  WRR {:.2}  WER {:.2}  WJR {:.2}  CER {:.4}  (accepted {}, fallback {}, rejected {})",
        m.words, m.wrr, m.wer, m.wjr, m.cer, m.accepted, m.fallback_decoded, m.rejected
    )?;
    writeln!(
        out,
        "stages until decision: mean {:.2}  p50 {}  p80 {}  p90 {}",
        report.stages.mean, report.stages.p50, report.stages.p80, report.stages.p90
    )?;
    if let Some(t) = report.timing {
        writeln!(
            out,
            "per-word time (us): mean {:.1}  p50 {:.1}  p80 {:.1}  p90 {:.1}",
            t.mean_us, t.p50_us, t.p80_us, t.p90_us
        )?;
    }
    let o = &report.pfa.overall;
    writeln!(
        out,
        "false acceptance estimate: {}/{} = {:.5}",
        o.false_acceptances, o.trials, o.estimate
    )?;
    Ok(())
}

fn metrics(a: MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.report)?;
    let report = audit(&text).map_err(|e| match e {
        Error::Json(j) => Error::malformed(&a.report, j.to_string()),
        other => other,
    })?;
    summarize(&report, out)?;
    writeln!(out, "audit: ok ({} outcomes)", report.outcomes.len())?;
    Ok(())
}

fn prune_cmd(a: PruneArgs, out: &mut dyn Write) -> Result<()> {
    let report = RunReport::load(&a.run)?;
    let threshold: FaThreshold = a.fa_threshold.parse()?;
    let strategy = if a.iterative {
        PruneStrategy::Iterative
    } else {
        PruneStrategy::OnePass
    };
    let p = prune(&report, threshold, strategy)?;
    let mut json = serde_json::to_string_pretty(&p)?;
    json.push('\n');
    write_atomic(&a.out, json.as_bytes())?;
    writeln!(
        out,
        "kept {} of {} classifiers; WRR {:.2} -> {:.2}, false acceptances {} -> {}",
        p.kept.len(),
        p.kept.len() + p.removed.len(),
        p.before.wrr,
        p.after.wrr,
        p.before.false_acceptances,
        p.after.false_acceptances
    )?;
    writeln!(out, "prune report -> {}", a.out.display())?;
    Ok(())
}

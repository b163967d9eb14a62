//! The `s3lab` command line.
//!
//! Exit codes: 0 on success, 1 when an expectation or fuzz check fails,
//! 2 on usage or schema errors. Every command writes to caller-supplied
//! streams so it can be driven from tests.

pub mod bench;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::address_space::RegionKind;
use crate::s3lib::{Mutation, Policy};
use crate::scenario::{
    execute, gen_corpus, oracle_run, parse_scenario, random_scenario, run_scenario, serialize_scenario, CorpusFunction,
    CorpusSpec, ExecOptions, Outcome, Scenario, Variant,
};

use bench::{BenchConfig, MIN_REPS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "s3lab", version, about = "Tagged-pointer bounds checking laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file under one or more policies.
    Run {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "legacy,annexk,sma")]
        policy: Vec<Policy>,
    },
    /// Generate the overflow corpus and run it under every policy.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<RegionKind>>,
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<CorpusFunction>>,
        #[arg(long, value_delimiter = ',')]
        magnitudes: Option<Vec<u64>>,
    },
    /// Differential fuzzing of the SMA path against the reference oracle.
    Fuzz {
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where failing scenarios are written.
        #[arg(long, default_value = "fuzz-repro")]
        repro_dir: PathBuf,
        #[arg(long, hide = true)]
        inject_mutation: bool,
    },
    /// Time memcpy under each policy and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<RegionKind>>,
        #[arg(long, default_value_t = 31)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `args` (program name first) and run the command.
pub fn main_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().ansi().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Run { file, policy } => cmd_run(&file, &policy, out, err),
        Command::Corpus { out: dir, regions, functions, magnitudes } => {
            let d = CorpusSpec::default();
            let spec = CorpusSpec {
                regions: regions.unwrap_or(d.regions),
                functions: functions.unwrap_or(d.functions),
                magnitudes: magnitudes.unwrap_or(d.magnitudes),
            };
            cmd_corpus(&dir, &spec, out, err)
        }
        Command::Fuzz { count, seed, repro_dir, inject_mutation } => {
            let mutation = inject_mutation.then_some(Mutation::SkipFinalClampedWrite);
            cmd_fuzz(count, seed, &repro_dir, mutation, out, err)
        }
        Command::Bench { sizes, regions, reps, out: path } => {
            let d = BenchConfig::default();
            let cfg = BenchConfig {
                sizes: sizes.unwrap_or(d.sizes),
                regions: regions.unwrap_or(d.regions),
                reps,
                ..d
            };
            cmd_bench(&cfg, path.as_deref(), out, err)
        }
    }
}

/// Process entry point.
pub fn main() -> i32 {
    main_from(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

/// Print one JSON report per policy and check the document's expectations.
pub fn cmd_run(path: &Path, policies: &[Policy], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "schema error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut failed = false;
    for &policy in policies {
        let report = run_scenario(&scenario, policy);
        let _ = writeln!(out, "{}", report.to_json());
        if let Some(e) = scenario.expect.as_ref().and_then(|m| m.get(&policy)) {
            for (field, want, got) in e.mismatches(&report) {
                failed = true;
                let _ = writeln!(err, "{} [{policy}]: expected {field} {want}, got {got}", scenario.name);
            }
        }
    }
    if failed {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}

#[derive(Default)]
struct Tally {
    completed: u64,
    aborted: u64,
    faulted: u64,
    corrupted: u64,
}

/// Write the corpus to `dir`, run it under every policy and print counts.
///
/// Succeeds iff no SMA run faulted or corrupted a neighbor.
pub fn cmd_corpus(dir: &Path, spec: &CorpusSpec, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if spec.regions.is_empty() || spec.functions.is_empty() || spec.magnitudes.is_empty() {
        let _ = writeln!(err, "error: regions, functions and magnitudes must be non-empty");
        return EXIT_USAGE;
    }
    if let Some(m) = spec.magnitudes.iter().find(|m| **m == 0 || **m > 1 << 20) {
        let _ = writeln!(err, "error: magnitude {m} outside 1..=1048576");
        return EXIT_USAGE;
    }
    if let Err(e) = fs::create_dir_all(dir) {
        let _ = writeln!(err, "error: cannot create {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    let corpus = gen_corpus(spec);
    let mut tallies: BTreeMap<(Policy, &str), Tally> = BTreeMap::new();
    let mut expectation_misses = 0u64;
    for (variant, scenario) in &corpus {
        let file = dir.join(format!("{}.json", scenario.name));
        if let Err(e) = fs::write(&file, serialize_scenario(scenario)) {
            let _ = writeln!(err, "error: cannot write {}: {e}", file.display());
            return EXIT_USAGE;
        }
        let label = match variant {
            Variant::Bad => "bad",
            Variant::Good => "good",
        };
        for policy in Policy::ALL {
            let r = run_scenario(scenario, policy);
            let t = tallies.entry((policy, label)).or_default();
            match r.status {
                Outcome::Completed => t.completed += 1,
                Outcome::Aborted => t.aborted += 1,
                Outcome::Faulted => t.faulted += 1,
            }
            t.corrupted += u64::from(!r.neighbor_intact);
            if let Some(e) = scenario.expect.as_ref().and_then(|m| m.get(&policy)) {
                expectation_misses += e.mismatches(&r).len() as u64;
            }
        }
    }
    let bad = corpus.iter().filter(|(v, _)| *v == Variant::Bad).count();
    let _ = writeln!(
        out,
        "corpus: {} scenarios ({bad} bad, {} good) in {}",
        corpus.len(),
        corpus.len() - bad,
        dir.display()
    );
    let _ = writeln!(
        out,
        "layout: dest, one-byte canary neighbor at the dest allocation bound, source; bad cases move capacity + magnitude bytes"
    );
    let _ = writeln!(out, "{:<8} {:<5} {:>9} {:>7} {:>7} {:>9}", "policy", "case", "completed", "aborted", "faulted", "corrupted");
    for ((policy, label), t) in &tallies {
        let _ = writeln!(
            out,
            "{:<8} {:<5} {:>9} {:>7} {:>7} {:>9}",
            policy.as_str(),
            label,
            t.completed,
            t.aborted,
            t.faulted,
            t.corrupted
        );
    }
    let _ = writeln!(out, "expectation mismatches: {expectation_misses}");
    let sma_bad = |p: fn(&Tally) -> u64| {
        tallies.iter().filter(|((policy, _), _)| *policy == Policy::Sma).map(|(_, t)| p(t)).sum::<u64>()
    };
    if sma_bad(|t| t.corrupted) == 0 && sma_bad(|t| t.faulted) == 0 {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

/// One fuzz case that disagreed with the oracle or escaped its destination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzFailure {
    pub seed: u64,
    pub digest_mismatch: bool,
    pub escapes: usize,
}

/// Run seeds `seed .. seed + count` under SMA, comparing each final memory
/// digest with [`oracle_run`] and checking per-call containment.
pub fn fuzz(count: u64, seed: u64, mutation: Option<Mutation>) -> Vec<FuzzFailure> {
    let opts = ExecOptions { mutation, check_containment: true };
    let mut failures: Vec<FuzzFailure> = (0..count)
        .into_par_iter()
        .filter_map(|i| {
            let seed = seed.wrapping_add(i);
            let scenario = random_scenario(seed);
            let ex = execute(&scenario, Policy::Sma, &opts);
            let digest_mismatch = ex.report.digest != oracle_run(&scenario);
            (digest_mismatch || !ex.escapes.is_empty()).then_some(FuzzFailure {
                seed,
                digest_mismatch,
                escapes: ex.escapes.len(),
            })
        })
        .collect();
    failures.sort_by_key(|f| f.seed);
    failures
}

/// Repro files written per run, at most.
const MAX_REPROS: usize = 10;

pub fn cmd_fuzz(
    count: u64,
    seed: u64,
    repro_dir: &Path,
    mutation: Option<Mutation>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    if count == 0 {
        let _ = writeln!(err, "error: --count must be at least 1");
        return EXIT_USAGE;
    }
    let failures = fuzz(count, seed, mutation);
    let mismatches = failures.iter().filter(|f| f.digest_mismatch).count();
    let escapes = failures.iter().filter(|f| f.escapes > 0).count();
    let _ = writeln!(
        out,
        "fuzz: {count} runs from seed {seed}, {mismatches} digest mismatches, {escapes} containment failures"
    );
    if failures.is_empty() {
        return EXIT_OK;
    }
    if let Err(e) = fs::create_dir_all(repro_dir) {
        let _ = writeln!(err, "error: cannot create {}: {e}", repro_dir.display());
        return EXIT_FAIL;
    }
    for f in failures.iter().take(MAX_REPROS) {
        let scenario: Scenario = random_scenario(f.seed);
        let path = repro_dir.join(format!("repro-{}.json", f.seed));
        match fs::write(&path, serialize_scenario(&scenario)) {
            Ok(()) => {
                let _ = writeln!(out, "seed {}: wrote {}", f.seed, path.display());
            }
            Err(e) => {
                let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            }
        }
    }
    EXIT_FAIL
}

pub fn cmd_bench(cfg: &BenchConfig, path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if cfg.reps < MIN_REPS {
        let _ = writeln!(err, "error: --reps must be at least {MIN_REPS}");
        return EXIT_USAGE;
    }
    if cfg.sizes.is_empty() || cfg.sizes.iter().any(|s| *s == 0 || *s > 1 << 24) {
        let _ = writeln!(err, "error: sizes must be in 1..=16777216");
        return EXIT_USAGE;
    }
    let rows = bench::run_bench(cfg);
    let written = match path {
        Some(p) => fs::File::create(p).and_then(|mut f| bench::write_csv(&rows, &mut f)),
        None => bench::write_csv(&rows, out),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write csv: {e}");
        return EXIT_USAGE;
    }
    // Keep stdout pure CSV when no file is given.
    let summary: &mut dyn Write = if path.is_some() { out } else { err };
    let _ = writeln!(summary, "{:<7} {:>7} {:>12} {:>12}", "region", "bytes", "sma/annexk", "sma/legacy");
    for (region, bytes, vs_annexk, vs_legacy) in bench::ratios(&rows) {
        let _ = writeln!(summary, "{:<7} {:>7} {:>12.3} {:>12.3}", region.as_str(), bytes, vs_annexk, vs_legacy);
    }
    EXIT_OK
}

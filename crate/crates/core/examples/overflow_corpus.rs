//! Generate the good/bad overflow corpus and tabulate outcomes.

use s3lab::s3lib::Policy;
use s3lab::scenario::{gen_corpus, run_scenario, CorpusSpec, Outcome, Variant};

fn main() {
    let corpus = gen_corpus(&CorpusSpec::default());
    println!("{:<34} {:<9} {:<9} {:<9}", "scenario", "legacy", "annexk", "sma");
    for (variant, s) in &corpus {
        if *variant == Variant::Good && !s.name.contains("-m1") {
            continue;
        }
        let cells: Vec<String> = Policy::ALL
            .iter()
            .map(|p| {
                let r = run_scenario(s, *p);
                let mark = if r.neighbor_intact { "" } else { "!" };
                let status = match r.status {
                    Outcome::Completed => "ok",
                    Outcome::Aborted => "abort",
                    Outcome::Faulted => "fault",
                };
                format!("{status}{mark}")
            })
            .collect();
        println!("{:<34} {:<9} {:<9} {:<9}", s.name, cells[0], cells[1], cells[2]);
    }
    println!("(! = neighbor canary corrupted)");
}

//! Load a scenario document and run it under every policy.
//!
//! Usage: cargo run --example run_scenario [path.json]

use s3lab::s3lib::Policy;
use s3lab::scenario::{parse_scenario, run_scenario};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/overflow.json").to_string());
    let text = std::fs::read_to_string(&path).expect("readable scenario file");
    let scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{path}: {e}");
            std::process::exit(2);
        }
    };
    for policy in Policy::ALL {
        println!("{}", run_scenario(&scenario, policy).to_json());
    }
}

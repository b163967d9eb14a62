//! Differential check of the SMA path against the byte-level oracle.

use s3lab::cli::fuzz;
use s3lab::s3lib::Mutation;

fn main() {
    let clean = fuzz(2000, 0, None);
    println!("clean build: {} failing seeds out of 2000", clean.len());

    let broken = fuzz(2000, 0, Some(Mutation::SkipFinalClampedWrite));
    println!("with the final saturated store dropped: {} failing seeds", broken.len());
    if let Some(f) = broken.first() {
        println!("first: seed {} (digest mismatch {}, escapes {})", f.seed, f.digest_mismatch, f.escapes);
    }
}

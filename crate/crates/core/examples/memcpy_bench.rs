//! Median memcpy cost per policy. Run with --release for meaningful numbers.

use s3lab::address_space::RegionKind;
use s3lab::cli::bench::{ratios, run_bench, BenchConfig};

fn main() {
    let cfg = BenchConfig { regions: vec![RegionKind::Heap], reps: 21, ..BenchConfig::default() };
    let rows = run_bench(&cfg);
    for r in &rows {
        println!("{:>6} bytes {:<7} {:>10.1} ns", r.bytes, r.policy, r.median_ns);
    }
    for (_, bytes, vs_annexk, vs_legacy) in ratios(&rows) {
        println!("{bytes:>6} bytes: sma/annexk {vs_annexk:.3}, sma/legacy {vs_legacy:.3}");
    }
}

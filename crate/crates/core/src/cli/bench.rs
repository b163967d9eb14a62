//! `memcpy` timing across policies.
//!
//! Policies are measured round-robin inside every repetition, with the
//! starting policy rotated per repetition, so drift in machine load hits all
//! three alike. Small copies run in batches to stay well above timer
//! resolution.

use std::hint::black_box;
use std::io::{self, Write};
use std::time::Instant;

use crate::address_space::{AddressSpace, RegionKind, SpaceConfig};
use crate::minfat::Allocator;
use crate::s3lib::{LibraryContext, Policy};

pub const DEFAULT_SIZES: [u64; 7] = [8, 32, 128, 512, 2048, 8192, 65536];
pub const MIN_REPS: usize = 11;
pub const CSV_HEADER: &str = "function,region,bytes,policy,median_ns,reps";

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<u64>,
    pub regions: Vec<RegionKind>,
    pub reps: usize,
    pub warmup: usize,
    /// Bytes copied per timed batch; sets the batch length for small sizes.
    pub batch_bytes: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            regions: RegionKind::ALL.to_vec(),
            reps: 31,
            warmup: 3,
            batch_bytes: 1 << 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub function: &'static str,
    pub region: RegionKind,
    pub bytes: u64,
    pub policy: Policy,
    pub median_ns: f64,
    pub reps: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median nanoseconds per in-bounds `memcpy_ss` call for every
/// (region, size, policy).
pub fn run_bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &region in &cfg.regions {
        for &bytes in &cfg.sizes {
            let mut space = AddressSpace::new(SpaceConfig::default()).expect("default layout");
            let mut heap = Allocator::new();
            let src = heap.alloc(&mut space, bytes, region).expect("bench buffer fits");
            let dest = heap.alloc(&mut space, bytes, region).expect("bench buffer fits");
            let pattern: Vec<u8> = (0..bytes).map(|i| i as u8).collect();
            space.raw_write(src.addr(), &pattern).expect("fresh allocation");
            let batch = (cfg.batch_bytes / bytes.max(1)).clamp(1, 4096);

            let mut ctxs: Vec<LibraryContext> = Policy::ALL.iter().map(|p| LibraryContext::new(*p)).collect();
            let mut samples = vec![Vec::with_capacity(cfg.reps); ctxs.len()];
            for rep in 0..cfg.warmup + cfg.reps {
                for k in 0..ctxs.len() {
                    let i = (k + rep) % ctxs.len();
                    let ctx = &mut ctxs[i];
                    let t = Instant::now();
                    for _ in 0..batch {
                        black_box(ctx.memcpy_ss(&mut space, black_box(dest), black_box(src), bytes).ok());
                    }
                    let ns = t.elapsed().as_nanos() as f64 / batch as f64;
                    if rep >= cfg.warmup {
                        samples[i].push(ns);
                    }
                }
            }
            for (i, s) in samples.into_iter().enumerate() {
                rows.push(BenchRow {
                    function: "memcpy",
                    region,
                    bytes,
                    policy: Policy::ALL[i],
                    median_ns: median(s),
                    reps: cfg.reps,
                });
            }
        }
    }
    rows
}

pub fn write_csv(rows: &[BenchRow], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.1},{}", r.function, r.region, r.bytes, r.policy, r.median_ns, r.reps)?;
    }
    Ok(())
}

/// `(region, bytes, sma / annexk, sma / legacy)` per measured point.
pub fn ratios(rows: &[BenchRow]) -> Vec<(RegionKind, u64, f64, f64)> {
    let find = |region, bytes, policy| {
        rows.iter()
            .find(|r| r.region == region && r.bytes == bytes && r.policy == policy)
            .map(|r| r.median_ns)
    };
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.policy == Policy::Sma) {
        if let (Some(a), Some(l)) = (find(r.region, r.bytes, Policy::AnnexK), find(r.region, r.bytes, Policy::Legacy)) {
            out.push((r.region, r.bytes, r.median_ns / a, r.median_ns / l));
        }
    }
    out
}

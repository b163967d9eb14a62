use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::address_space::{AddressSpace, RegionKind, SpaceConfig};
use crate::minfat::Allocator;
use crate::s3lib::Policy;

use super::{AllocationDecl, CallDecl, Expectation, Function, Init, Outcome, PtrArg, Scenario, SrcArg};

/// Requested destination sizes, cycled through by scenario index.
pub const DEST_SIZES: [u64; 3] = [4, 10, 20];

/// Functions the corpus generator can target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFunction {
    Memcpy,
    Strcpy,
    Strcat,
}

impl CorpusFunction {
    pub const ALL: [CorpusFunction; 3] = [CorpusFunction::Memcpy, CorpusFunction::Strcpy, CorpusFunction::Strcat];

    fn function(self) -> Function {
        match self {
            CorpusFunction::Memcpy => Function::Memcpy,
            CorpusFunction::Strcpy => Function::Strcpy,
            CorpusFunction::Strcat => Function::Strcat,
        }
    }
}

impl fmt::Display for CorpusFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.function().fmt(f)
    }
}

impl FromStr for CorpusFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorpusFunction::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| format!("unknown corpus function `{s}` (expected memcpy, strcpy or strcat)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Overflows the destination allocation.
    Bad,
    /// Same code shape, in bounds.
    Good,
}

#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub regions: Vec<RegionKind>,
    pub functions: Vec<CorpusFunction>,
    /// Bytes written past the end of the destination allocation.
    pub magnitudes: Vec<u64>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { regions: RegionKind::ALL.to_vec(), functions: CorpusFunction::ALL.to_vec(), magnitudes: vec![1, 8, 64] }
    }
}

/// Generate one bad and one good scenario per (region, function, magnitude).
///
/// Each scenario lays out the destination, then a one-byte neighbor holding
/// a canary directly after the destination allocation, then the source.
/// A bad case moves `capacity + magnitude` bytes, where capacity is the
/// destination's rounded allocation size: the overflow must clear the
/// padding to reach the neighbor. A good case moves exactly the requested
/// size. Bad cases come first, in the same order as the good ones.
pub fn gen_corpus(spec: &CorpusSpec) -> Vec<(Variant, Scenario)> {
    let mut bad = Vec::new();
    let mut good = Vec::new();
    let mut k = 0;
    for &region in &spec.regions {
        for &function in &spec.functions {
            for &magnitude in &spec.magnitudes {
                let size = DEST_SIZES[k % DEST_SIZES.len()];
                k += 1;
                bad.push((Variant::Bad, build(region, function, size, magnitude, Variant::Bad)));
                good.push((Variant::Good, build(region, function, size, magnitude, Variant::Good)));
            }
        }
    }
    bad.extend(good);
    bad
}

fn letters(len: u64) -> String {
    (0..len).map(|i| (b'A' + (i % 26) as u8) as char).collect()
}

fn build(region: RegionKind, function: CorpusFunction, size: u64, magnitude: u64, variant: Variant) -> Scenario {
    let capacity = (size + 1).next_power_of_two();
    // Bytes the call moves into the destination.
    let extent = match variant {
        Variant::Bad => capacity + magnitude,
        Variant::Good => size,
    };
    let (dest_init, src_size, src_init, call) = match function {
        CorpusFunction::Memcpy => {
            let mut c = CallDecl::new(Function::Memcpy);
            c.n = Some(extent);
            (Init::Zero(true), extent, Init::Ascii(letters(extent)), c)
        }
        CorpusFunction::Strcpy => (Init::Zero(true), extent, Init::Ascii(letters(extent - 1)), CallDecl::new(Function::Strcpy)),
        // Two bytes already in place, extent - 3 appended plus the terminator.
        CorpusFunction::Strcat => {
            (Init::Ascii("ab".into()), extent - 2, Init::Ascii(letters(extent - 3)), CallDecl::new(Function::Strcat))
        }
    };
    let call = CallDecl {
        dest: Some(PtrArg { id: "dest".into(), offset: 0 }),
        src: Some(SrcArg::Ptr(PtrArg { id: "src".into(), offset: 0 })),
        ..call
    };
    let tag = match variant {
        Variant::Bad => "bad",
        Variant::Good => "good",
    };
    let scenario = Scenario {
        name: format!("{tag}-{region}-{function}-s{size}-m{magnitude}"),
        allocations: vec![
            AllocationDecl { id: "dest".into(), region, size, init: dest_init, canary: None },
            AllocationDecl { id: "neighbor".into(), region, size: 1, init: Init::Zero(true), canary: Some(0xcc) },
            AllocationDecl { id: "src".into(), region, size: src_size, init: src_init, canary: None },
        ],
        calls: vec![call],
        expect: Some(expectations(variant)),
    };
    assert_adjacent(&scenario);
    scenario
}

fn expectations(variant: Variant) -> BTreeMap<Policy, Expectation> {
    let e = |status, min_violations, neighbor_intact| Expectation { status, min_violations, neighbor_intact };
    match variant {
        Variant::Bad => BTreeMap::from([
            (Policy::Legacy, e(None, None, Some(false))),
            (Policy::AnnexK, e(Some(Outcome::Aborted), Some(1), Some(true))),
            (Policy::Sma, e(Some(Outcome::Completed), Some(1), Some(true))),
        ]),
        Variant::Good => Policy::ALL
            .into_iter()
            .map(|p| (p, e(Some(Outcome::Completed), None, Some(true))))
            .collect(),
    }
}

/// The neighbor's canary must be the first byte past the destination
/// allocation, or the corpus does not test what it claims to.
fn assert_adjacent(scenario: &Scenario) {
    let mut space = AddressSpace::new(SpaceConfig::default()).expect("default layout");
    let mut heap = Allocator::new();
    let place = |a: &AllocationDecl, space: &mut AddressSpace, heap: &mut Allocator| {
        heap.alloc(space, a.size, a.region).expect("corpus allocation fits")
    };
    let dest = place(&scenario.allocations[0], &mut space, &mut heap);
    let neighbor = place(&scenario.allocations[1], &mut space, &mut heap);
    let upper = dest.addr() + dest.alloc_size().expect("tagged");
    assert_eq!(neighbor.addr(), upper, "{}: neighbor is not adjacent to the destination", scenario.name);
}

use proptest::prelude::*;

use s3lab::address_space::{AddressSpace, RegionKind, SpaceConfig};
use s3lab::minfat::{bounds_of, Allocator, TaggedAddress};
use s3lab::s3lib::{CallError, LibraryContext, Policy, Status};

struct World {
    space: AddressSpace,
    dest: TaggedAddress,
    src: TaggedAddress,
}

/// A destination of `dest_size` bytes followed by a neighbor, and a source
/// holding `text` plus a terminator.
fn world(dest_size: u64, text: &[u8]) -> World {
    let mut space = AddressSpace::new(SpaceConfig::default()).unwrap();
    let mut heap = Allocator::new();
    let dest = heap.alloc(&mut space, dest_size, RegionKind::Heap).unwrap();
    let neighbor = heap.alloc(&mut space, 8, RegionKind::Heap).unwrap();
    space.raw_fill(neighbor.addr(), 0xcc, 16).unwrap();
    let src = heap.alloc(&mut space, text.len() as u64 + 1, RegionKind::Global).unwrap();
    space.raw_write(src.addr(), text).unwrap();
    World { space, dest, src }
}

fn text() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(1u8..=255, 0..300)
}

fn inside(p: TaggedAddress, before: &AddressSpace, after: &AddressSpace) -> bool {
    let (lo, hi) = bounds_of(p).unwrap();
    before.snapshot().changed_addresses(&after.snapshot()).iter().all(|a| (lo..hi).contains(a))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sma_stores_stay_in_the_destination(size in 1u64..100, t in text(), n in 0u64..400, which in 0usize..5) {
        let mut w = world(size, &t);
        let before = w.space.clone();
        let mut ctx = LibraryContext::new(Policy::Sma);
        let r = match which {
            0 => ctx.strcpy_ss(&mut w.space, w.dest, w.src).map(drop),
            1 => ctx.strncpy_ss(&mut w.space, w.dest, w.src, n).map(drop),
            2 => ctx.memcpy_ss(&mut w.space, w.dest, w.src, n).map(drop),
            3 => ctx.memset_ss(&mut w.space, w.dest, 0x5a, n).map(drop),
            _ => ctx.gets_ss(&mut w.space, w.dest, &t).map(drop),
        };
        prop_assert!(r.is_ok());
        prop_assert!(inside(w.dest, &before, &w.space));
        prop_assert_eq!(ctx.last_status() == Status::Ok, ctx.violations().is_empty());
    }

    #[test]
    fn in_bounds_calls_match_legacy(
        (size, t) in (1u64..100).prop_flat_map(|s| (Just(s), prop::collection::vec(1u8..=255, 0..s as usize)))
    ) {
        let mut legacy = world(size, &t);
        let mut sma = world(size, &t);
        LibraryContext::new(Policy::Legacy).strcpy_ss(&mut legacy.space, legacy.dest, legacy.src).unwrap();
        let mut ctx = LibraryContext::new(Policy::Sma);
        ctx.strcpy_ss(&mut sma.space, sma.dest, sma.src).unwrap();
        prop_assert_eq!(legacy.space.digest(), sma.space.digest());
        prop_assert_eq!(ctx.last_status(), Status::Ok);
    }

    #[test]
    fn annexk_abort_only_clears_the_first_byte(size in 1u64..60, extra in 0usize..40) {
        let cap = (size + 1).next_power_of_two();
        let t = vec![b'q'; cap as usize + extra];
        let mut w = world(size, &t);
        w.space.raw_fill(w.dest.addr(), b'x', cap).unwrap();
        let before = w.space.clone();
        let mut ctx = LibraryContext::new(Policy::AnnexK);
        let r = ctx.strcpy_ss(&mut w.space, w.dest, w.src);
        prop_assert!(matches!(r, Err(CallError::Abort(_))));
        let changed = before.snapshot().changed_addresses(&w.space.snapshot());
        prop_assert_eq!(changed, vec![w.dest.addr()]);
        prop_assert_eq!(w.space.read_byte(w.dest.addr()).unwrap(), 0);
    }

    #[test]
    fn overflowing_strcpy_keeps_prefix_and_terminator(size in 1u64..100, extra in 0usize..50) {
        let cap = (size + 1).next_power_of_two() as usize;
        let t: Vec<u8> = (0..cap + extra).map(|i| b'a' + (i % 26) as u8).collect();
        let mut w = world(size, &t);
        LibraryContext::new(Policy::Sma).strcpy_ss(&mut w.space, w.dest, w.src).unwrap();
        let bytes = w.space.slice(w.dest.addr(), cap as u64).unwrap();
        prop_assert_eq!(&bytes[..cap - 1], &t[..cap - 1]);
        prop_assert_eq!(bytes[cap - 1], 0);
    }
}

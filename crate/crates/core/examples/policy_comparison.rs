//! The same overflowing strcpy under each policy.

use s3lab::address_space::{AddressSpace, RegionKind, SpaceConfig};
use s3lab::minfat::Allocator;
use s3lab::s3lib::{LibraryContext, Policy};

fn main() {
    for policy in Policy::ALL {
        let mut space = AddressSpace::new(SpaceConfig::default()).unwrap();
        let mut heap = Allocator::new();
        let dest = heap.alloc(&mut space, 10, RegionKind::Stack).unwrap();
        let neighbor = heap.alloc(&mut space, 8, RegionKind::Stack).unwrap();
        space.raw_write(neighbor.addr(), b"secret").unwrap();
        let src = heap.alloc(&mut space, 40, RegionKind::Global).unwrap();
        space.raw_write(src.addr(), b"AAAAAAAAAAAAAAAAAAAAAAA").unwrap();

        let mut ctx = LibraryContext::new(policy);
        let result = ctx.strcpy_ss(&mut space, dest, src);
        let dest_bytes = space.slice(dest.addr(), 16).unwrap();
        let neighbor_bytes = space.slice(neighbor.addr(), 6).unwrap();
        println!("{policy}:");
        println!("  result    {:?}", result.map(|_| "ok"));
        println!("  status    {}", ctx.last_status());
        println!("  dest      {:?}", String::from_utf8_lossy(dest_bytes));
        println!("  neighbor  {:?}", String::from_utf8_lossy(neighbor_bytes));
    }
}

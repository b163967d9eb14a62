//! Allocations are rounded up to a power of two strictly above the request.

use s3lab::address_space::{AddressSpace, RegionKind, SpaceConfig};
use s3lab::minfat::Allocator;

fn main() {
    let mut space = AddressSpace::new(SpaceConfig::default()).unwrap();
    let mut heap = Allocator::new();
    for (size, region) in [(4, RegionKind::Stack), (20, RegionKind::Heap), (32, RegionKind::Heap), (100, RegionKind::Global)] {
        let p = heap.alloc(&mut space, size, region).unwrap();
        let a = heap.find(p.addr()).unwrap();
        println!("{region:<6} request {size:>3}: {p} capacity {:>3} padding {:>2}", a.alloc_size, a.padding());
    }
}

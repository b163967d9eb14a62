//! Out-of-bounds accesses clamp to the allocation and are logged.

use s3lab::address_space::{AddressSpace, RegionKind, SpaceConfig};
use s3lab::minfat::Allocator;
use s3lab::sma::{sma_read, sma_write, ViolationLog};

fn main() {
    let mut space = AddressSpace::new(SpaceConfig::default()).unwrap();
    let mut heap = Allocator::new();
    let buf = heap.alloc(&mut space, 6, RegionKind::Heap).unwrap();
    let mut log = ViolationLog::default();

    for (i, b) in b"overflowing".iter().enumerate() {
        sma_write(&mut space, buf, i as i64, *b, &mut log, "demo").unwrap();
    }
    sma_write(&mut space, buf, -3, b'<', &mut log, "demo").unwrap();
    let far = sma_read(&space, buf, 1000, &mut log, "demo").unwrap();

    println!("buffer: {:?}", String::from_utf8_lossy(space.slice(buf.addr(), 8).unwrap()));
    println!("read at +1000 gave {:?}", far as char);
    for r in log.records() {
        let clamped = r.clamped_addr.map_or("-".to_string(), |a| format!("{a:#x}"));
        println!("{:?} at {:#x} -> {clamped}", r.kind, r.attempted_addr);
    }
}

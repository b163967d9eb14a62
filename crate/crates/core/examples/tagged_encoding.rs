//! Encode, decode and do arithmetic on tagged addresses.

use s3lab::minfat::{base_of, bounds_of, decode, encode, ptr_add, round_alloc_size};

fn main() {
    let (size, tag) = round_alloc_size(20).unwrap();
    println!("20 bytes -> allocation of {size} (tag {tag})");

    let p = encode(0x4000_0800, 11).unwrap();
    let d = decode(p);
    println!("{p}: tag {} size {:?} addr {:#x}", d.tag, d.alloc_size, d.addr);

    // An interior pointer still knows its allocation.
    let q = ptr_add(p, 1500);
    let (lo, hi) = bounds_of(q).unwrap();
    println!("{q}: base {:#x}, bounds [{lo:#x}, {hi:#x})", base_of(q).unwrap());
}

//! MinFat tagged addresses and the padding/aligning allocator.
//!
//! A tagged address is a 64-bit word whose upper six bits hold `B`, the
//! binary logarithm of the allocation size, and whose lower 58 bits hold the
//! virtual address. Because every allocation is a power of two in size and
//! aligned to that size, the base of the enclosing object can be recovered
//! from any interior address by rounding down.
//!
//! ```text
//!  63      58 57                                                   0
//! +----------+------------------------------------------------------+
//! |   TAG    |                  virtual address                     |
//! +----------+------------------------------------------------------+
//! ```
//!
//! Tag 0 is reserved for untagged (foreign) addresses that carry no bounds.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::address_space::{AddressSpace, RegionKind, SpaceError, ADDR_BITS, ADDR_LIMIT};

/// Mask selecting the 58 address bits of a tagged word.
pub const MINFAT_MATCH: u64 = 0x03FF_FFFF_FFFF_FFFF;

pub const TAG_SHIFT: u32 = ADDR_BITS;

/// Smallest tag handed out by the allocator (2-byte allocations).
pub const MIN_TAG: u32 = 1;

/// Largest tag that describes an object fitting in 58-bit memory.
pub const MAX_TAG: u32 = 57;

/// Largest request `round_alloc_size` accepts (exclusive).
pub const MAX_REQUEST: u64 = 1 << 57;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MinFatError {
    #[error("requested size {0} is outside [1, 2^57)")]
    Size(u64),
    #[error("cannot encode address {addr:#x} with tag {tag}")]
    Encode { addr: u64, tag: u32 },
    #[error("address {0} carries no size tag")]
    NoMetadata(TaggedAddress),
    #[error("{0} is not the base of a live allocation")]
    Free(TaggedAddress),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// A 64-bit word carrying a 6-bit size tag above a 58-bit address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TaggedAddress(u64);

impl TaggedAddress {
    pub const NULL: TaggedAddress = TaggedAddress(0);

    pub const fn from_word(word: u64) -> Self {
        TaggedAddress(word)
    }

    /// An untagged address (tag 0), as passed in by foreign code.
    pub const fn untagged(addr: u64) -> Self {
        TaggedAddress(addr & MINFAT_MATCH)
    }

    pub const fn word(self) -> u64 {
        self.0
    }

    pub const fn tag(self) -> u32 {
        (self.0 >> TAG_SHIFT) as u32
    }

    /// The address with the tag masked off, as dereferenced by the CPU.
    pub const fn addr(self) -> u64 {
        self.0 & MINFAT_MATCH
    }

    pub const fn is_tagged(self) -> bool {
        self.tag() != 0
    }

    pub const fn is_null(self) -> bool {
        self.addr() == 0
    }

    /// Allocation size described by the tag, `None` for untagged words.
    pub fn alloc_size(self) -> Option<u64> {
        match self.tag() {
            0 => None,
            t if t <= MAX_TAG => Some(1u64 << t),
            // Tags 58..=63 do not describe anything that fits in 58-bit memory.
            _ => Some(ADDR_LIMIT),
        }
    }
}

impl fmt::Debug for TaggedAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaggedAddress(tag={}, addr={:#x})", self.tag(), self.addr())
    }
}

impl fmt::Display for TaggedAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

/// Result of [`decode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub tag: u32,
    pub alloc_size: Option<u64>,
    pub addr: u64,
}

/// Round a request up to the smallest power of two strictly greater than it.
///
/// At least one padding byte is always added, so 32 becomes 64.
pub fn round_alloc_size(requested: u64) -> Result<(u64, u32), MinFatError> {
    if requested == 0 || requested >= MAX_REQUEST {
        return Err(MinFatError::Size(requested));
    }
    let alloc_size = (requested + 1).next_power_of_two();
    Ok((alloc_size, alloc_size.trailing_zeros()))
}

pub fn encode(addr: u64, tag: u32) -> Result<TaggedAddress, MinFatError> {
    if !(MIN_TAG..=MAX_TAG).contains(&tag) || addr >= ADDR_LIMIT {
        return Err(MinFatError::Encode { addr, tag });
    }
    Ok(TaggedAddress((u64::from(tag) << TAG_SHIFT) | addr))
}

pub fn decode(p: TaggedAddress) -> Decoded {
    Decoded { tag: p.tag(), alloc_size: p.alloc_size(), addr: p.addr() }
}

/// `(p / allocSize(p)) * allocSize(p)` on the masked address.
pub fn base_of(p: TaggedAddress) -> Result<u64, MinFatError> {
    let size = p.alloc_size().ok_or(MinFatError::NoMetadata(p))?;
    Ok((p.addr() / size) * size)
}

/// Lower (inclusive) and upper (exclusive) bounds of the object `p` points into.
pub fn bounds_of(p: TaggedAddress) -> Result<(u64, u64), MinFatError> {
    let lower = base_of(p)?;
    let size = p.alloc_size().ok_or(MinFatError::NoMetadata(p))?;
    Ok((lower, lower + size))
}

/// Pointer arithmetic: the result inherits the tag; the address wraps in 58 bits.
pub fn ptr_add(p: TaggedAddress, delta: i64) -> TaggedAddress {
    let addr = p.addr().wrapping_add(delta as u64) & MINFAT_MATCH;
    TaggedAddress((p.0 & !MINFAT_MATCH) | addr)
}

/// Compare masked addresses; tags are ignored.
pub fn ptr_compare(p: TaggedAddress, q: TaggedAddress) -> Ordering {
    p.addr().cmp(&q.addr())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub base: u64,
    pub alloc_size: u64,
    pub object_size: u64,
    pub kind: RegionKind,
    pub live: bool,
}

impl Allocation {
    pub fn tag(&self) -> u32 {
        self.alloc_size.trailing_zeros()
    }

    pub fn tagged(&self) -> TaggedAddress {
        TaggedAddress((u64::from(self.tag()) << TAG_SHIFT) | self.base)
    }

    pub fn upper(&self) -> u64 {
        self.base + self.alloc_size
    }

    pub fn padding(&self) -> u64 {
        self.alloc_size - self.object_size
    }
}

/// The MinFat allocator: power-of-two sizes, size-aligned bases, quarantined frees.
#[derive(Clone, Debug, Default)]
pub struct Allocator {
    allocations: BTreeMap<u64, Allocation>,
}

impl Allocator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocate `requested` bytes in the `kind` arena and return the tagged base.
    ///
    /// The whole allocation, padding included, is mapped zero-filled.
    pub fn alloc(
        &mut self,
        space: &mut AddressSpace,
        requested: u64,
        kind: RegionKind,
    ) -> Result<TaggedAddress, MinFatError> {
        let (alloc_size, tag) = round_alloc_size(requested)?;
        let base = space.reserve(kind, alloc_size, alloc_size)?;
        space.map_region(base, alloc_size, kind)?;
        self.allocations.insert(
            base,
            Allocation { base, alloc_size, object_size: requested, kind, live: true },
        );
        encode(base, tag)
    }

    /// Mark the allocation dead. Its memory stays mapped and is never reused.
    pub fn free(&mut self, p: TaggedAddress) -> Result<(), MinFatError> {
        let base = base_of(p).map_err(|_| MinFatError::Free(p))?;
        if base != p.addr() {
            return Err(MinFatError::Free(p));
        }
        match self.allocations.get_mut(&base) {
            Some(a) if a.live && a.tag() == p.tag() => {
                a.live = false;
                Ok(())
            }
            _ => Err(MinFatError::Free(p)),
        }
    }

    /// The allocation whose range contains `addr`, live or not.
    pub fn find(&self, addr: u64) -> Option<&Allocation> {
        self.allocations
            .range(..=addr)
            .next_back()
            .map(|(_, a)| a)
            .filter(|a| addr < a.upper())
    }

    pub fn allocations(&self) -> impl Iterator<Item = &Allocation> {
        self.allocations.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address_space::SpaceConfig;

    fn space() -> AddressSpace {
        AddressSpace::new(SpaceConfig::default()).unwrap()
    }

    #[test]
    fn rounding_adds_padding() {
        assert_eq!(round_alloc_size(20).unwrap(), (32, 5));
        assert_eq!(round_alloc_size(32).unwrap(), (64, 6));
        assert_eq!(round_alloc_size(1).unwrap(), (2, 1));
        assert_eq!(round_alloc_size(MAX_REQUEST - 1).unwrap(), (MAX_REQUEST, 57));
        assert_eq!(round_alloc_size(0), Err(MinFatError::Size(0)));
        assert_eq!(round_alloc_size(MAX_REQUEST), Err(MinFatError::Size(MAX_REQUEST)));
    }

    #[test]
    fn rounding_is_strict_for_all_small_requests() {
        for r in 1..=(1u64 << 20) {
            let (size, tag) = round_alloc_size(r).unwrap();
            assert!(size / 2 <= r && r < size, "request {r} -> {size}");
            assert_eq!(size, 1 << tag);
        }
    }

    #[test]
    fn encode_places_tag_in_upper_six_bits() {
        let p = encode(0x1000, 11).unwrap();
        assert_eq!(p.word() >> 58, 0b001011);
        assert_eq!(p.word() & MINFAT_MATCH, 0x1000);
        assert_eq!(encode(0, 1).unwrap().word(), 1 << 58);
        assert!(encode(ADDR_LIMIT, 5).is_err());
        assert!(encode(0x1000, 0).is_err());
        assert!(encode(0x1000, 58).is_err());
    }

    #[test]
    fn decode_recovers_size_from_tag() {
        let d = decode(TaggedAddress::from_word((0b001011u64 << 58) | 0x40));
        assert_eq!(d.alloc_size, Some(2048));
        assert_eq!(decode(encode(0x1234, 8).unwrap()), Decoded { tag: 8, alloc_size: Some(256), addr: 0x1234 });
        assert_eq!(
            decode(TaggedAddress::from_word(0xabcd)),
            Decoded { tag: 0, alloc_size: None, addr: 0xabcd }
        );
    }

    #[test]
    fn base_and_bounds() {
        assert_eq!(base_of(encode(0x1234, 8).unwrap()).unwrap(), 0x1200);
        assert_eq!(base_of(encode(0x1200, 8).unwrap()).unwrap(), 0x1200);
        assert_eq!(bounds_of(encode(0x1000_0020, 5).unwrap()).unwrap(), (0x1000_0020, 0x1000_0040));
        assert_eq!(bounds_of(encode(0, 1).unwrap()).unwrap(), (0, 2));
        let untagged = TaggedAddress::untagged(0x1000);
        assert_eq!(bounds_of(untagged), Err(MinFatError::NoMetadata(untagged)));
        assert_eq!(base_of(untagged), Err(MinFatError::NoMetadata(untagged)));
    }

    #[test]
    fn base_is_stable_across_interior_offsets() {
        let base = 0x40_0000;
        let p = encode(base, 11).unwrap();
        for k in 0..2048 {
            assert_eq!(base_of(ptr_add(p, k)).unwrap(), base);
        }
        assert_ne!(base_of(ptr_add(p, 2048)).unwrap(), base);
    }

    #[test]
    fn pointer_arithmetic_keeps_tag() {
        let p = encode(0x1000, 11).unwrap();
        assert_eq!(ptr_add(p, 16), encode(0x1010, 11).unwrap());
        assert_eq!(ptr_add(p, 0), p);
        let far = ptr_add(p, 1 << 20);
        assert_eq!(far.tag(), 11);
        assert_eq!(far.addr(), 0x1000 + (1 << 20));
        let wrapped = ptr_add(encode(0, 3).unwrap(), -1);
        assert_eq!((wrapped.tag(), wrapped.addr()), (3, MINFAT_MATCH));
    }

    #[test]
    fn comparison_ignores_tags() {
        let a = encode(0x100, 3).unwrap();
        assert_eq!(ptr_compare(a, encode(0x100, 9).unwrap()), Ordering::Equal);
        assert_eq!(ptr_compare(a, encode(0x101, 3).unwrap()), Ordering::Less);
        assert_eq!(
            ptr_compare(TaggedAddress::untagged(0x200), encode(0x200, 4).unwrap()),
            Ordering::Equal
        );
    }

    #[test]
    fn alloc_pads_with_zeros() {
        let mut s = space();
        let mut heap = Allocator::new();
        let p = heap.alloc(&mut s, 20, RegionKind::Heap).unwrap();
        assert_eq!(p.alloc_size(), Some(32));
        let a = heap.find(p.addr()).unwrap();
        assert_eq!(a.padding(), 12);
        assert!(s.slice(p.addr() + 20, 12).unwrap().iter().all(|b| *b == 0));
    }

    #[test]
    fn alloc_aligns_to_allocation_size() {
        let mut s = space();
        let mut heap = Allocator::new();
        heap.alloc(&mut s, 3, RegionKind::Heap).unwrap();
        let p = heap.alloc(&mut s, 2048, RegionKind::Heap).unwrap();
        assert_eq!(p.tag(), 12);
        assert_eq!(p.addr() % 4096, 0);
        assert_eq!(heap.alloc(&mut s, 0, RegionKind::Heap), Err(MinFatError::Size(0)));
    }

    #[test]
    fn alloc_exhaustion_is_reported() {
        let mut s = space();
        let mut heap = Allocator::new();
        // Heap arena spans [0x1000_0000, 0x2000_0000).
        let err = heap.alloc(&mut s, 0x1000_0000, RegionKind::Heap).unwrap_err();
        assert!(matches!(err, MinFatError::Space(SpaceError::OutOfMemory { .. })));
    }

    #[test]
    fn free_checks_liveness_and_base() {
        let mut s = space();
        let mut heap = Allocator::new();
        let p = heap.alloc(&mut s, 10, RegionKind::Heap).unwrap();
        assert_eq!(heap.free(ptr_add(p, 1)), Err(MinFatError::Free(ptr_add(p, 1))));
        heap.free(p).unwrap();
        assert_eq!(heap.free(p), Err(MinFatError::Free(p)));
        assert!(s.is_mapped(p.addr()));
        assert!(!heap.find(p.addr()).unwrap().live);
        assert!(heap.free(TaggedAddress::untagged(0x1234)).is_err());
    }
}

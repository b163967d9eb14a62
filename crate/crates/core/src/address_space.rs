//! Simulated 64-bit virtual address space backed by a byte arena.
//!
//! Addresses are 58-bit (the upper six bits of a word belong to the MinFat
//! tag). Regions are placed by per-kind bump cursors so that a given sequence
//! of allocations always lands at the same addresses, which is what makes
//! neighbor corruption reproducible.
//!
//! Raw accesses are unchecked: they succeed wherever memory is mapped and
//! report an [`UnmappedFault`] at the first byte that is not. A faulting write
//! commits every byte before the faulting address, like a real store loop that
//! crashes partway through.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of a virtual address below the tag bits.
pub const ADDR_BITS: u32 = 58;

/// First address that no longer fits in 58 bits.
pub const ADDR_LIMIT: u64 = 1 << ADDR_BITS;

/// Required alignment of the configured placement bases.
pub const PLACEMENT_ALIGN: u64 = 1 << 16;

/// Memory area an object comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Stack,
    Heap,
    Global,
}

impl RegionKind {
    pub const ALL: [RegionKind; 3] = [RegionKind::Stack, RegionKind::Heap, RegionKind::Global];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Stack => "stack",
            RegionKind::Heap => "heap",
            RegionKind::Global => "global",
        }
    }

    fn index(self) -> usize {
        match self {
            RegionKind::Stack => 0,
            RegionKind::Heap => 1,
            RegionKind::Global => 2,
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for RegionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stack" => Ok(RegionKind::Stack),
            "heap" => Ok(RegionKind::Heap),
            "global" => Ok(RegionKind::Global),
            other => Err(format!("unknown region `{other}` (expected stack, heap or global)")),
        }
    }
}

/// Placement bases for each region kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceConfig {
    pub heap_base: u64,
    pub stack_base: u64,
    pub global_base: u64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            heap_base: 0x1000_0000,
            stack_base: 0x2000_0000,
            global_base: 0x3000_0000,
        }
    }
}

impl SpaceConfig {
    pub fn base(&self, kind: RegionKind) -> u64 {
        match kind {
            RegionKind::Stack => self.stack_base,
            RegionKind::Heap => self.heap_base,
            RegionKind::Global => self.global_base,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("invalid placement config: {0}")]
    Config(String),
    #[error("cannot map [{start:#x}, +{length}): {reason}")]
    Map {
        start: u64,
        length: u64,
        reason: &'static str,
    },
    #[error("{kind} arena exhausted while placing {requested} bytes")]
    OutOfMemory { kind: RegionKind, requested: u64 },
}

/// An access touched an address with no backing region.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("unmapped access at {addr:#x}")]
pub struct UnmappedFault {
    pub addr: u64,
}

/// Identifier of a mapped region (its start address).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappedRegion {
    start: u64,
    kind: RegionKind,
    bytes: Vec<u8>,
}

impl MappedRegion {
    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.start + self.bytes.len() as u64
    }

    pub fn len(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn contains(&self, addr: u64) -> bool {
        addr >= self.start && addr < self.end()
    }
}

/// Copy of every mapped byte, used for before/after diffs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    regions: Vec<(u64, Vec<u8>)>,
}

impl Snapshot {
    /// Addresses whose byte differs between `self` and `later`, ascending.
    ///
    /// Regions mapped only in `later` are compared against zero, which is
    /// what a freshly mapped region holds.
    pub fn changed_addresses(&self, later: &Snapshot) -> Vec<u64> {
        let before: BTreeMap<u64, &[u8]> =
            self.regions.iter().map(|(s, b)| (*s, b.as_slice())).collect();
        let mut changed = Vec::new();
        for (start, after) in &later.regions {
            match before.get(start) {
                Some(prev) => {
                    for (i, (a, b)) in prev.iter().zip(after.iter()).enumerate() {
                        if a != b {
                            changed.push(start + i as u64);
                        }
                    }
                }
                None => {
                    for (i, b) in after.iter().enumerate() {
                        if *b != 0 {
                            changed.push(start + i as u64);
                        }
                    }
                }
            }
        }
        changed
    }
}

/// 64-bit FNV-1a over a byte stream.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Fnv1a {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub fn new() -> Self {
        Fnv1a(Self::OFFSET)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug)]
pub struct AddressSpace {
    config: SpaceConfig,
    regions: BTreeMap<u64, MappedRegion>,
    cursors: [u64; 3],
    limits: [u64; 3],
}

impl AddressSpace {
    pub fn new(config: SpaceConfig) -> Result<Self, SpaceError> {
        let bases = [config.stack_base, config.heap_base, config.global_base];
        for (kind, base) in RegionKind::ALL.iter().zip(bases) {
            if base == 0 {
                return Err(SpaceError::Config(format!(
                    "{kind} base is 0; the null page must stay unmapped"
                )));
            }
            if base >= ADDR_LIMIT {
                return Err(SpaceError::Config(format!(
                    "{kind} base {base:#x} does not fit in {ADDR_BITS} bits"
                )));
            }
            if base % PLACEMENT_ALIGN != 0 {
                return Err(SpaceError::Config(format!(
                    "{kind} base {base:#x} is not {PLACEMENT_ALIGN:#x}-aligned"
                )));
            }
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                if bases[i] == bases[j] {
                    return Err(SpaceError::Config(format!(
                        "{} and {} share base {:#x}",
                        RegionKind::ALL[i],
                        RegionKind::ALL[j],
                        bases[i]
                    )));
                }
            }
        }
        // Each arena runs up to the next configured base above it.
        let mut limits = [ADDR_LIMIT; 3];
        for i in 0..3 {
            for j in 0..3 {
                if bases[j] > bases[i] && bases[j] < limits[i] {
                    limits[i] = bases[j];
                }
            }
        }
        Ok(AddressSpace {
            config,
            regions: BTreeMap::new(),
            cursors: bases,
            limits,
        })
    }

    pub fn config(&self) -> &SpaceConfig {
        &self.config
    }

    /// Next free address of the `kind` arena.
    pub fn cursor(&self, kind: RegionKind) -> u64 {
        self.cursors[kind.index()]
    }

    /// Bump-reserve `size` bytes aligned to `align` (a power of two) in the
    /// `kind` arena. The range is not mapped.
    pub fn reserve(&mut self, kind: RegionKind, size: u64, align: u64) -> Result<u64, SpaceError> {
        debug_assert!(align.is_power_of_two());
        let idx = kind.index();
        let oom = SpaceError::OutOfMemory { kind, requested: size };
        let start = self.cursors[idx]
            .checked_add(align - 1)
            .map(|v| v & !(align - 1))
            .ok_or_else(|| oom.clone())?;
        let end = start.checked_add(size).ok_or_else(|| oom.clone())?;
        if end > self.limits[idx] {
            return Err(oom);
        }
        self.cursors[idx] = end;
        Ok(start)
    }

    pub fn map_region(&mut self, start: u64, length: u64, kind: RegionKind) -> Result<RegionId, SpaceError> {
        let fail = |reason| SpaceError::Map { start, length, reason };
        if length == 0 {
            return Err(fail("zero length"));
        }
        let end = match start.checked_add(length) {
            Some(end) if end <= ADDR_LIMIT => end,
            _ => return Err(fail("range exceeds the 58-bit address space")),
        };
        if let Some((_, prev)) = self.regions.range(..=start).next_back() {
            if prev.end() > start {
                return Err(fail("overlaps a mapped region"));
            }
        }
        if let Some((&next, _)) = self.regions.range(start..).next() {
            if next < end {
                return Err(fail("overlaps a mapped region"));
            }
        }
        let bytes = vec![0u8; usize::try_from(length).map_err(|_| fail("length too large"))?];
        self.regions.insert(start, MappedRegion { start, kind, bytes });
        Ok(RegionId(start))
    }

    pub fn region(&self, id: RegionId) -> Option<&MappedRegion> {
        self.regions.get(&id.0)
    }

    /// Mapped regions in ascending address order.
    pub fn regions(&self) -> impl Iterator<Item = &MappedRegion> {
        self.regions.values()
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.region_containing(addr).is_some()
    }

    pub fn region_containing(&self, addr: u64) -> Option<&MappedRegion> {
        self.regions
            .range(..=addr)
            .next_back()
            .map(|(_, r)| r)
            .filter(|r| r.contains(addr))
    }

    fn region_containing_mut(&mut self, addr: u64) -> Option<&mut MappedRegion> {
        self.regions
            .range_mut(..=addr)
            .next_back()
            .map(|(_, r)| r)
            .filter(|r| r.contains(addr))
    }

    /// Number of bytes mapped without a gap starting at `addr`.
    pub fn contiguous_len(&self, addr: u64) -> u64 {
        let mut cur = addr;
        while let Some(region) = self.region_containing(cur) {
            cur = region.end();
        }
        cur - addr
    }

    /// Borrow `len` bytes at `addr` if they lie inside a single region.
    pub fn slice(&self, addr: u64, len: u64) -> Option<&[u8]> {
        let region = self.region_containing(addr)?;
        let off = (addr - region.start) as usize;
        let end = off.checked_add(usize::try_from(len).ok()?)?;
        region.bytes.get(off..end)
    }

    pub fn slice_mut(&mut self, addr: u64, len: u64) -> Option<&mut [u8]> {
        let region = self.region_containing_mut(addr)?;
        let off = (addr - region.start) as usize;
        let end = off.checked_add(usize::try_from(len).ok()?)?;
        region.bytes.get_mut(off..end)
    }

    pub fn read_byte(&self, addr: u64) -> Result<u8, UnmappedFault> {
        self.region_containing(addr)
            .map(|r| r.bytes[(addr - r.start) as usize])
            .ok_or(UnmappedFault { addr })
    }

    pub fn write_byte(&mut self, addr: u64, value: u8) -> Result<(), UnmappedFault> {
        let region = self.region_containing_mut(addr).ok_or(UnmappedFault { addr })?;
        let off = (addr - region.start) as usize;
        region.bytes[off] = value;
        Ok(())
    }

    /// Unchecked read of `len` bytes.
    pub fn raw_read(&self, addr: u64, len: u64) -> Result<Vec<u8>, UnmappedFault> {
        let mut out = Vec::with_capacity(len.min(1 << 20) as usize);
        let mut cur = addr;
        let end = addr.saturating_add(len);
        while cur < end {
            let region = self.region_containing(cur).ok_or(UnmappedFault { addr: cur })?;
            let off = (cur - region.start) as usize;
            let take = (region.end().min(end) - cur) as usize;
            out.extend_from_slice(&region.bytes[off..off + take]);
            cur += take as u64;
        }
        if (end - addr) < len {
            return Err(UnmappedFault { addr: end });
        }
        Ok(out)
    }

    /// Unchecked write. On fault, the bytes before the faulting address are
    /// already stored.
    pub fn raw_write(&mut self, addr: u64, bytes: &[u8]) -> Result<(), UnmappedFault> {
        let mut done = 0usize;
        while done < bytes.len() {
            let cur = addr
                .checked_add(done as u64)
                .ok_or(UnmappedFault { addr: u64::MAX })?;
            let region = self.region_containing_mut(cur).ok_or(UnmappedFault { addr: cur })?;
            let off = (cur - region.start) as usize;
            let take = (region.bytes.len() - off).min(bytes.len() - done);
            region.bytes[off..off + take].copy_from_slice(&bytes[done..done + take]);
            done += take;
        }
        Ok(())
    }

    /// Unchecked fill of `len` bytes with `value`, committing a prefix on fault.
    pub fn raw_fill(&mut self, addr: u64, value: u8, len: u64) -> Result<(), UnmappedFault> {
        let mut cur = addr;
        let end = addr.saturating_add(len);
        while cur < end {
            let region = self.region_containing_mut(cur).ok_or(UnmappedFault { addr: cur })?;
            let off = (cur - region.start) as usize;
            let take = (region.end().min(end) - cur) as usize;
            region.bytes[off..off + take].fill(value);
            cur += take as u64;
        }
        if end - addr < len {
            return Err(UnmappedFault { addr: end });
        }
        Ok(())
    }

    /// Unchecked forward copy of `len` bytes, chunked at region boundaries.
    ///
    /// Each chunk is moved as a unit, so an overlapping copy inside a single
    /// region behaves like `memmove` for that chunk. A fault on either side
    /// stops the copy with all earlier chunks committed.
    pub fn raw_copy(&mut self, dest: u64, src: u64, len: u64) -> Result<(), UnmappedFault> {
        let mut done = 0u64;
        while done < len {
            let s = src.checked_add(done).ok_or(UnmappedFault { addr: u64::MAX })?;
            let d = dest.checked_add(done).ok_or(UnmappedFault { addr: u64::MAX })?;
            let src_region = self.region_containing(s).ok_or(UnmappedFault { addr: s })?;
            let src_room = src_region.end() - s;
            let dst_region = self.region_containing(d).ok_or(UnmappedFault { addr: d })?;
            let dst_room = dst_region.end() - d;
            let take = (len - done).min(src_room).min(dst_room) as usize;
            let src_start = src_region.start;
            let dst_start = dst_region.start;
            let s_off = (s - src_start) as usize;
            let d_off = (d - dst_start) as usize;
            if src_start == dst_start {
                let region = self.regions.get_mut(&src_start).expect("region looked up above");
                region.bytes.copy_within(s_off..s_off + take, d_off);
            } else {
                // Two distinct regions: move the source chunk out of the map
                // borrow before writing the destination.
                let mut src_bytes = std::mem::take(
                    &mut self.regions.get_mut(&src_start).expect("region looked up above").bytes,
                );
                let region = self.regions.get_mut(&dst_start).expect("region looked up above");
                region.bytes[d_off..d_off + take].copy_from_slice(&src_bytes[s_off..s_off + take]);
                std::mem::swap(
                    &mut self.regions.get_mut(&src_start).expect("region looked up above").bytes,
                    &mut src_bytes,
                );
            }
            done += take as u64;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            regions: self.regions.values().map(|r| (r.start, r.bytes.clone())).collect(),
        }
    }

    /// FNV-1a over every mapped byte in ascending address order.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        for region in self.regions.values() {
            h.update(&region.bytes);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> AddressSpace {
        AddressSpace::new(SpaceConfig::default()).unwrap()
    }

    #[test]
    fn default_config_builds_empty_space() {
        let s = space();
        assert_eq!(s.regions().count(), 0);
        assert_eq!(s.cursor(RegionKind::Heap), 0x1000_0000);
        assert_eq!(s.cursor(RegionKind::Stack), 0x2000_0000);
        assert_eq!(s.cursor(RegionKind::Global), 0x3000_0000);
    }

    #[test]
    fn config_rejects_equal_bases() {
        let cfg = SpaceConfig { heap_base: 0x1_0000, stack_base: 0x1_0000, global_base: 0x3_0000 };
        assert!(matches!(AddressSpace::new(cfg), Err(SpaceError::Config(_))));
    }

    #[test]
    fn config_rejects_base_outside_address_width() {
        let cfg = SpaceConfig { heap_base: ADDR_LIMIT, ..SpaceConfig::default() };
        assert!(matches!(AddressSpace::new(cfg), Err(SpaceError::Config(_))));
    }

    #[test]
    fn config_rejects_misaligned_base() {
        let cfg = SpaceConfig { heap_base: 0x1000_0010, ..SpaceConfig::default() };
        assert!(matches!(AddressSpace::new(cfg), Err(SpaceError::Config(_))));
    }

    #[test]
    fn adjacent_regions_are_allowed() {
        let mut s = space();
        let a = s.map_region(0x1000, 64, RegionKind::Heap).unwrap();
        let b = s.map_region(0x1040, 64, RegionKind::Heap).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn overlapping_and_empty_maps_fail() {
        let mut s = space();
        s.map_region(0x1000, 64, RegionKind::Heap).unwrap();
        assert!(matches!(s.map_region(0x1020, 8, RegionKind::Heap), Err(SpaceError::Map { .. })));
        assert!(matches!(s.map_region(0x0ff8, 16, RegionKind::Heap), Err(SpaceError::Map { .. })));
        assert!(matches!(s.map_region(0x2000, 0, RegionKind::Heap), Err(SpaceError::Map { .. })));
        assert!(matches!(
            s.map_region(ADDR_LIMIT - 4, 8, RegionKind::Heap),
            Err(SpaceError::Map { .. })
        ));
    }

    #[test]
    fn write_then_read_in_bounds() {
        let mut s = space();
        s.map_region(0x1000, 64, RegionKind::Heap).unwrap();
        s.raw_write(0x1004, &[1, 2, 3, 4]).unwrap();
        assert_eq!(s.raw_read(0x1004, 4).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn faulting_write_commits_prefix() {
        let mut s = space();
        s.map_region(0x1000, 64, RegionKind::Heap).unwrap();
        let err = s.raw_write(0x103c, &[9; 8]).unwrap_err();
        assert_eq!(err, UnmappedFault { addr: 0x1040 });
        // Byte-stepping reference: every byte before the fault landed.
        for addr in 0x103c..0x1040 {
            assert_eq!(s.read_byte(addr).unwrap(), 9);
        }
    }

    #[test]
    fn read_unmapped_faults() {
        let s = space();
        assert_eq!(s.raw_read(0x5000, 1).unwrap_err(), UnmappedFault { addr: 0x5000 });
        assert_eq!(s.read_byte(0).unwrap_err(), UnmappedFault { addr: 0 });
    }

    #[test]
    fn writes_span_adjacent_regions() {
        let mut s = space();
        s.map_region(0x1000, 8, RegionKind::Heap).unwrap();
        s.map_region(0x1008, 8, RegionKind::Heap).unwrap();
        s.raw_write(0x1004, &[7; 8]).unwrap();
        assert_eq!(s.raw_read(0x1000, 16).unwrap(), [0, 0, 0, 0, 7, 7, 7, 7, 7, 7, 7, 7, 0, 0, 0, 0]);
    }

    #[test]
    fn raw_copy_between_regions_and_within_one() {
        let mut s = space();
        s.map_region(0x1000, 8, RegionKind::Heap).unwrap();
        s.map_region(0x2000, 8, RegionKind::Stack).unwrap();
        s.raw_write(0x2000, b"abcdefgh").unwrap();
        s.raw_copy(0x1000, 0x2000, 8).unwrap();
        assert_eq!(s.slice(0x1000, 8).unwrap(), b"abcdefgh");
        s.raw_copy(0x1002, 0x1000, 4).unwrap();
        assert_eq!(s.slice(0x1000, 8).unwrap(), b"ababcdgh");
        let err = s.raw_copy(0x1006, 0x2000, 4).unwrap_err();
        assert_eq!(err.addr, 0x1008);
        assert_eq!(s.slice(0x1006, 2).unwrap(), b"ab");
    }

    #[test]
    fn reserve_bumps_and_aligns() {
        let mut s = space();
        assert_eq!(s.reserve(RegionKind::Heap, 8, 8).unwrap(), 0x1000_0000);
        assert_eq!(s.reserve(RegionKind::Heap, 32, 32).unwrap(), 0x1000_0020);
        assert_eq!(s.cursor(RegionKind::Heap), 0x1000_0040);
    }

    #[test]
    fn reserve_stops_at_next_arena() {
        let mut s = space();
        let err = s.reserve(RegionKind::Heap, 0x1000_0001, 1).unwrap_err();
        assert!(matches!(err, SpaceError::OutOfMemory { kind: RegionKind::Heap, .. }));
    }

    #[test]
    fn fnv1a_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(Fnv1a::new().finish(), 0xcbf29ce484222325);
        let mut h = Fnv1a::new();
        h.update(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
        let mut h = Fnv1a::new();
        h.update(b"foobar");
        assert_eq!(h.finish(), 0x85944171f73967e8);
    }

    #[test]
    fn snapshot_diff_reports_changed_bytes() {
        let mut s = space();
        s.map_region(0x1000, 16, RegionKind::Heap).unwrap();
        let before = s.snapshot();
        s.write_byte(0x1003, 1).unwrap();
        s.write_byte(0x100f, 2).unwrap();
        assert_eq!(before.changed_addresses(&s.snapshot()), vec![0x1003, 0x100f]);
    }
}

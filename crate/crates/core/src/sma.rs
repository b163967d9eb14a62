//! Saturation Memory Access.
//!
//! An out-of-bounds access is redirected into the allocation instead of
//! being performed or trapped: overflows land on the last padding byte,
//! underflows on the base. Each byte of a multi-byte access is clamped on its
//! own.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address_space::{AddressSpace, UnmappedFault, ADDR_LIMIT};
use crate::minfat::{bounds_of, TaggedAddress};

/// Default number of records a [`ViolationLog`] keeps before only counting.
pub const DEFAULT_LOG_CAP: usize = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    OverflowWrite,
    OverflowRead,
    UnderflowWrite,
    UnderflowRead,
    NullArgument,
    ZeroLength,
    Overlap,
    UntaggedArgument,
    UnmappedAccess,
}

impl ViolationKind {
    pub fn is_bounds(self) -> bool {
        matches!(
            self,
            ViolationKind::OverflowWrite
                | ViolationKind::OverflowRead
                | ViolationKind::UnderflowWrite
                | ViolationKind::UnderflowRead
        )
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What the library did about a violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationAction {
    Saturated,
    Aborted,
    Ignored,
    Proceeded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViolationRecord {
    pub kind: ViolationKind,
    pub function: &'static str,
    pub attempted_addr: u64,
    pub clamped_addr: Option<u64>,
    /// Index of the offending byte within the operation.
    pub byte_offset: u64,
    pub action: ViolationAction,
}

impl ViolationRecord {
    pub fn new(kind: ViolationKind, function: &'static str, attempted_addr: u64, byte_offset: u64) -> Self {
        ViolationRecord {
            kind,
            function,
            attempted_addr,
            clamped_addr: None,
            byte_offset,
            action: ViolationAction::Proceeded,
        }
    }
}

/// Append-only violation log with a storage cap.
///
/// Past the cap, records are counted but dropped.
#[derive(Clone, Debug)]
pub struct ViolationLog {
    records: Vec<ViolationRecord>,
    cap: usize,
    total: u64,
}

impl Default for ViolationLog {
    fn default() -> Self {
        Self::with_cap(DEFAULT_LOG_CAP)
    }
}

impl ViolationLog {
    pub fn with_cap(cap: usize) -> Self {
        ViolationLog { records: Vec::new(), cap, total: 0 }
    }

    pub fn push(&mut self, record: ViolationRecord) {
        self.total += 1;
        if self.records.len() < self.cap {
            self.records.push(record);
        }
    }

    pub fn records(&self) -> &[ViolationRecord] {
        &self.records
    }

    /// Number of records ever pushed, stored or not.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn dropped(&self) -> u64 {
        self.total - self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.total = 0;
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SmaError {
    #[error("{0} carries no bounds")]
    Untagged(TaggedAddress),
    #[error(transparent)]
    Unmapped(#[from] UnmappedFault),
}

/// Clamp `addr` into `[lower, upper)`.
pub fn saturate(addr: u64, lower: u64, upper: u64) -> u64 {
    debug_assert!(lower < upper);
    if addr >= upper {
        upper - 1
    } else if addr < lower {
        lower
    } else {
        addr
    }
}

/// Outcome of resolving one byte access against an allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Resolved {
    attempted: u64,
    target: u64,
    kind: Option<Side>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Over,
    Under,
}

fn resolve(p: TaggedAddress, offset: i64) -> Result<Resolved, SmaError> {
    let (lower, upper) = bounds_of(p).map_err(|_| SmaError::Untagged(p))?;
    let wide = i128::from(p.addr()) + i128::from(offset);
    let attempted = wide.rem_euclid(i128::from(ADDR_LIMIT)) as u64;
    let (target, kind) = if wide >= i128::from(upper) {
        (upper - 1, Some(Side::Over))
    } else if wide < i128::from(lower) {
        (lower, Some(Side::Under))
    } else {
        (wide as u64, None)
    };
    Ok(Resolved { attempted, target, kind })
}

/// Write `value` at `dest + offset`, saturated into `dest`'s allocation.
pub fn sma_write(
    space: &mut AddressSpace,
    dest: TaggedAddress,
    offset: i64,
    value: u8,
    log: &mut ViolationLog,
    function: &'static str,
) -> Result<(), SmaError> {
    let r = resolve(dest, offset)?;
    space.write_byte(r.target, value)?;
    if let Some(side) = r.kind {
        let kind = match side {
            Side::Over => ViolationKind::OverflowWrite,
            Side::Under => ViolationKind::UnderflowWrite,
        };
        log.push(ViolationRecord {
            clamped_addr: Some(r.target),
            action: ViolationAction::Saturated,
            ..ViolationRecord::new(kind, function, r.attempted, offset.unsigned_abs())
        });
    }
    Ok(())
}

/// Read the byte at `src + offset`, saturated into `src`'s allocation.
pub fn sma_read(
    space: &AddressSpace,
    src: TaggedAddress,
    offset: i64,
    log: &mut ViolationLog,
    function: &'static str,
) -> Result<u8, SmaError> {
    let r = resolve(src, offset)?;
    let value = space.read_byte(r.target)?;
    if let Some(side) = r.kind {
        let kind = match side {
            Side::Over => ViolationKind::OverflowRead,
            Side::Under => ViolationKind::UnderflowRead,
        };
        log.push(ViolationRecord {
            clamped_addr: Some(r.target),
            action: ViolationAction::Saturated,
            ..ViolationRecord::new(kind, function, r.attempted, offset.unsigned_abs())
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address_space::{RegionKind, SpaceConfig};
    use crate::minfat::Allocator;

    fn setup(requested: u64) -> (AddressSpace, TaggedAddress) {
        let mut space = AddressSpace::new(SpaceConfig::default()).unwrap();
        let mut heap = Allocator::new();
        let p = heap.alloc(&mut space, requested, RegionKind::Heap).unwrap();
        (space, p)
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(0x1010, 0x1000, 0x1020), 0x1010);
        assert_eq!(saturate(0x1025, 0x1000, 0x1020), 0x101f);
        assert_eq!(saturate(0x0ff0, 0x1000, 0x1020), 0x1000);
    }

    #[test]
    fn saturate_matches_piecewise_oracle() {
        let (l, u) = (0x40u64, 0x60u64);
        for a in 0..0x100u64 {
            let expected = if a < l { l } else if a > u - 1 { u - 1 } else { a };
            assert_eq!(saturate(a, l, u), expected);
        }
    }

    #[test]
    fn in_bounds_write_is_plain() {
        let (mut space, p) = setup(10);
        let mut log = ViolationLog::default();
        sma_write(&mut space, p, 3, 0xaa, &mut log, "t").unwrap();
        assert_eq!(space.read_byte(p.addr() + 3).unwrap(), 0xaa);
        assert!(log.is_empty());
    }

    #[test]
    fn overflowing_write_lands_on_last_byte() {
        let (mut space, p) = setup(10);
        let before = space.snapshot();
        let mut log = ViolationLog::default();
        sma_write(&mut space, p, 16 + 3, 0x41, &mut log, "t").unwrap();
        assert_eq!(before.changed_addresses(&space.snapshot()), vec![p.addr() + 15]);
        assert_eq!(log.total(), 1);
        let rec = &log.records()[0];
        assert_eq!(rec.kind, ViolationKind::OverflowWrite);
        assert_eq!(rec.attempted_addr, p.addr() + 19);
        assert_eq!(rec.clamped_addr, Some(p.addr() + 15));
        assert_eq!(rec.action, ViolationAction::Saturated);
    }

    #[test]
    fn last_overflowing_write_wins() {
        let (mut space, p) = setup(10);
        let mut log = ViolationLog::default();
        sma_write(&mut space, p, 20, 1, &mut log, "t").unwrap();
        sma_write(&mut space, p, 40, 2, &mut log, "t").unwrap();
        assert_eq!(space.read_byte(p.addr() + 15).unwrap(), 2);
        assert_eq!(log.total(), 2);
    }

    #[test]
    fn underflowing_access_clamps_to_base() {
        let (mut space, p) = setup(10);
        let mut log = ViolationLog::default();
        space.write_byte(p.addr(), 0x5a).unwrap();
        assert_eq!(sma_read(&space, p, -4, &mut log, "t").unwrap(), 0x5a);
        sma_write(&mut space, p, -1, 0x33, &mut log, "t").unwrap();
        assert_eq!(space.read_byte(p.addr()).unwrap(), 0x33);
        let kinds: Vec<_> = log.records().iter().map(|r| r.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::UnderflowRead, ViolationKind::UnderflowWrite]);
    }

    #[test]
    fn reads_past_end_see_padding() {
        let (space, p) = setup(10);
        let mut log = ViolationLog::default();
        assert_eq!(sma_read(&space, p, 16, &mut log, "t").unwrap(), 0);
        assert_eq!(log.records()[0].kind, ViolationKind::OverflowRead);
        assert_eq!(sma_read(&space, p, 2, &mut log, "t").unwrap(), 0);
        assert_eq!(log.total(), 1);
    }

    #[test]
    fn untagged_target_is_rejected() {
        let (mut space, p) = setup(10);
        let mut log = ViolationLog::default();
        let raw = TaggedAddress::untagged(p.addr());
        assert_eq!(sma_write(&mut space, raw, 0, 1, &mut log, "t"), Err(SmaError::Untagged(raw)));
    }

    #[test]
    fn log_cap_counts_overflowing_records() {
        let mut log = ViolationLog::with_cap(2);
        for i in 0..5 {
            log.push(ViolationRecord::new(ViolationKind::OverflowWrite, "t", i, i));
        }
        assert_eq!(log.records().len(), 2);
        assert_eq!(log.total(), 5);
        assert_eq!(log.dropped(), 3);
    }
}

//! Shared machinery of the checked (AnnexK and SMA) code paths.
//!
//! A call runs its runtime-constraint checks in a fixed order: null
//! arguments, zero lengths, untagged arguments, overlap, then bounds. Every
//! transfer is gathered from the source before anything is stored, which
//! gives `memmove` semantics whenever source and destination overlap.
//!
//! Under SMA, all stores past the end of the destination collapse onto its
//! last byte, so only the final one is observable. [`Call::store`] writes the
//! in-bounds head and then that single final byte.

use std::ops::Range;

use crate::address_space::{AddressSpace, UnmappedFault};
use crate::minfat::{bounds_of, TaggedAddress};
use crate::sma::{ViolationKind, ViolationRecord};

use super::{AbortSignal, CallError, Decision, LibraryContext, Mutation, Status};

/// Why a call stopped before completing normally.
pub(super) enum Exit {
    /// Null or zero-length argument under SMA: return the early value.
    Early,
    Abort(AbortSignal),
    Fault(UnmappedFault),
}

impl From<UnmappedFault> for Exit {
    fn from(f: UnmappedFault) -> Self {
        Exit::Fault(f)
    }
}

/// A resolved pointer argument.
#[derive(Clone, Copy, Debug)]
pub(super) enum Operand {
    /// Tagged: accesses are confined to the allocation ending at `upper`.
    Bounded { addr: u64, upper: u64 },
    /// Untagged or deliberately unchecked: accesses go straight to the arena.
    Raw { addr: u64 },
}

impl Operand {
    pub(super) fn addr(&self) -> u64 {
        match *self {
            Operand::Bounded { addr, .. } | Operand::Raw { addr } => addr,
        }
    }

    /// Bytes accessible from `addr + start` before the bound (or first gap).
    pub(super) fn room(&self, space: &AddressSpace, start: u64) -> u64 {
        match *self {
            Operand::Bounded { addr, upper, .. } => upper.saturating_sub(addr + start),
            Operand::Raw { addr } => space.contiguous_len(addr + start),
        }
    }

    fn is_bounded(&self) -> bool {
        matches!(self, Operand::Bounded { .. })
    }
}

/// Result of scanning a source string.
#[derive(Clone, Copy, Debug)]
pub(super) struct Scan {
    /// Bytes before the terminator (or before the limit/bound).
    pub len: u64,
    /// Bytes inspected, terminator included.
    pub inspected: u64,
    /// The scan ran into the bound without finding a terminator.
    pub overran: bool,
}

/// Where the bytes of a transfer come from.
pub(super) enum Source<'a> {
    Memory(Operand),
    Literal(&'a [u8]),
    Fill(u8),
}

/// Byte `i` of a transfer is `source[i]` for `i < data_len` and `pad` after,
/// up to `total` bytes.
pub(super) struct Payload<'a> {
    pub source: Source<'a>,
    pub data_len: u64,
    pub total: u64,
    pub pad: u8,
}

pub(super) struct Call<'c> {
    ctx: &'c mut LibraryContext,
    name: &'static str,
    /// Destination cleared on abort (string functions only).
    string_dest: Option<TaggedAddress>,
    status: Option<Status>,
}

impl<'c> Call<'c> {
    pub(super) fn new(ctx: &'c mut LibraryContext, name: &'static str) -> Self {
        Call { ctx, name, string_dest: None, status: None }
    }

    pub(super) fn clears_on_abort(mut self, dest: TaggedAddress) -> Self {
        self.string_dest = Some(dest);
        self
    }

    pub(super) fn ctx(&mut self) -> &mut LibraryContext {
        self.ctx
    }

    /// Close the call: set the status and turn an early exit into `early`.
    pub(super) fn finish<T>(self, result: Result<T, Exit>, early: T) -> Result<T, CallError> {
        self.ctx.last_status = self.status.unwrap_or(Status::Ok);
        match result {
            Ok(v) => Ok(v),
            Err(Exit::Early) => Ok(early),
            Err(Exit::Abort(signal)) => Err(CallError::Abort(signal)),
            Err(Exit::Fault(fault)) => Err(CallError::Fault(fault)),
        }
    }

    pub(super) fn violation(&mut self, space: &mut AddressSpace, record: ViolationRecord) -> Result<(), Exit> {
        let kind = record.kind;
        self.status.get_or_insert(Status::for_kind(kind));
        let decision = self.ctx.handle_violation(record);
        let logged = self.ctx.log.records().last().cloned();
        match decision {
            Decision::Continue => match kind {
                ViolationKind::NullArgument | ViolationKind::ZeroLength => Err(Exit::Early),
                _ => Ok(()),
            },
            Decision::Abort => {
                if kind == ViolationKind::UnmappedAccess {
                    return Err(Exit::Fault(UnmappedFault { addr: self.last_attempted() }));
                }
                self.clear_string_dest(space);
                let record = logged.unwrap_or_else(|| ViolationRecord::new(kind, self.name, 0, 0));
                Err(Exit::Abort(AbortSignal { function: self.name, record }))
            }
        }
    }

    fn last_attempted(&self) -> u64 {
        self.ctx.log.records().last().map_or(0, |r| r.attempted_addr)
    }

    fn clear_string_dest(&self, space: &mut AddressSpace) {
        let Some(dest) = self.string_dest else { return };
        if dest.is_null() || !dest.is_tagged() {
            return;
        }
        // The argument address itself is always inside its own bounds.
        let _ = space.write_byte(dest.addr(), 0);
    }

    pub(super) fn require_non_null(&mut self, space: &mut AddressSpace, p: TaggedAddress, arg: u64) -> Result<(), Exit> {
        if p.is_null() {
            self.violation(space, ViolationRecord::new(ViolationKind::NullArgument, self.name, 0, arg))?;
        }
        Ok(())
    }

    pub(super) fn require_count(&mut self, space: &mut AddressSpace, n: u64) -> Result<(), Exit> {
        if n == 0 {
            self.violation(space, ViolationRecord::new(ViolationKind::ZeroLength, self.name, 0, 0))?;
        }
        Ok(())
    }

    /// Resolve a non-null pointer argument into an operand.
    pub(super) fn operand(&mut self, space: &mut AddressSpace, p: TaggedAddress, arg: u64) -> Result<Operand, Exit> {
        if !p.is_tagged() {
            self.violation(
                space,
                ViolationRecord::new(ViolationKind::UntaggedArgument, self.name, p.addr(), arg),
            )?;
            return Ok(Operand::Raw { addr: p.addr() });
        }
        let (lower, upper) = bounds_of(p).expect("tagged address has bounds");
        if space.slice(lower, upper - lower).is_none() {
            let addr = lower + space.contiguous_len(lower);
            self.violation(space, ViolationRecord::new(ViolationKind::UnmappedAccess, self.name, addr, arg))?;
        }
        if !self.ctx.clamp_source_reads && arg > 0 {
            return Ok(Operand::Raw { addr: p.addr() });
        }
        Ok(Operand::Bounded { addr: p.addr(), upper })
    }

    /// Find the terminator of the string at `op + start`, inspecting at most
    /// `limit` bytes. A bounded scan stops at the upper bound.
    pub(super) fn scan(&self, space: &AddressSpace, op: &Operand, start: u64, limit: u64) -> Result<Scan, Exit> {
        let room = op.room(space, start);
        let window = limit.min(room);
        let bytes = space
            .slice(op.addr() + start, window)
            .map(|s| s.to_vec())
            .map_or_else(|| space.raw_read(op.addr() + start, window), Ok)?;
        if let Some(pos) = bytes.iter().position(|b| *b == 0) {
            let len = pos as u64;
            return Ok(Scan { len, inspected: len + 1, overran: false });
        }
        if window == limit {
            return Ok(Scan { len: window, inspected: window, overran: false });
        }
        match op {
            Operand::Bounded { .. } => Ok(Scan { len: window, inspected: window, overran: true }),
            Operand::Raw { addr } => Err(Exit::Fault(UnmappedFault { addr: addr + start + window })),
        }
    }

    /// Record a source read that ran past the bound at byte `index`.
    pub(super) fn read_overrun(&mut self, space: &mut AddressSpace, op: &Operand, start: u64, index: u64) -> Result<(), Exit> {
        if let Operand::Bounded { addr, upper, .. } = *op {
            let mut rec = ViolationRecord::new(ViolationKind::OverflowRead, self.name, addr + start + index, index);
            rec.clamped_addr = Some(upper - 1);
            self.violation(space, rec)?;
        }
        Ok(())
    }

    /// Overlap check between a store range and a read range.
    pub(super) fn check_overlap(&mut self, space: &mut AddressSpace, write: Range<u64>, read: Range<u64>) -> Result<(), Exit> {
        if write.start < read.end && read.start < write.end && !write.is_empty() && !read.is_empty() {
            self.violation(
                space,
                ViolationRecord::new(ViolationKind::Overlap, self.name, read.start, read.start.saturating_sub(write.start)),
            )?;
        }
        Ok(())
    }

    /// Bytes a bounded source can serve from `start`.
    pub(super) fn avail(space: &AddressSpace, op: &Operand, start: u64) -> u64 {
        op.room(space, start)
    }

    /// Perform the transfer described by `payload` into `dest + start`.
    pub(super) fn store(
        &mut self,
        space: &mut AddressSpace,
        dest: &Operand,
        start: u64,
        payload: Payload<'_>,
    ) -> Result<(), Exit> {
        let total = payload.total;
        if total == 0 {
            return Ok(());
        }
        let room = dest.room(space, start);
        let overflow = total > room;
        if overflow {
            if let Operand::Bounded { addr, upper, .. } = *dest {
                let mut rec =
                    ViolationRecord::new(ViolationKind::OverflowWrite, self.name, addr + start + room, room);
                rec.clamped_addr = Some(upper - 1);
                self.violation(space, rec)?;
            }
        }
        let head_len = total.min(room);
        let head = gather(space, &payload, 0, head_len)?;
        let last = if overflow && dest.is_bounded() {
            Some(gather(space, &payload, total - 1, 1)?[0])
        } else {
            None
        };
        let target = dest.addr() + start;
        match space.slice_mut(target, head_len) {
            Some(slot) => slot.copy_from_slice(&head),
            None => space.raw_write(target, &head)?,
        }
        match *dest {
            Operand::Bounded { upper, .. } => {
                if let Some(v) = last {
                    if self.ctx.mutation != Some(Mutation::SkipFinalClampedWrite) {
                        space.write_byte(upper - 1, v)?;
                    }
                }
            }
            Operand::Raw { .. } => {
                if overflow {
                    return Err(Exit::Fault(UnmappedFault { addr: target + room }));
                }
            }
        }
        Ok(())
    }
}

/// Bytes `[from, from + len)` of a transfer.
fn gather(space: &AddressSpace, payload: &Payload<'_>, from: u64, len: u64) -> Result<Vec<u8>, UnmappedFault> {
    let mut out = Vec::with_capacity(len as usize);
    let end = from + len;
    let data_end = payload.data_len.min(end);
    if from < data_end {
        match &payload.source {
            Source::Fill(v) => out.resize((data_end - from) as usize, *v),
            Source::Literal(bytes) => out.extend_from_slice(&bytes[from as usize..data_end as usize]),
            Source::Memory(op) => {
                let avail = op.room(space, 0);
                let direct_end = data_end.min(avail);
                if from < direct_end {
                    let addr = op.addr() + from;
                    let n = direct_end - from;
                    match space.slice(addr, n) {
                        Some(s) => out.extend_from_slice(s),
                        None => out.extend_from_slice(&space.raw_read(addr, n)?),
                    }
                }
                if data_end > direct_end.max(from) {
                    let missing = data_end - direct_end.max(from);
                    match op {
                        // Saturated read: the last byte of the source allocation.
                        Operand::Bounded { upper, .. } => {
                            let v = space.read_byte(upper - 1)?;
                            out.resize(out.len() + missing as usize, v);
                        }
                        Operand::Raw { addr } => {
                            return Err(UnmappedFault { addr: addr + direct_end.max(from) });
                        }
                    }
                }
            }
        }
    }
    out.resize(len as usize, payload.pad);
    Ok(out)
}

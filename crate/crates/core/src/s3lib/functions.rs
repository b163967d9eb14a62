use crate::address_space::AddressSpace;
use crate::minfat::{ptr_add, TaggedAddress};

use super::checked::{Call, Exit, Operand, Payload, Source};
use super::{legacy, CallError, LibraryContext, Policy, Status};

impl LibraryContext {
    fn legacy_done<T>(&mut self, r: Result<T, crate::address_space::UnmappedFault>) -> Result<T, CallError> {
        self.last_status = Status::Ok;
        r.map_err(CallError::Fault)
    }

    /// Copy the string at `src`, terminator included, to `dest`.
    pub fn strcpy_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::strcpy(space, dest.addr(), src.addr()).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strcpy_ss").clears_on_abort(dest);
        let r = copy_string(&mut call, space, dest, src, None);
        call.finish(r.map(|_| dest), dest)
    }

    /// Copy at most `n` bytes of the string at `src`, zero-padding up to `n`.
    ///
    /// Like libc `strncpy`, no terminator is added when the source is `n`
    /// bytes or longer.
    pub fn strncpy_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
        n: u64,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::strncpy(space, dest.addr(), src.addr(), n).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strncpy_ss").clears_on_abort(dest);
        let r = copy_string(&mut call, space, dest, src, Some(n));
        call.finish(r.map(|_| dest), dest)
    }

    pub fn strcat_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::strcat(space, dest.addr(), src.addr()).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strcat_ss").clears_on_abort(dest);
        let r = append_string(&mut call, space, dest, src, None);
        call.finish(r.map(|_| dest), dest)
    }

    /// Append at most `n` bytes of `src`, then a terminator.
    pub fn strncat_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
        n: u64,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::strncat(space, dest.addr(), src.addr(), n).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strncat_ss").clears_on_abort(dest);
        let r = append_string(&mut call, space, dest, src, Some(n));
        call.finish(r.map(|_| dest), dest)
    }

    /// Length of the string at `s`, capped by `maxsize` and by the end of
    /// the allocation.
    pub fn strnlen_ss(&mut self, space: &mut AddressSpace, s: TaggedAddress, maxsize: u64) -> Result<u64, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::strnlen(space, s.addr(), maxsize);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strnlen_ss");
        let r = (|| {
            call.require_non_null(space, s, 0)?;
            if maxsize == 0 {
                return Ok(0);
            }
            let op = call.operand(space, s, 0)?;
            let sc = call.scan(space, &op, 0, maxsize)?;
            if sc.overran {
                call.read_overrun(space, &op, 0, sc.len)?;
            }
            Ok(sc.len)
        })();
        call.finish(r, 0)
    }

    /// Split a string into tokens. Pass `Some(s)` to start and `None` to
    /// continue from where the previous call stopped.
    pub fn strtok_ss(
        &mut self,
        space: &mut AddressSpace,
        s: Option<TaggedAddress>,
        delims: &[u8],
    ) -> Result<Option<TaggedAddress>, CallError> {
        if self.policy == Policy::Legacy {
            let mut state = self.strtok_state;
            let r = legacy::strtok(space, &mut state, s, delims);
            self.strtok_state = state;
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "strtok_ss");
        let r = tokenize(&mut call, space, s, delims);
        if matches!(r, Err(Exit::Abort(_) | Exit::Fault(_))) {
            call.ctx().strtok_state = None;
        }
        call.finish(r, None)
    }

    pub fn memcpy_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
        n: u64,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::memcpy(space, dest.addr(), src.addr(), n).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "memcpy_ss");
        let r = copy_memory(&mut call, space, dest, src, n, true);
        call.finish(r.map(|_| dest), dest)
    }

    pub fn memmove_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        src: TaggedAddress,
        n: u64,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::memmove(space, dest.addr(), src.addr(), n).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "memmove_ss");
        let r = copy_memory(&mut call, space, dest, src, n, false);
        call.finish(r.map(|_| dest), dest)
    }

    pub fn memset_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        value: u8,
        n: u64,
    ) -> Result<TaggedAddress, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::memset(space, dest.addr(), value, n).map(|_| dest);
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "memset_ss");
        let r = (|| {
            call.require_non_null(space, dest, 0)?;
            call.require_count(space, n)?;
            let d = call.operand(space, dest, 0)?;
            call.store(space, &d, 0, Payload { source: Source::Fill(value), data_len: n, total: n, pad: 0 })
        })();
        call.finish(r.map(|_| dest), dest)
    }

    /// Store an input line (newline already stripped) and a terminator.
    pub fn gets_ss(
        &mut self,
        space: &mut AddressSpace,
        dest: TaggedAddress,
        line: &[u8],
    ) -> Result<Option<TaggedAddress>, CallError> {
        if self.policy == Policy::Legacy {
            let r = legacy::gets(space, dest.addr(), line).map(|_| Some(dest));
            return self.legacy_done(r);
        }
        let mut call = Call::new(self, "gets_ss").clears_on_abort(dest);
        let r = (|| {
            call.require_non_null(space, dest, 0)?;
            let d = call.operand(space, dest, 0)?;
            let len = line.len() as u64;
            call.store(space, &d, 0, Payload { source: Source::Literal(line), data_len: len, total: len + 1, pad: 0 })
        })();
        call.finish(r.map(|_| Some(dest)), None)
    }
}

fn read_range(op: &Operand, start: u64, len: u64) -> std::ops::Range<u64> {
    op.addr() + start..op.addr() + start + len
}

/// strcpy (`limit == None`) and strncpy.
fn copy_string(
    call: &mut Call<'_>,
    space: &mut AddressSpace,
    dest: TaggedAddress,
    src: TaggedAddress,
    limit: Option<u64>,
) -> Result<(), Exit> {
    call.require_non_null(space, dest, 0)?;
    call.require_non_null(space, src, 1)?;
    if let Some(n) = limit {
        call.require_count(space, n)?;
    }
    let d = call.operand(space, dest, 0)?;
    let s = call.operand(space, src, 1)?;
    let sc = call.scan(space, &s, 0, limit.unwrap_or(u64::MAX))?;
    let total = match limit {
        Some(n) => n,
        None => sc.len + 1,
    };
    let written = total.min(d.room(space, 0));
    call.check_overlap(space, read_range(&d, 0, written), read_range(&s, 0, sc.inspected))?;
    if sc.overran {
        call.read_overrun(space, &s, 0, sc.len)?;
    }
    call.store(space, &d, 0, Payload { source: Source::Memory(s), data_len: sc.len, total, pad: 0 })
}

/// strcat (`limit == None`) and strncat.
fn append_string(
    call: &mut Call<'_>,
    space: &mut AddressSpace,
    dest: TaggedAddress,
    src: TaggedAddress,
    limit: Option<u64>,
) -> Result<(), Exit> {
    call.require_non_null(space, dest, 0)?;
    call.require_non_null(space, src, 1)?;
    if let Some(n) = limit {
        call.require_count(space, n)?;
    }
    let d = call.operand(space, dest, 0)?;
    let s = call.operand(space, src, 1)?;
    let existing = call.scan(space, &d, 0, u64::MAX)?;
    // An unterminated destination is appended to at its last byte.
    let at = if existing.overran { existing.len - 1 } else { existing.len };
    let sc = call.scan(space, &s, 0, limit.unwrap_or(u64::MAX))?;
    let total = sc.len + 1;
    let written = at + total.min(d.room(space, at));
    call.check_overlap(space, read_range(&d, 0, written), read_range(&s, 0, sc.inspected))?;
    if existing.overran {
        call.read_overrun(space, &d, 0, existing.len)?;
    }
    if sc.overran {
        call.read_overrun(space, &s, 0, sc.len)?;
    }
    call.store(space, &d, at, Payload { source: Source::Memory(s), data_len: sc.len, total, pad: 0 })
}

fn copy_memory(
    call: &mut Call<'_>,
    space: &mut AddressSpace,
    dest: TaggedAddress,
    src: TaggedAddress,
    n: u64,
    overlap_is_violation: bool,
) -> Result<(), Exit> {
    call.require_non_null(space, dest, 0)?;
    call.require_non_null(space, src, 1)?;
    call.require_count(space, n)?;
    let d = call.operand(space, dest, 0)?;
    let s = call.operand(space, src, 1)?;
    let avail = Call::avail(space, &s, 0);
    if overlap_is_violation {
        let written = n.min(d.room(space, 0));
        call.check_overlap(space, read_range(&d, 0, written), read_range(&s, 0, n.min(avail)))?;
    }
    if n > avail {
        call.read_overrun(space, &s, 0, avail)?;
    }
    call.store(space, &d, 0, Payload { source: Source::Memory(s), data_len: n, total: n, pad: 0 })
}

fn tokenize(
    call: &mut Call<'_>,
    space: &mut AddressSpace,
    s: Option<TaggedAddress>,
    delims: &[u8],
) -> Result<Option<TaggedAddress>, Exit> {
    let start = match s {
        Some(p) => {
            call.require_non_null(space, p, 0)?;
            p
        }
        None => match call.ctx().strtok_state {
            Some(p) => p,
            None => return Ok(None),
        },
    };
    let op = call.operand(space, start, 0)?;
    let room = op.room(space, 0);
    let bytes = match space.slice(op.addr(), room) {
        Some(b) => b.to_vec(),
        None => space.raw_read(op.addr(), room)?,
    };
    let is_delim = |b: u8| delims.contains(&b);
    let ran_off = |call: &mut Call<'_>, space: &mut AddressSpace, at: u64| -> Result<(), Exit> {
        match op {
            Operand::Bounded { .. } => call.read_overrun(space, &op, 0, at),
            Operand::Raw { addr } => Err(Exit::Fault(crate::address_space::UnmappedFault { addr: addr + at })),
        }
    };

    let mut i = 0usize;
    while i < bytes.len() && bytes[i] != 0 && is_delim(bytes[i]) {
        i += 1;
    }
    if i == bytes.len() {
        call.ctx().strtok_state = None;
        ran_off(call, space, i as u64)?;
        return Ok(None);
    }
    if bytes[i] == 0 {
        call.ctx().strtok_state = None;
        return Ok(None);
    }
    let token = ptr_add(start, i as i64);
    let mut j = i;
    while j < bytes.len() && bytes[j] != 0 && !is_delim(bytes[j]) {
        j += 1;
    }
    if j == bytes.len() {
        call.ctx().strtok_state = None;
        ran_off(call, space, j as u64)?;
        return Ok(Some(token));
    }
    if bytes[j] == 0 {
        call.ctx().strtok_state = None;
        return Ok(Some(token));
    }
    space.write_byte(op.addr() + j as u64, 0)?;
    call.ctx().strtok_state = (j + 1 < bytes.len()).then(|| ptr_add(start, j as i64 + 1));
    Ok(Some(token))
}

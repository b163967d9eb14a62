//! Unchecked libc behavior over the raw arena.
//!
//! Tags are masked off and ignored. Loops run until their libc counterpart
//! would stop or until they touch unmapped memory.

use crate::address_space::{AddressSpace, UnmappedFault};
use crate::minfat::{ptr_add, TaggedAddress};

pub(super) fn strcpy(space: &mut AddressSpace, dest: u64, src: u64) -> Result<(), UnmappedFault> {
    let mut i = 0u64;
    loop {
        let b = space.read_byte(src.wrapping_add(i))?;
        space.write_byte(dest.wrapping_add(i), b)?;
        if b == 0 {
            return Ok(());
        }
        i += 1;
    }
}

pub(super) fn strncpy(space: &mut AddressSpace, dest: u64, src: u64, n: u64) -> Result<(), UnmappedFault> {
    let mut ended = false;
    for i in 0..n {
        let b = if ended { 0 } else { space.read_byte(src.wrapping_add(i))? };
        ended |= b == 0;
        space.write_byte(dest.wrapping_add(i), b)?;
    }
    Ok(())
}

fn strlen(space: &AddressSpace, s: u64) -> Result<u64, UnmappedFault> {
    let mut i = 0u64;
    while space.read_byte(s.wrapping_add(i))? != 0 {
        i += 1;
    }
    Ok(i)
}

pub(super) fn strcat(space: &mut AddressSpace, dest: u64, src: u64) -> Result<(), UnmappedFault> {
    let end = strlen(space, dest)?;
    strcpy(space, dest.wrapping_add(end), src)
}

pub(super) fn strncat(space: &mut AddressSpace, dest: u64, src: u64, n: u64) -> Result<(), UnmappedFault> {
    let end = dest.wrapping_add(strlen(space, dest)?);
    let mut i = 0u64;
    while i < n {
        let b = space.read_byte(src.wrapping_add(i))?;
        if b == 0 {
            break;
        }
        space.write_byte(end.wrapping_add(i), b)?;
        i += 1;
    }
    space.write_byte(end.wrapping_add(i), 0)
}

pub(super) fn strnlen(space: &AddressSpace, s: u64, maxsize: u64) -> Result<u64, UnmappedFault> {
    let mut i = 0u64;
    while i < maxsize && space.read_byte(s.wrapping_add(i))? != 0 {
        i += 1;
    }
    Ok(i)
}

pub(super) fn strtok(
    space: &mut AddressSpace,
    state: &mut Option<TaggedAddress>,
    s: Option<TaggedAddress>,
    delims: &[u8],
) -> Result<Option<TaggedAddress>, UnmappedFault> {
    let Some(start) = s.or(*state) else { return Ok(None) };
    let mut i = 0i64;
    let byte_at = |space: &AddressSpace, k: i64| space.read_byte(ptr_add(start, k).addr());
    loop {
        let b = byte_at(space, i)?;
        if b == 0 {
            *state = None;
            return Ok(None);
        }
        if !delims.contains(&b) {
            break;
        }
        i += 1;
    }
    let token = ptr_add(start, i);
    let mut j = i;
    loop {
        let b = byte_at(space, j)?;
        if b == 0 {
            *state = None;
            return Ok(Some(token));
        }
        if delims.contains(&b) {
            space.write_byte(ptr_add(start, j).addr(), 0)?;
            *state = Some(ptr_add(start, j + 1));
            return Ok(Some(token));
        }
        j += 1;
    }
}

pub(super) fn memcpy(space: &mut AddressSpace, dest: u64, src: u64, n: u64) -> Result<(), UnmappedFault> {
    space.raw_copy(dest, src, n)
}

pub(super) fn memmove(space: &mut AddressSpace, dest: u64, src: u64, n: u64) -> Result<(), UnmappedFault> {
    let tmp = space.raw_read(src, n)?;
    space.raw_write(dest, &tmp)
}

pub(super) fn memset(space: &mut AddressSpace, dest: u64, value: u8, n: u64) -> Result<(), UnmappedFault> {
    space.raw_fill(dest, value, n)
}

pub(super) fn gets(space: &mut AddressSpace, dest: u64, line: &[u8]) -> Result<(), UnmappedFault> {
    space.raw_write(dest, line)?;
    space.write_byte(dest.wrapping_add(line.len() as u64), 0)
}

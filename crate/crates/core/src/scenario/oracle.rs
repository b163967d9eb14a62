//! A deliberately naive reference interpreter for SMA semantics.
//!
//! Memory is a map from address to byte. Each function is written as the
//! obvious per-byte loop with every out-of-bounds access clamped to the last
//! byte of its allocation. Copies run byte-interleaved when source and
//! destination do not overlap and through a temporary buffer when they do.
//! None of this shares code with the library under test.

use std::collections::BTreeMap;

use crate::address_space::RegionKind;

use super::{Function, Scenario, SrcArg};

const HEAP_BASE: u64 = 0x1000_0000;
const STACK_BASE: u64 = 0x2000_0000;
const GLOBAL_BASE: u64 = 0x3000_0000;

#[derive(Clone, Copy)]
struct Ptr {
    addr: u64,
    upper: u64,
}

impl Ptr {
    fn room(&self) -> u64 {
        self.upper - self.addr
    }
}

struct Machine {
    mem: BTreeMap<u64, u8>,
    cursors: [u64; 3],
    strtok: Option<Ptr>,
}

impl Machine {
    fn new() -> Self {
        Machine { mem: BTreeMap::new(), cursors: [HEAP_BASE, STACK_BASE, GLOBAL_BASE], strtok: None }
    }

    /// Returns (base, capacity).
    fn allocate(&mut self, size: u64, region: RegionKind) -> (u64, u64) {
        let mut cap = 2;
        while cap <= size {
            cap *= 2;
        }
        let slot = match region {
            RegionKind::Heap => 0,
            RegionKind::Stack => 1,
            RegionKind::Global => 2,
        };
        let base = self.cursors[slot].div_ceil(cap) * cap;
        self.cursors[slot] = base + cap;
        for a in base..base + cap {
            self.mem.insert(a, 0);
        }
        (base, cap)
    }

    fn get(&self, a: u64) -> u8 {
        self.mem[&a]
    }

    fn set(&mut self, a: u64, v: u8) {
        *self.mem.get_mut(&a).expect("oracle stores stay mapped") = v;
    }

    /// Clamped read of byte `i`.
    fn rd(&self, p: Ptr, i: u64) -> u8 {
        self.get((p.addr + i).min(p.upper - 1))
    }

    /// String read of byte `i`: `None` past the bound.
    fn rd_str(&self, p: Ptr, i: u64) -> Option<u8> {
        (p.addr + i < p.upper).then(|| self.get(p.addr + i))
    }

    /// Clamped write of byte `i`.
    fn wr(&mut self, p: Ptr, i: u64, v: u8) {
        self.set((p.addr + i).min(p.upper - 1), v);
    }

    /// Length of the string at `p` and whether it hit the bound first.
    fn strlen(&self, p: Ptr, limit: u64) -> (u64, bool) {
        let mut i = 0;
        while i < limit {
            match self.rd_str(p, i) {
                None => return (i, true),
                Some(0) => return (i, false),
                Some(_) => i += 1,
            }
        }
        (i, false)
    }

    /// Write `values` to `d + at ..` through a temporary, or byte by byte
    /// with `next` when there is no overlap.
    fn transfer(&mut self, d: Ptr, at: u64, overlap: bool, total: u64, next: impl Fn(&Machine, u64) -> u8) {
        if overlap {
            let tmp: Vec<u8> = (0..total).map(|i| next(self, i)).collect();
            for (i, v) in tmp.into_iter().enumerate() {
                self.wr(d, at + i as u64, v);
            }
        } else {
            for i in 0..total {
                let v = next(self, i);
                self.wr(d, at + i, v);
            }
        }
    }

    fn strcpy(&mut self, d: Ptr, s: Ptr, limit: Option<u64>) {
        if limit == Some(0) {
            return;
        }
        let (len, _) = self.strlen(s, limit.unwrap_or(u64::MAX));
        let total = limit.unwrap_or(len + 1);
        let read = (len + 1).min(total).min(s.room());
        let overlap = overlaps(d.addr, total.min(d.room()), s.addr, read);
        self.transfer(d, 0, overlap, total, |m, i| if i < len { m.rd(s, i) } else { 0 });
    }

    fn strcat(&mut self, d: Ptr, s: Ptr, limit: Option<u64>) {
        if limit == Some(0) {
            return;
        }
        let (dlen, unterminated) = self.strlen(d, u64::MAX);
        let at = if unterminated { dlen - 1 } else { dlen };
        let (len, _) = self.strlen(s, limit.unwrap_or(u64::MAX));
        let total = len + 1;
        let read = (len + 1).min(limit.unwrap_or(u64::MAX)).min(s.room());
        let written = at + total.min(d.upper - (d.addr + at));
        let overlap = overlaps(d.addr, written, s.addr, read);
        self.transfer(d, at, overlap, total, |m, i| if i < len { m.rd(s, i) } else { 0 });
    }

    fn memcpy(&mut self, d: Ptr, s: Ptr, n: u64, always_temp: bool) {
        if n == 0 {
            return;
        }
        let overlap = always_temp || overlaps(d.addr, n.min(d.room()), s.addr, n.min(s.room()));
        self.transfer(d, 0, overlap, n, |m, i| m.rd(s, i));
    }

    fn strtok(&mut self, s: Option<Ptr>, delims: &[u8]) {
        let Some(p) = s.or(self.strtok) else { return };
        let mut i = 0;
        loop {
            match self.rd_str(p, i) {
                None | Some(0) => {
                    self.strtok = None;
                    return;
                }
                Some(b) if delims.contains(&b) => i += 1,
                Some(_) => break,
            }
        }
        let mut j = i;
        loop {
            match self.rd_str(p, j) {
                None | Some(0) => {
                    self.strtok = None;
                    return;
                }
                Some(b) if delims.contains(&b) => {
                    self.set(p.addr + j, 0);
                    let next = p.addr + j + 1;
                    self.strtok = (next < p.upper).then_some(Ptr { addr: next, upper: p.upper });
                    return;
                }
                Some(_) => j += 1,
            }
        }
    }

    fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.mem.values() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn overlaps(a: u64, alen: u64, b: u64, blen: u64) -> bool {
    alen > 0 && blen > 0 && a < b + blen && b < a + alen
}

/// Replay `scenario` under SMA semantics and return the memory digest.
///
/// The digest is comparable with [`super::Report::digest`] from a
/// [`super::run_scenario`] run under the SMA policy.
pub fn oracle_run(scenario: &Scenario) -> u64 {
    let mut m = Machine::new();
    let mut objs: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for a in &scenario.allocations {
        let (base, cap) = m.allocate(a.size, a.region);
        for (i, b) in a.init.bytes().expect("valid initializer").into_iter().enumerate() {
            m.set(base + i as u64, b);
        }
        if let Some(c) = a.canary {
            m.set(base + a.size - 1, c);
        }
        objs.insert(a.id.as_str(), (base, cap));
    }
    let mut literals = Vec::new();
    for c in &scenario.calls {
        literals.push(match &c.src {
            Some(SrcArg::Ascii(lit)) => {
                let (base, cap) = m.allocate(lit.ascii.len() as u64 + 1, RegionKind::Global);
                for (i, b) in lit.ascii.bytes().enumerate() {
                    m.set(base + i as u64, b);
                }
                Some(Ptr { addr: base, upper: base + cap })
            }
            _ => None,
        });
    }
    let ptr = |id: &str, offset: i64| {
        let (base, cap) = objs[id];
        let addr = base.wrapping_add(offset as u64);
        assert!(addr >= base && addr < base + cap, "oracle needs in-bounds argument offsets");
        Ptr { addr, upper: base + cap }
    };

    for (k, c) in scenario.calls.iter().enumerate() {
        let d = c.dest.as_ref().map(|p| ptr(&p.id, p.offset));
        let s = match &c.src {
            Some(SrcArg::Ptr(p)) => Some(ptr(&p.id, p.offset)),
            Some(SrcArg::Ascii(_)) => literals[k],
            None => None,
        };
        let n = c.n.unwrap_or(0);
        match c.function {
            Function::Strcpy => m.strcpy(d.unwrap(), s.unwrap(), None),
            Function::Strncpy => m.strcpy(d.unwrap(), s.unwrap(), Some(n)),
            Function::Strcat => m.strcat(d.unwrap(), s.unwrap(), None),
            Function::Strncat => m.strcat(d.unwrap(), s.unwrap(), Some(n)),
            Function::Strnlen => {}
            Function::Strtok => m.strtok(d, c.delims.as_deref().unwrap_or("").as_bytes()),
            Function::Memcpy => m.memcpy(d.unwrap(), s.unwrap(), n, false),
            Function::Memmove => m.memcpy(d.unwrap(), s.unwrap(), n, true),
            Function::Memset => {
                let v = c.value.unwrap_or(0);
                for i in 0..n {
                    m.wr(d.unwrap(), i, v);
                }
            }
            Function::Gets => {
                let line = c.line.as_deref().unwrap_or("").as_bytes();
                let d = d.unwrap();
                for (i, b) in line.iter().enumerate() {
                    m.wr(d, i as u64, *b);
                }
                m.wr(d, line.len() as u64, 0);
            }
        }
    }
    m.digest()
}

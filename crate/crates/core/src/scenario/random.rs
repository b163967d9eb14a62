use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::address_space::RegionKind;

use super::{encode_hex, AllocationDecl, AsciiArg, CallDecl, Function, Init, PtrArg, Scenario, SrcArg};

const DELIMS: [&str; 4] = [",", " ", ",;", "a"];
const ALPHABET: &[u8] = b"abcdefghij ,;ABC0123";

fn text(rng: &mut ChaCha8Rng, max_len: u64) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap() as char).collect()
}

/// A reproducible random scenario for differential testing.
///
/// Pointer arguments always point inside their allocation and are never
/// null or untagged; lengths and strings regularly overrun.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allocations: Vec<AllocationDecl> = (0..rng.gen_range(1..=4))
        .map(|i| {
            let size = rng.gen_range(1..=128u64);
            let init = match rng.gen_range(0..3) {
                0 => Init::Zero(true),
                1 => Init::Ascii(text(&mut rng, size)),
                _ => {
                    let len = rng.gen_range(0..=size);
                    let bytes: Vec<u8> = (0..len).map(|_| if rng.gen_bool(0.1) { 0 } else { rng.gen() }).collect();
                    Init::Hex(encode_hex(&bytes))
                }
            };
            AllocationDecl {
                id: format!("a{i}"),
                region: *RegionKind::ALL.choose(&mut rng).unwrap(),
                size,
                init,
                canary: rng.gen_bool(0.5).then(|| rng.gen()),
            }
        })
        .collect();
    let capacity = |a: &AllocationDecl| (a.size + 1).next_power_of_two();

    let mut calls = Vec::new();
    for _ in 0..rng.gen_range(1..=6) {
        let function = *Function::ALL.choose(&mut rng).unwrap();
        let pick = |rng: &mut ChaCha8Rng| {
            let a = allocations.choose(rng).unwrap();
            let cap = capacity(a);
            (PtrArg { id: a.id.clone(), offset: rng.gen_range(0..cap) as i64 }, cap)
        };
        let (dest, dcap) = pick(&mut rng);
        let src = if rng.gen_bool(0.15) {
            SrcArg::Ascii(AsciiArg { ascii: text(&mut rng, 40) })
        } else {
            SrcArg::Ptr(pick(&mut rng).0)
        };
        let n = if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..=2 * dcap + 8) };
        let shape = function.shape();
        let mut c = CallDecl::new(function);
        use super::Need::*;
        c.dest = match shape.dest {
            Required => Some(dest),
            Optional => rng.gen_bool(0.7).then_some(dest),
            Absent => None,
        };
        c.src = (shape.src == Required).then_some(src);
        c.n = (shape.n == Required).then_some(n);
        c.delims = (shape.delims == Required).then(|| DELIMS.choose(&mut rng).unwrap().to_string());
        c.line = (shape.line == Required).then(|| text(&mut rng, 2 * dcap));
        c.value = (shape.value == Required).then(|| rng.gen());
        calls.push(c);
    }
    Scenario { name: format!("random-{seed}"), allocations, calls, expect: None }
}

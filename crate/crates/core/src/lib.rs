//! A simulated laboratory for tagged-pointer bounds checking.
//!
//! Pointers carry a 6-bit size tag in their upper bits ([`minfat`]). Every
//! allocation is rounded to a power of two and aligned to its own size, so
//! the base and bounds of any interior pointer can be recomputed from the
//! pointer alone. [`s3lib`] uses this to give the classic string and memory
//! functions bounds checks without extra size arguments, with three ways of
//! reacting to an overflow: do nothing, abort, or saturate the access into
//! the allocation's padding ([`sma`]).
//!
//! Memory is a simulated byte arena ([`address_space`]), so overflows that
//! escape an allocation are observable and deterministic. [`scenario`] runs
//! declarative test programs against it and [`cli`] wraps everything in the
//! `s3lab` tool.

pub mod address_space;
pub mod cli;
pub mod minfat;
pub mod s3lib;
pub mod scenario;
pub mod sma;

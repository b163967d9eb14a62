//! Declarative overflow scenarios and their execution under each policy.
//!
//! A [`Scenario`] lists allocations (in declaration order, which fixes their
//! addresses) and a sequence of library calls over them. [`run_scenario`]
//! replays it on a fresh address space and produces a [`Report`];
//! [`oracle_run`] replays it with a separate, naive byte interpreter so the
//! two can be compared by digest.

mod corpus;
mod oracle;
mod random;
mod run;
mod schema;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::address_space::RegionKind;
use crate::s3lib::{Policy, Status};
use crate::sma::ViolationKind;

pub use corpus::{gen_corpus, CorpusFunction, CorpusSpec, Variant, DEST_SIZES};
pub use oracle::oracle_run;
pub use random::random_scenario;
pub use run::{execute, run_scenario, ExecOptions, Execution, StepEscape};
pub use schema::{parse_scenario, serialize_scenario, SchemaError};

/// Largest allocation a scenario may declare.
pub const MAX_ALLOCATION: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub allocations: Vec<AllocationDecl>,
    pub calls: Vec<CallDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<BTreeMap<Policy, Expectation>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationDecl {
    pub id: String,
    pub region: RegionKind,
    pub size: u64,
    pub init: Init,
    /// Sentinel stored in the last object byte (`size - 1`).
    #[serde(default, skip_serializing_if = "Option::is_none", with = "hex_byte")]
    pub canary: Option<u8>,
}

/// Initial contents of an allocation. Bytes past the initializer are zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Init {
    Zero(bool),
    Ascii(String),
    Hex(String),
}

impl Init {
    /// Decoded initializer bytes.
    pub fn bytes(&self) -> Result<Vec<u8>, String> {
        match self {
            Init::Zero(true) => Ok(Vec::new()),
            Init::Zero(false) => Err("`zero` must be true".into()),
            Init::Ascii(s) => Ok(s.as_bytes().to_vec()),
            Init::Hex(h) => decode_hex(h),
        }
    }
}

pub(crate) fn decode_hex(h: &str) -> Result<Vec<u8>, String> {
    if !h.len().is_multiple_of(2) {
        return Err(format!("hex string has odd length {}", h.len()));
    }
    (0..h.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| format!("invalid hex byte `{}`", &h[i..i + 2]))
        })
        .collect()
}

pub(crate) fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

mod hex_byte {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u8>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_str(&format!("{b:02x}")),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 2 {
            return Err(D::Error::custom(format!("canary must be one hex byte, got `{s}`")));
        }
        u8::from_str_radix(&s, 16)
            .map(Some)
            .map_err(|_| D::Error::custom(format!("invalid hex byte `{s}`")))
    }
}

/// Library function a call step invokes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Function {
    #[serde(alias = "strcpy_ss")]
    Strcpy,
    #[serde(alias = "strncpy_ss")]
    Strncpy,
    #[serde(alias = "strcat_ss")]
    Strcat,
    #[serde(alias = "strncat_ss")]
    Strncat,
    #[serde(alias = "strnlen_ss")]
    Strnlen,
    #[serde(alias = "strtok_ss")]
    Strtok,
    #[serde(alias = "memcpy_ss")]
    Memcpy,
    #[serde(alias = "memmove_ss")]
    Memmove,
    #[serde(alias = "memset_ss")]
    Memset,
    #[serde(alias = "gets_ss")]
    Gets,
}

impl Function {
    pub const ALL: [Function; 10] = [
        Function::Strcpy,
        Function::Strncpy,
        Function::Strcat,
        Function::Strncat,
        Function::Strnlen,
        Function::Strtok,
        Function::Memcpy,
        Function::Memmove,
        Function::Memset,
        Function::Gets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Strcpy => "strcpy",
            Function::Strncpy => "strncpy",
            Function::Strcat => "strcat",
            Function::Strncat => "strncat",
            Function::Strnlen => "strnlen",
            Function::Strtok => "strtok",
            Function::Memcpy => "memcpy",
            Function::Memmove => "memmove",
            Function::Memset => "memset",
            Function::Gets => "gets",
        }
    }

    /// Which call fields the function takes.
    pub(crate) fn shape(self) -> Shape {
        use Need::*;
        let (dest, src, n, delims, line, value) = match self {
            Function::Strcpy | Function::Strcat => (Required, Required, Absent, Absent, Absent, Absent),
            Function::Strncpy | Function::Strncat | Function::Memcpy | Function::Memmove => {
                (Required, Required, Required, Absent, Absent, Absent)
            }
            Function::Strnlen => (Absent, Required, Required, Absent, Absent, Absent),
            Function::Strtok => (Optional, Absent, Absent, Required, Absent, Absent),
            Function::Memset => (Required, Absent, Required, Absent, Absent, Required),
            Function::Gets => (Required, Absent, Absent, Absent, Required, Absent),
        };
        Shape { dest, src, n, delims, line, value }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Need {
    Required,
    Optional,
    Absent,
}

pub(crate) struct Shape {
    pub dest: Need,
    pub src: Need,
    pub n: Need,
    pub delims: Need,
    pub line: Need,
    pub value: Need,
}

/// A pointer into a declared allocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtrArg {
    pub id: String,
    #[serde(default)]
    pub offset: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SrcArg {
    Ptr(PtrArg),
    Ascii(AsciiArg),
}

/// A string literal source, materialized as a global allocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsciiArg {
    pub ascii: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallDecl {
    #[serde(rename = "fn")]
    pub function: Function,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dest: Option<PtrArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<SrcArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delims: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<u8>,
}

impl CallDecl {
    pub fn new(function: Function) -> Self {
        CallDecl { function, dest: None, src: None, n: None, delims: None, line: None, value: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_violations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbor_intact: Option<bool>,
}

impl Expectation {
    /// Field-by-field mismatches against `report`, as `(field, expected, actual)`.
    pub fn mismatches(&self, report: &Report) -> Vec<(&'static str, String, String)> {
        let mut out = Vec::new();
        if let Some(s) = self.status {
            if s != report.status {
                out.push(("status", s.to_string(), report.status.to_string()));
            }
        }
        if let Some(min) = self.min_violations {
            if report.violation_total < min {
                out.push(("min_violations", format!(">= {min}"), report.violation_total.to_string()));
            }
        }
        if let Some(n) = self.neighbor_intact {
            if n != report.neighbor_intact {
                out.push(("neighbor_intact", n.to_string(), report.neighbor_intact.to_string()));
            }
        }
        out
    }
}

/// How a scenario run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Aborted,
    Faulted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Completed => "completed",
            Outcome::Aborted => "aborted",
            Outcome::Faulted => "faulted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViolationSummary {
    pub kind: ViolationKind,
    #[serde(rename = "fn")]
    pub function: String,
    pub offset: u64,
}

/// Result of running one scenario under one policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub name: String,
    pub policy: Policy,
    pub status: Outcome,
    pub violations: Vec<ViolationSummary>,
    pub neighbor_intact: bool,
    #[serde(serialize_with = "hex_u64")]
    pub digest: u64,
    pub last_status: Status,
    /// Violations raised, including any the log did not store.
    #[serde(skip)]
    pub violation_total: u64,
    /// Index of the call that aborted or faulted.
    #[serde(skip)]
    pub stopped_at: Option<usize>,
}

fn hex_u64<S: serde::Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:016x}"))
}

impl Report {
    /// One-line JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

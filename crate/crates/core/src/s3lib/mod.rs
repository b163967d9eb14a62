//! Bounds-checked string and memory functions with legacy signatures.
//!
//! Every `*_ss` function takes MinFat-tagged arguments and derives buffer
//! capacities from the tags, so no extra size argument is needed. What
//! happens on a runtime-constraint violation depends on the [`Policy`]:
//!
//! * [`Policy::Legacy`] performs no checks at all. Accesses go straight to
//!   the arena and may corrupt neighbors or fault.
//! * [`Policy::AnnexK`] detects the violation before storing anything, clears
//!   the first byte of a string destination, and raises an [`AbortSignal`].
//! * [`Policy::Sma`] saturates out-of-bounds accesses into the allocation's
//!   padding and keeps going.
//!
//! The functions return what their libc counterparts return. The outcome of
//! the checks is carried on the context as [`LibraryContext::last_status`].

mod checked;
mod functions;
mod legacy;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address_space::UnmappedFault;
use crate::minfat::TaggedAddress;
use crate::sma::{ViolationAction, ViolationKind, ViolationLog, ViolationRecord};

/// Violation handling policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Legacy,
    #[serde(rename = "annexk")]
    AnnexK,
    Sma,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Legacy, Policy::AnnexK, Policy::Sma];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Legacy => "legacy",
            Policy::AnnexK => "annexk",
            Policy::Sma => "sma",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "legacy" => Ok(Policy::Legacy),
            "annexk" => Ok(Policy::AnnexK),
            "sma" => Ok(Policy::Sma),
            other => Err(format!("unknown policy `{other}` (expected legacy, annexk or sma)")),
        }
    }
}

/// errno-style outcome of the most recent call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Ok,
    ErrNull,
    ErrZeroLen,
    ErrOverlap,
    ErrBounds,
    ErrUntagged,
}

impl Status {
    fn for_kind(kind: ViolationKind) -> Status {
        match kind {
            ViolationKind::NullArgument => Status::ErrNull,
            ViolationKind::ZeroLength => Status::ErrZeroLen,
            ViolationKind::Overlap => Status::ErrOverlap,
            ViolationKind::UntaggedArgument => Status::ErrUntagged,
            ViolationKind::OverflowWrite
            | ViolationKind::OverflowRead
            | ViolationKind::UnderflowWrite
            | ViolationKind::UnderflowRead
            | ViolationKind::UnmappedAccess => Status::ErrBounds,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// How untagged (tag 0) arguments are treated by the checked policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UntaggedMode {
    /// Log the argument and access it unchecked, like a wrapper for foreign code.
    #[default]
    Passthrough,
    /// Treat the argument as a runtime-constraint violation that aborts.
    Strict,
}

/// Answer of the runtime-constraint handler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Abort,
}

/// Raised under [`Policy::AnnexK`] (or strict untagged handling) in place of
/// terminating the process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbortSignal {
    pub function: &'static str,
    pub record: ViolationRecord,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CallError {
    #[error("{}: runtime-constraint violation {} at {:#x}", .0.function, .0.record.kind, .0.record.attempted_addr)]
    Abort(AbortSignal),
    #[error(transparent)]
    Fault(#[from] UnmappedFault),
}

/// Deliberate defects used to check that the fuzz harness notices them.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Drop the final saturated store of an overflowing transfer.
    SkipFinalClampedWrite,
}

/// Per-thread library state: policy, violation log, status and strtok cursor.
#[derive(Clone, Debug)]
pub struct LibraryContext {
    policy: Policy,
    log: ViolationLog,
    last_status: Status,
    strtok_state: Option<TaggedAddress>,
    untagged: UntaggedMode,
    clamp_source_reads: bool,
    mutation: Option<Mutation>,
}

impl LibraryContext {
    pub fn new(policy: Policy) -> Self {
        LibraryContext {
            policy,
            log: ViolationLog::default(),
            last_status: Status::Ok,
            strtok_state: None,
            untagged: UntaggedMode::default(),
            clamp_source_reads: true,
            mutation: None,
        }
    }

    pub fn with_untagged_mode(mut self, mode: UntaggedMode) -> Self {
        self.untagged = mode;
        self
    }

    /// When `false`, only destination stores are bounds-checked; source
    /// reads go to the arena unchecked.
    pub fn with_source_clamping(mut self, clamp: bool) -> Self {
        self.clamp_source_reads = clamp;
        self
    }

    pub fn with_log_cap(mut self, cap: usize) -> Self {
        self.log = ViolationLog::with_cap(cap);
        self
    }

    #[doc(hidden)]
    pub fn with_mutation(mut self, mutation: Option<Mutation>) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn last_status(&self) -> Status {
        self.last_status
    }

    pub fn log(&self) -> &ViolationLog {
        &self.log
    }

    pub fn violations(&self) -> &[ViolationRecord] {
        self.log.records()
    }

    pub fn strtok_state(&self) -> Option<TaggedAddress> {
        self.strtok_state
    }

    /// The runtime-constraint handler.
    ///
    /// Logs `record` with the action the policy takes and says whether the
    /// current call may continue. For null and zero-length arguments,
    /// `Continue` means "return early".
    pub fn handle_violation(&mut self, mut record: ViolationRecord) -> Decision {
        let (action, decision) = match (self.policy, record.kind) {
            (Policy::Legacy, _) => (ViolationAction::Proceeded, Decision::Continue),
            (_, ViolationKind::UntaggedArgument) => match self.untagged {
                UntaggedMode::Passthrough => (ViolationAction::Proceeded, Decision::Continue),
                UntaggedMode::Strict => (ViolationAction::Aborted, Decision::Abort),
            },
            (_, ViolationKind::UnmappedAccess) => (ViolationAction::Aborted, Decision::Abort),
            (Policy::AnnexK, _) => (ViolationAction::Aborted, Decision::Abort),
            (Policy::Sma, k) if k.is_bounds() => (ViolationAction::Saturated, Decision::Continue),
            (Policy::Sma, ViolationKind::NullArgument | ViolationKind::ZeroLength) => {
                (ViolationAction::Ignored, Decision::Continue)
            }
            (Policy::Sma, _) => (ViolationAction::Proceeded, Decision::Continue),
        };
        record.action = action;
        self.log.push(record);
        decision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: ViolationKind) -> ViolationRecord {
        ViolationRecord::new(kind, "strcpy_ss", 0x10, 0)
    }

    #[test]
    fn handler_policy_table() {
        let mut sma = LibraryContext::new(Policy::Sma);
        assert_eq!(sma.handle_violation(rec(ViolationKind::OverflowWrite)), Decision::Continue);
        assert_eq!(sma.violations()[0].action, ViolationAction::Saturated);
        assert_eq!(sma.handle_violation(rec(ViolationKind::NullArgument)), Decision::Continue);
        assert_eq!(sma.violations()[1].action, ViolationAction::Ignored);
        assert_eq!(sma.handle_violation(rec(ViolationKind::Overlap)), Decision::Continue);
        assert_eq!(sma.violations()[2].action, ViolationAction::Proceeded);

        let mut annexk = LibraryContext::new(Policy::AnnexK);
        for kind in [
            ViolationKind::OverflowWrite,
            ViolationKind::OverflowRead,
            ViolationKind::NullArgument,
            ViolationKind::ZeroLength,
            ViolationKind::Overlap,
        ] {
            assert_eq!(annexk.handle_violation(rec(kind)), Decision::Abort);
        }
        assert!(annexk.violations().iter().all(|r| r.action == ViolationAction::Aborted));
    }

    #[test]
    fn untagged_handling_follows_mode() {
        let mut pass = LibraryContext::new(Policy::AnnexK);
        assert_eq!(pass.handle_violation(rec(ViolationKind::UntaggedArgument)), Decision::Continue);
        let mut strict = LibraryContext::new(Policy::Sma).with_untagged_mode(UntaggedMode::Strict);
        assert_eq!(strict.handle_violation(rec(ViolationKind::UntaggedArgument)), Decision::Abort);
    }

    #[test]
    fn policy_names_roundtrip() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.as_str()));
        }
        assert!("strict".parse::<Policy>().is_err());
    }
}

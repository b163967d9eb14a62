use std::collections::{BTreeMap, BTreeSet};

use crate::address_space::{AddressSpace, RegionKind, SpaceConfig};
use crate::minfat::{bounds_of, ptr_add, Allocator, TaggedAddress};
use crate::s3lib::{CallError, LibraryContext, Mutation, Policy};

use super::{Function, Outcome, PtrArg, Report, Scenario, SrcArg, ViolationSummary};

#[derive(Clone, Copy, Debug, Default)]
pub struct ExecOptions {
    #[doc(hidden)]
    pub mutation: Option<Mutation>,
    /// Diff memory around every call and record stores outside the
    /// destination allocation.
    pub check_containment: bool,
}

/// A store a call made outside its destination allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepEscape {
    pub call: usize,
    pub addr: u64,
}

pub struct Execution {
    pub report: Report,
    pub space: AddressSpace,
    pub escapes: Vec<StepEscape>,
}

/// Run `scenario` under `policy` on a fresh address space.
///
/// # Panics
///
/// If the scenario does not pass [`Scenario::validate`].
pub fn run_scenario(scenario: &Scenario, policy: Policy) -> Report {
    execute(scenario, policy, &ExecOptions::default()).report
}

pub fn execute(scenario: &Scenario, policy: Policy, opts: &ExecOptions) -> Execution {
    if let Err(e) = scenario.validate() {
        panic!("invalid scenario `{}`: {e}", scenario.name);
    }
    let mut space = AddressSpace::new(SpaceConfig::default()).expect("default layout is valid");
    let mut heap = Allocator::new();
    let mut ptrs = BTreeMap::new();
    for a in &scenario.allocations {
        let p = heap.alloc(&mut space, a.size, a.region).expect("validated size fits its arena");
        let init = a.init.bytes().expect("validated initializer");
        space.raw_write(p.addr(), &init).expect("fresh allocation is mapped");
        if let Some(c) = a.canary {
            space.write_byte(p.addr() + a.size - 1, c).expect("fresh allocation is mapped");
        }
        ptrs.insert(a.id.as_str(), p);
    }
    let literals: Vec<Option<TaggedAddress>> = scenario
        .calls
        .iter()
        .map(|c| match &c.src {
            Some(SrcArg::Ascii(lit)) => {
                let bytes = lit.ascii.as_bytes();
                let p = heap
                    .alloc(&mut space, bytes.len() as u64 + 1, RegionKind::Global)
                    .expect("literal fits the global arena");
                space.raw_write(p.addr(), bytes).expect("fresh allocation is mapped");
                Some(p)
            }
            _ => None,
        })
        .collect();

    let mut ctx = LibraryContext::new(policy).with_mutation(opts.mutation);
    let resolve = |arg: &PtrArg| ptr_add(ptrs[arg.id.as_str()], arg.offset);
    let mut status = Outcome::Completed;
    let mut stopped_at = None;
    let mut escapes = Vec::new();

    for (i, c) in scenario.calls.iter().enumerate() {
        let dest = c.dest.as_ref().map(resolve);
        let src = match &c.src {
            Some(SrcArg::Ptr(p)) => Some(resolve(p)),
            Some(SrcArg::Ascii(_)) => literals[i],
            None => None,
        };
        let window = match c.function {
            Function::Strnlen => None,
            Function::Strtok => dest.or(ctx.strtok_state()),
            _ => dest,
        };
        let before = opts.check_containment.then(|| space.snapshot());
        let n = c.n.unwrap_or(0);
        let r = match c.function {
            Function::Strcpy => ctx.strcpy_ss(&mut space, dest.unwrap(), src.unwrap()).map(drop),
            Function::Strncpy => ctx.strncpy_ss(&mut space, dest.unwrap(), src.unwrap(), n).map(drop),
            Function::Strcat => ctx.strcat_ss(&mut space, dest.unwrap(), src.unwrap()).map(drop),
            Function::Strncat => ctx.strncat_ss(&mut space, dest.unwrap(), src.unwrap(), n).map(drop),
            Function::Strnlen => ctx.strnlen_ss(&mut space, src.unwrap(), n).map(drop),
            Function::Strtok => {
                let delims = c.delims.as_deref().unwrap_or("").as_bytes();
                ctx.strtok_ss(&mut space, dest, delims).map(drop)
            }
            Function::Memcpy => ctx.memcpy_ss(&mut space, dest.unwrap(), src.unwrap(), n).map(drop),
            Function::Memmove => ctx.memmove_ss(&mut space, dest.unwrap(), src.unwrap(), n).map(drop),
            Function::Memset => ctx.memset_ss(&mut space, dest.unwrap(), c.value.unwrap_or(0), n).map(drop),
            Function::Gets => {
                let line = c.line.as_deref().unwrap_or("").as_bytes();
                ctx.gets_ss(&mut space, dest.unwrap(), line).map(drop)
            }
        };
        if let Some(before) = before {
            let allowed = window.and_then(|p| bounds_of(p).ok());
            for addr in before.changed_addresses(&space.snapshot()) {
                if !allowed.is_some_and(|(lo, hi)| (lo..hi).contains(&addr)) {
                    escapes.push(StepEscape { call: i, addr });
                }
            }
        }
        match r {
            Ok(()) => {}
            Err(CallError::Abort(_)) => {
                status = Outcome::Aborted;
                stopped_at = Some(i);
                break;
            }
            Err(CallError::Fault(_)) => {
                status = Outcome::Faulted;
                stopped_at = Some(i);
                break;
            }
        }
    }

    let destinations: BTreeSet<&str> =
        scenario.calls.iter().filter_map(|c| c.dest.as_ref().map(|d| d.id.as_str())).collect();
    let neighbor_intact = scenario
        .allocations
        .iter()
        .filter(|a| !destinations.contains(a.id.as_str()))
        .filter_map(|a| a.canary.map(|c| (ptrs[a.id.as_str()].addr() + a.size - 1, c)))
        .all(|(addr, c)| space.read_byte(addr) == Ok(c));

    let report = Report {
        name: scenario.name.clone(),
        policy,
        status,
        violations: ctx
            .violations()
            .iter()
            .map(|r| ViolationSummary { kind: r.kind, function: r.function.to_string(), offset: r.byte_offset })
            .collect(),
        neighbor_intact,
        digest: space.digest(),
        last_status: ctx.last_status(),
        violation_total: ctx.log().total(),
        stopped_at,
    };
    Execution { report, space, escapes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;
    use crate::sma::ViolationKind;

    const OVERFLOW: &str = r#"{
        "name": "overflow",
        "allocations": [
            {"id": "d", "region": "heap", "size": 4, "init": {"zero": true}},
            {"id": "n", "region": "heap", "size": 1, "init": {"zero": true}, "canary": "cc"}
        ],
        "calls": [{"fn": "strcpy", "dest": {"id": "d"}, "src": {"ascii": "ABCDEFGHIJ"}}]
    }"#;

    #[test]
    fn three_policies_diverge() {
        let s = parse_scenario(OVERFLOW).unwrap();
        let legacy = run_scenario(&s, Policy::Legacy);
        assert!(!legacy.neighbor_intact);
        assert!(legacy.violations.is_empty());

        let annexk = run_scenario(&s, Policy::AnnexK);
        assert_eq!(annexk.status, Outcome::Aborted);
        assert!(annexk.neighbor_intact);

        let sma = run_scenario(&s, Policy::Sma);
        assert_eq!(sma.status, Outcome::Completed);
        assert!(sma.neighbor_intact);
        assert!(sma.violations.iter().any(|v| v.kind == ViolationKind::OverflowWrite));
    }

    #[test]
    fn containment_holds_under_sma() {
        let s = parse_scenario(OVERFLOW).unwrap();
        let ex = execute(&s, Policy::Sma, &ExecOptions { check_containment: true, ..Default::default() });
        assert!(ex.escapes.is_empty());
        let ex = execute(&s, Policy::Legacy, &ExecOptions { check_containment: true, ..Default::default() });
        assert!(!ex.escapes.is_empty());
    }

    #[test]
    fn report_json_shape() {
        let s = parse_scenario(OVERFLOW).unwrap();
        let v: serde_json::Value = serde_json::from_str(&run_scenario(&s, Policy::Sma).to_json()).unwrap();
        assert_eq!(v["policy"], "sma");
        assert_eq!(v["status"], "completed");
        assert_eq!(v["last_status"], "ErrBounds");
        assert_eq!(v["digest"].as_str().unwrap().len(), 16);
        assert_eq!(v["violations"][0]["fn"], "strcpy_ss");
    }
}

use s3lab::s3lib::Policy;
use s3lab::scenario::{
    execute, gen_corpus, oracle_run, parse_scenario, random_scenario, run_scenario, serialize_scenario, CorpusSpec,
    ExecOptions, Outcome, Variant,
};

#[test]
fn sma_matches_oracle_on_random_scenarios() {
    let opts = ExecOptions { check_containment: true, ..Default::default() };
    for seed in 0..2000 {
        let s = random_scenario(seed);
        let ex = execute(&s, Policy::Sma, &opts);
        assert_eq!(ex.report.status, Outcome::Completed, "seed {seed}");
        assert_eq!(ex.report.digest, oracle_run(&s), "seed {seed}\n{}", serialize_scenario(&s));
        assert!(ex.escapes.is_empty(), "seed {seed}: {:?}", ex.escapes);
    }
}

#[test]
fn corpus_meets_its_expectations() {
    for (variant, s) in gen_corpus(&CorpusSpec::default()) {
        for policy in Policy::ALL {
            let r = run_scenario(&s, policy);
            let e = &s.expect.as_ref().unwrap()[&policy];
            assert!(e.mismatches(&r).is_empty(), "{} {policy}: {:?}", s.name, e.mismatches(&r));
            if variant == Variant::Bad && policy == Policy::Legacy {
                assert_ne!(r.status, Outcome::Aborted);
            }
        }
    }
}

#[test]
fn good_cases_have_identical_legacy_and_sma_memory() {
    for (variant, s) in gen_corpus(&CorpusSpec::default()) {
        if variant == Variant::Good {
            let legacy = run_scenario(&s, Policy::Legacy);
            let sma = run_scenario(&s, Policy::Sma);
            assert_eq!(legacy.digest, sma.digest, "{}", s.name);
            assert!(sma.violations.is_empty());
        }
    }
}

#[test]
fn corpus_documents_roundtrip() {
    for (_, s) in gen_corpus(&CorpusSpec::default()) {
        assert_eq!(parse_scenario(&serialize_scenario(&s)).unwrap(), s);
    }
    for seed in 0..50 {
        let s = random_scenario(seed);
        assert_eq!(parse_scenario(&serialize_scenario(&s)).unwrap(), s);
    }
}

#[test]
fn first_ten_seeds_give_distinct_digests() {
    let digests: std::collections::BTreeSet<u64> = (0..10).map(|s| oracle_run(&random_scenario(s))).collect();
    assert_eq!(digests.len(), 10);
}

#[test]
fn good_variants_raise_no_violations_under_any_policy() {
    for (variant, s) in gen_corpus(&CorpusSpec::default()) {
        if variant == Variant::Good {
            for policy in Policy::ALL {
                assert_eq!(run_scenario(&s, policy).violation_total, 0, "{} {policy}", s.name);
            }
        }
    }
}

fn two_buffers(calls: &str) -> String {
    format!(
        r#"{{"name": "t",
            "allocations": [
              {{"id": "a", "region": "heap", "size": 12, "init": {{"ascii": "0123456789"}}}},
              {{"id": "b", "region": "stack", "size": 5, "init": {{"zero": true}}}}
            ],
            "calls": [{calls}]}}"#
    )
}

#[test]
fn oracle_agrees_on_hand_written_cases() {
    let cases = [
        r#"{"fn": "memcpy", "dest": {"id": "b"}, "src": {"id": "a"}, "n": 4}"#,
        r#"{"fn": "memcpy", "dest": {"id": "b", "offset": 2}, "src": {"id": "a"}, "n": 40}"#,
        r#"{"fn": "memmove", "dest": {"id": "a", "offset": 2}, "src": {"id": "a"}, "n": 8}"#,
        r#"{"fn": "memmove", "dest": {"id": "a", "offset": 6}, "src": {"id": "a"}, "n": 30}"#,
        r#"{"fn": "strcat", "dest": {"id": "a"}, "src": {"id": "a", "offset": 3}}"#,
        r#"{"fn": "strtok", "dest": {"id": "a"}, "delims": "4"}, {"fn": "strtok", "delims": "8"}"#,
    ];
    for c in cases {
        let s = parse_scenario(&two_buffers(c)).unwrap();
        let r = run_scenario(&s, Policy::Sma);
        assert_eq!(r.status, Outcome::Completed, "{c}");
        assert_eq!(r.digest, oracle_run(&s), "{c}");
    }
}

use std::collections::BTreeSet;

use linspg::condition::analyze;
use linspg::instances::{generate, Assumption, GeneratorSpec};
use linspg::Error;
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = GeneratorSpec> {
    let k3 = (1usize..=3, proptest::sample::subsequence(vec![Assumption::A1, Assumption::A2, Assumption::A3, Assumption::A4], 0..=4))
        .prop_map(|(d, req)| (3usize, d, req));
    let general = (3usize..=6)
        .prop_flat_map(|k| (Just(k), 1usize..=k.min(4)))
        .prop_flat_map(|(k, d)| {
            (Just(k), Just(d), proptest::sample::subsequence(vec![Assumption::A1, Assumption::A2, Assumption::A4], 0..=3))
        });
    (prop_oneof![k3, general], any::<u64>()).prop_map(|((k, d, req), seed)| GeneratorSpec::new(k, d, &req, seed))
}

fn satisfied(spec: &GeneratorSpec, inst: &linspg::Instance64) -> BTreeSet<Assumption> {
    let r = analyze(inst).unwrap();
    let mut ok = BTreeSet::new();
    if r.assumption1 {
        ok.insert(Assumption::A1);
    }
    if r.assumption2 {
        ok.insert(Assumption::A2);
    }
    if r.assumption3 == Some(true) {
        ok.insert(Assumption::A3);
    }
    if r.assumption4 {
        ok.insert(Assumption::A4);
    }
    assert_eq!((r.k, r.d), (spec.k, spec.d));
    ok
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn generated_instances_meet_their_requirements(spec in arb_spec()) {
        match generate(&spec) {
            Ok(inst) => {
                let ok = satisfied(&spec, &inst);
                prop_assert!(spec.require.is_subset(&ok), "required {:?}, got {:?}", spec.require, ok);
                prop_assert!(inst.rewards().iter().all(|r| (0.0..=1.0).contains(r)));
                prop_assert!(inst.reward_gap() >= spec.min_gap - 1e-12);
            }
            Err(Error::GenerationFailed { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn generation_is_byte_reproducible(spec in arb_spec()) {
        let a = generate(&spec).map(|i| i.to_json());
        let b = generate(&spec).map(|i| i.to_json());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "generation outcome differs between calls"),
        }
    }
}

#[test]
fn distinct_seeds_give_distinct_instances() {
    let a = generate(&GeneratorSpec::new(6, 3, &[Assumption::A1, Assumption::A4], 1)).unwrap();
    let b = generate(&GeneratorSpec::new(6, 3, &[Assumption::A1, Assumption::A4], 2)).unwrap();
    assert_ne!(a.to_json(), b.to_json());
}

#[test]
fn most_conforming_requests_succeed() {
    let mut ok = 0;
    for seed in 0..20 {
        if generate(&GeneratorSpec::new(6, 3, &[Assumption::A1, Assumption::A2, Assumption::A4], seed)).is_ok() {
            ok += 1;
        }
    }
    assert_eq!(ok, 20);
    let all = [Assumption::A1, Assumption::A2, Assumption::A3, Assumption::A4];
    for d in 1..=3 {
        for seed in 0..10 {
            let spec = GeneratorSpec::new(3, d, &all, seed);
            let inst = generate(&spec).unwrap();
            assert_eq!(satisfied(&spec, &inst).len(), 4);
        }
    }
}

use proptest::prelude::*;
use sevbandit_sim::scenario::standard_drift;
use sevbandit_sim::*;

fn small(seed: u64, hours: f64, reviewers: usize) -> ScenarioConfig {
    let mut s = standard_drift();
    s.seed = seed;
    s.duration = hours;
    s.warmup_hours = hours / 3.0;
    s.arrival_rate = 30.0;
    s.reviewer_capacity.reviewers = Some(reviewers);
    s
}

fn policy() -> impl Strategy<Value = PolicySpec> {
    prop_oneof![
        Just(PolicySpec::BanditUcb),
        Just(PolicySpec::BanditThompson),
        Just(PolicySpec::StaticCalibration),
        Just(PolicySpec::MaxRawScore),
        Just(PolicySpec::FixedAllocation {
            shares: Default::default()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_reproducible(seed in 0u64..1000, hours in 4.0f64..16.0, p in policy()) {
        let s = small(seed, hours, 1);
        let a = run(&s, &p).unwrap();
        let b = run(&s, &p).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn accounting_is_conserved(seed in 0u64..1000, hours in 4.0f64..16.0, reviewers in 0usize..4, p in policy()) {
        let s = small(seed, hours, reviewers);
        let r = run(&s, &p).unwrap();
        prop_assert!(r.reviews <= r.dispatches);
        prop_assert!(r.dispatches <= r.arrivals);
        prop_assert!(r.removed <= r.reviews);
        prop_assert!(r.realized_iv >= 0.0);
        prop_assert!(r.realized_iv <= r.total_violating_iv + 1e-9);
        let dispatched: u64 = r.intervals.iter().map(|i| i.total_dispatches()).sum();
        prop_assert_eq!(dispatched, r.dispatches);
        if reviewers == 0 {
            prop_assert_eq!(r.realized_iv, 0.0);
        }
    }

    #[test]
    fn streams_are_seed_determined(seed in 0u64..1000) {
        let s = small(seed, 6.0, 1);
        prop_assert_eq!(generate_stream(&s, seed).unwrap(), generate_stream(&s, seed).unwrap());
    }
}

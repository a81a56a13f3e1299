use dial_core::data::{read_jsonl, to_jsonl, write_jsonl};
use dial_core::datagen::{
    gen_gaussian_pair, gen_odd_one_out, gen_two_moons, MoonShift, OddOneOutConfig, TwoMoonsConfig,
};
use dial_core::{DomainRole, PreferenceTriple, TruthRecord};
use proptest::prelude::*;

#[test]
fn two_moons_jsonl_is_byte_identical_across_runs() {
    let cfg = TwoMoonsConfig::new(500, 500, MoonShift::fewshot(), 7);
    let bytes = || {
        let (s, t, _) = gen_two_moons(&cfg).unwrap();
        (
            to_jsonl(&s.preference_triples).unwrap(),
            to_jsonl(&t.examples).unwrap(),
            to_jsonl(&t.truth).unwrap(),
        )
    };
    assert_eq!(bytes(), bytes());
}

#[test]
fn jsonl_round_trip_is_exact() {
    let (s, t, _) = gen_two_moons(&TwoMoonsConfig::new(40, 40, MoonShift::Rotate { degrees: 30.0 }, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("src.jsonl");
    write_jsonl(&p, &s.preference_triples).unwrap();
    let back: Vec<PreferenceTriple> = read_jsonl(&p).unwrap();
    assert_eq!(back, s.preference_triples);
    let q = dir.path().join("truth.jsonl");
    write_jsonl(&q, &t.truth).unwrap();
    let back: Vec<TruthRecord> = read_jsonl(&q).unwrap();
    assert_eq!(back, t.truth);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn source_preferences_agree_with_ground_truth(seed in 0u64..1000, deg in -90.0..90.0f64) {
        for shift in [MoonShift::fewshot(), MoonShift::Rotate { degrees: deg }, MoonShift::Translate { dx: 0.5, dy: -0.3 }] {
            let (s, t, scorer) = gen_two_moons(&TwoMoonsConfig::new(30, 30, shift, seed)).unwrap();
            for tr in &s.preference_triples {
                let pos = scorer.score(DomainRole::Source, &tr.x, &tr.y_pos);
                for n in &tr.y_neg {
                    prop_assert!(pos > scorer.score(DomainRole::Source, &tr.x, n));
                }
            }
            for r in &t.truth {
                prop_assert_eq!(r.f, scorer.score(DomainRole::Target, &r.x, &r.y));
            }
        }
    }

    #[test]
    fn odd_one_out_source_is_consistent(seed in 0u64..1000) {
        let (s, _, scorer) = gen_odd_one_out(&OddOneOutConfig::new(5, 10, 0, 1, 20, seed)).unwrap();
        for tr in &s.preference_triples {
            prop_assert_eq!(tr.y_neg.len(), 4);
            prop_assert_eq!(scorer.score(DomainRole::Source, &tr.x, &tr.y_pos), 1.0);
            for n in &tr.y_neg {
                prop_assert_eq!(scorer.score(DomainRole::Source, &tr.x, n), 0.0);
            }
        }
    }

    #[test]
    fn gaussian_pair_is_seed_determined(dim in 1usize..5, m in -3.0..3.0f64, seed in any::<u64>()) {
        let a = gen_gaussian_pair(dim, m, 16, seed).unwrap();
        let b = gen_gaussian_pair(dim, m, 16, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

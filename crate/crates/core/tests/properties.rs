//! Randomized checks against the reference implementations in `common`.

mod common;

use loadcast::baseline::{Baseline, BaselineDims};
use loadcast::catalog::RailcarCatalog;
use loadcast::decoding::beam_search;
use loadcast::evaluation::{assignment_min, dataset_d, pair_ratio};
use loadcast::instances::{sample_weights, stream_rng, Booking};
use loadcast::language::Lexicon;
use loadcast::nmt::{Nmt, NmtDims};
use loadcast::oracle::{cost, cost_of_solution, solve_full_info, synthesize, SolutionDescription, SolverConfig};
use loadcast::saa::medoid;
use proptest::prelude::*;

fn small_booking() -> impl Strategy<Value = Booking> {
    ((0u32..=3, 0u32..=3), (0u32..=8, 0u32..=8))
        .prop_filter("at most 3 railcars and 8 containers", |((a, b), (c, d))| a + b <= 3 && c + d <= 8)
        .prop_map(|((a, b), (c, d))| Booking::new(vec![a, b], vec![c, d]))
}

fn description(cat: &RailcarCatalog) -> impl Strategy<Value = SolutionDescription> {
    prop::collection::vec(0..cat.pattern_count(), 0..6).prop_map(SolutionDescription::from_patterns)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_is_optimal_and_its_plan_checks_out(booking in small_booking(), seed in any::<u64>()) {
        let cat = RailcarCatalog::toy();
        let inst = sample_weights(&booking, &cat, &mut stream_rng(seed, 0));
        let plan = solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap();
        let c = cost_of_solution(&inst, &cat, &plan).unwrap();
        prop_assert_eq!(c, common::brute_force_cost(&inst, &cat));
        prop_assert_eq!(cost(&booking, &cat, &synthesize(&plan, &cat)).unwrap(), c);
    }

    #[test]
    fn assignment_matches_permutations(k in 1usize..=6, rows in prop::collection::vec(prop::collection::vec(0u32..5, 2), 12)) {
        let (a, p) = rows.split_at(6);
        prop_assert_eq!(assignment_min(&a[..k], &p[..k]).unwrap(), common::brute_force_assignment(&a[..k], &p[..k]));
    }

    #[test]
    fn d_ignores_observation_order(ds in prop::collection::vec((description(&RailcarCatalog::toy()), description(&RailcarCatalog::toy())), 1..12), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let cat = RailcarCatalog::toy();
        let mut ds = ds;
        ds[0].0.add(0, 1);
        let before = dataset_d(&ds, &cat).unwrap();
        ds.shuffle(&mut stream_rng(seed, 0));
        let after = dataset_d(&ds, &cat).unwrap();
        prop_assert_eq!((before.numerator, before.denominator), (after.numerator, after.denominator));
        prop_assert_eq!(before.d, after.d);
    }

    #[test]
    fn medoid_minimizes_mean_ratio(cands in prop::collection::vec(description(&RailcarCatalog::toy()), 1..10)) {
        let cat = RailcarCatalog::toy();
        let score = |i: usize| cands.iter().map(|a| pair_ratio(a, &cands[i], &cat)).sum::<f64>() / cands.len() as f64;
        let m = medoid(&cands, &cat);
        for i in 0..cands.len() {
            prop_assert!(score(m) <= score(i) + 1e-12);
            if i < m {
                prop_assert!(score(i) > score(m) - 1e-12 && score(i) != score(m));
            }
        }
    }

    #[test]
    fn sampled_phrases_are_sound(booking in small_booking(), seed in any::<u64>()) {
        let cat = RailcarCatalog::toy();
        let lex = Lexicon::new(&cat);
        let nmt = Nmt::new(&lex, NmtDims { embed: 8, hidden: 8 }, seed, 1.0);
        let mlp = Baseline::new(&lex, &BaselineDims { hidden: vec![8] }, seed, 2.0);
        let mut rng = stream_rng(seed, 1);
        let a = common::sample_phrase(&nmt.bind(&booking).unwrap(), &booking, &lex, &mut rng).unwrap();
        let b = common::sample_phrase(&mlp, &booking, &lex, &mut rng).unwrap();
        prop_assert!(common::respects_booking(&a, &booking, &lex));
        prop_assert!(common::respects_booking(&b, &booking, &lex));
    }

    #[test]
    fn full_width_beam_is_exhaustive(booking in small_booking(), seed in any::<u64>(), max_len in 2usize..=3) {
        let cat = RailcarCatalog::toy();
        let lex = Lexicon::new(&cat);
        let nmt = Nmt::new(&lex, NmtDims { embed: 6, hidden: 6 }, seed, 1.5);
        let step = nmt.bind(&booking).unwrap();
        let hyp = beam_search(&step, &booking, &lex, lex.target().len(), max_len).unwrap();
        let (tokens, score) = common::exhaustive_best(&step, &booking, &lex, max_len);
        prop_assert_eq!(hyp.tokens, tokens);
        prop_assert_eq!(hyp.log_prob, score);
    }
}

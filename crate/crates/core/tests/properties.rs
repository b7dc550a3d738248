use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use polprune::gridworld::generate_batch;
use polprune::policy::kept_count;
use polprune::{
    build_ranking, generate_test_suite, parse_map, prune, render_map, run_episode, spectrum_from_suite, train,
    uniform_random_policy, AbstractState, Coord, Method, Policy, Score, TrainingConfig,
};

fn scores(values: &[f64]) -> Vec<Score> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Score {
            state: AbstractState::at(Coord::new(1 + i % 7, 1 + i / 7)),
            value: v,
            visits: 1 + i % 3,
            std_error: 0.0,
        })
        .collect()
}

fn order(values: &[f64], method: Method) -> Vec<AbstractState> {
    build_ranking(scores(values), method, 0)
        .unwrap()
        .ordered()
        .iter()
        .map(|s| s.state)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn map_text_round_trips(size in 5usize..9, seed in any::<u64>()) {
        for world in generate_batch(2, size, seed).unwrap() {
            let text = render_map(&world);
            let back = parse_map(&text).unwrap();
            prop_assert_eq!(&back, &world);
            prop_assert_eq!(render_map(&back), text);
        }
    }

    #[test]
    fn pruning_is_monotone_in_r(values in prop::collection::vec(-5.0f64..5.0, 1..30), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ranking = build_ranking(scores(&values), Method::Ochiai, 0).unwrap();
        let base: Arc<dyn Policy> = Arc::new(uniform_random_policy());
        let small = prune(Arc::clone(&base), &ranking, lo).unwrap();
        let large = prune(base, &ranking, hi).unwrap();
        prop_assert!(small.kept_states().is_subset(large.kept_states()));
        prop_assert_eq!(small.kept_states().len(), kept_count(lo, values.len()));
        let top: BTreeSet<_> = ranking.top(small.kept_states().len());
        prop_assert_eq!(&top, small.kept_states());
    }

    #[test]
    fn spectrum_counts_are_conserved(world_seed in 0u64..1000, suite_seed in any::<u64>(), rate in 0.05f64..0.6) {
        let world = generate_batch(1, 7, world_seed).unwrap().remove(0);
        let policy = train(&world, &TrainingConfig::default()).unwrap();
        let suite = generate_test_suite(&world, &policy, 60, rate, suite_seed).unwrap();
        let spectrum = spectrum_from_suite(&suite);
        let visits = suite.visit_counts();
        let passing = suite.trajectories.iter().filter(|t| t.passed()).count() as u64;
        let failing = suite.trajectories.len() as u64 - passing;
        prop_assert_eq!(spectrum.len(), suite.visited.len());
        for (state, v) in &spectrum {
            prop_assert_eq!(v.total() as usize, visits[state]);
            prop_assert!(v.a_ep + v.a_np <= passing);
            prop_assert!(v.a_ef + v.a_nf <= failing);
        }
        // The start is visited by every episode.
        let start = spectrum[&AbstractState::at(world.start())];
        prop_assert_eq!(start.a_ep + start.a_np, passing);
        prop_assert_eq!(start.a_ef + start.a_nf, failing);
    }

    #[test]
    fn positive_affine_rescaling_keeps_the_order(values in prop::collection::vec(-1.0f64..1.0, 1..25), scale in 0.01f64..100.0, shift in -10.0f64..10.0) {
        // Rounding of the rescaled values must not merge or split ties, so
        // only compare when the scaled order of distinct values is unambiguous.
        let rescaled: Vec<f64> = values.iter().map(|v| v * scale + shift).collect();
        let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(rescaled.iter().copied()).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        prop_assume!(pairs.windows(2).all(|w| (w[0].0 == w[1].0) == (w[0].1 == w[1].1)));
        for method in [Method::Causal, Method::Ochiai, Method::Wong2] {
            prop_assert_eq!(order(&values, method), order(&rescaled, method));
        }
    }

    #[test]
    fn goal_reward_stays_in_range(seed in any::<u64>()) {
        let world = generate_batch(1, 6, seed % 64).unwrap().remove(0);
        let t = run_episode(&world, &uniform_random_policy(), seed);
        if t.passed() {
            prop_assert!(t.outcome.final_reward >= 0.1 && t.outcome.final_reward < 1.0);
            let g = world.discount();
            let expected = g.powi(t.len() as i32 - 1) * t.outcome.final_reward;
            prop_assert!((t.discounted_return(g) - expected).abs() <= 1e-12);
        } else {
            prop_assert_eq!(t.outcome.final_reward, 0.0);
            prop_assert_eq!(t.discounted_return(world.discount()), 0.0);
        }
    }
}

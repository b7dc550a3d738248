mod common;

use std::sync::Arc;

use common::{brute_force_effect, Grid, TablePolicy, HAND_WORLDS};
use polprune::gridworld::generate_batch;
use polprune::ranking::{causal_scores, Expectation};
use polprune::training::value_iteration;
use polprune::{
    estimate_value, generate_test_suite, parse_map, prune, run_episode, train, uniform_random_policy, Coord, GridWorld,
    Policy, TabularPolicy, TrainingConfig,
};

fn vi_policy(world: &GridWorld) -> TabularPolicy {
    train(world, &TrainingConfig::default()).unwrap()
}

fn table_of(policy: &TabularPolicy) -> TablePolicy {
    TablePolicy::from_rows(
        policy
            .table()
            .iter()
            .map(|(k, a)| ((k.position().x, k.position().y), a.letter())),
        policy.default_action().letter(),
    )
}

#[test]
fn exact_causal_scores_match_brute_force_replay() {
    for (name, text) in HAND_WORLDS {
        let world = parse_map(text).unwrap();
        let grid = Grid::parse(text);
        let policy = vi_policy(&world);
        let suite = generate_test_suite(&world, &policy, 300, 0.2, 1).unwrap();
        let scores = causal_scores(&world, &policy, &suite, 4, 9, Expectation::Exact).unwrap();
        assert_eq!(scores.len(), suite.visited.len());
        let oracle = table_of(&policy);
        for s in scores {
            let p = s.state.position();
            let expected = brute_force_effect(&grid, &oracle, (p.x, p.y));
            assert!(
                (s.value - expected).abs() <= 1e-12,
                "{name} {}: {} vs {expected}",
                s.state,
                s.value
            );
            assert_eq!(s.std_error, 0.0);
        }
    }
}

#[test]
fn effect_next_to_lava_is_the_lava_share_of_the_return() {
    // Start has lava on three sides; all three lead to death, the fourth
    // action is the policy's own.
    let grid = Grid::parse(common::ORIENTATION_MAP);
    let world = parse_map(common::ORIENTATION_MAP).unwrap();
    let policy = vi_policy(&world);
    let (factual, _) = common::replay(&grid, &table_of(&policy), None);
    let effect = brute_force_effect(&grid, &table_of(&policy), common::CRITICAL);
    assert!((effect - 0.75 * factual).abs() < 1e-12);
    let benign = brute_force_effect(&grid, &table_of(&policy), common::INDIFFERENT);
    assert!(benign > 0.0 && benign < 0.05 * factual, "benign effect {benign}");
}

#[test]
fn value_iteration_matches_bfs_closed_form() {
    for (name, text) in HAND_WORLDS {
        let world = parse_map(text).unwrap();
        let grid = Grid::parse(text);
        let gamma = world.discount().min(0.99);
        let vf = value_iteration(&world, gamma, 1e-12);
        let dist = grid.safe_distances();
        for (&c, &v) in &vf.values {
            let d = dist[&(c.x, c.y)];
            let expected = gamma.powi(d as i32 - 1);
            assert!((v - expected).abs() < 1e-9, "{name} {c}: {v} vs {expected}");
        }
    }
}

#[test]
fn uniform_random_value_matches_exact_markov_chain() {
    let text = "######\n#S...#\n#....#\n#....#\n#...G#\n######\n@ max_steps=50 discount=0.95 seed=0\n";
    let world = parse_map(text).unwrap();
    let exact = common::uniform_random_value(&Grid::parse(text));
    let est = estimate_value(&world, &uniform_random_policy(), 4000, 17).unwrap();
    assert!(est.std_error > 0.0);
    assert!(
        (est.mean - exact).abs() <= 3.0 * est.std_error,
        "{} vs {exact} (se {})",
        est.mean,
        est.std_error
    );
}

#[test]
fn deterministic_policy_value_has_zero_error() {
    let (_, text) = HAND_WORLDS[1];
    let world = parse_map(text).unwrap();
    let policy = vi_policy(&world);
    let est = estimate_value(&world, &policy, 25, 4).unwrap();
    let (factual, _) = common::replay(&Grid::parse(text), &table_of(&policy), None);
    assert_eq!(est.std_error, 0.0);
    assert_eq!(est.mean, factual);
}

#[test]
fn mutation_decisions_follow_the_rate() {
    let (_, text) = HAND_WORLDS[2];
    let world = parse_map(text).unwrap();
    let policy = vi_policy(&world);
    let suite = generate_test_suite(&world, &policy, 1000, 0.5, 23).unwrap();
    let (mut mutated, mut total) = (0usize, 0usize);
    for t in &suite.trajectories {
        for (_, m) in t.visited() {
            total += 1;
            mutated += m as usize;
        }
    }
    let fraction = mutated as f64 / total as f64;
    assert!((0.47..=0.53).contains(&fraction), "fraction {fraction}");

    let calm = generate_test_suite(&world, &policy, 10, 1e-9, 2).unwrap();
    assert!(calm
        .trajectories
        .iter()
        .all(|t| t.passed() && t.steps.iter().all(|s| !s.mutated)));
}

#[test]
fn random_policy_mostly_fails_on_generated_worlds() {
    let worlds = generate_batch(5, 9, 3).unwrap();
    for w in &worlds {
        let fails = (0..100)
            .filter(|&s| !run_episode(w, &uniform_random_policy(), s).passed())
            .count();
        assert!(fails > 50, "only {fails} failures");
    }
}

#[test]
fn generated_worlds_pass_independent_bfs() {
    for size in [5, 7, 9] {
        for w in generate_batch(8, size, 41).unwrap() {
            let text = polprune::render_map(&w);
            let grid = Grid::parse(&text);
            let dist = grid.safe_distances();
            let d = dist.get(&grid.start).copied().expect("start reaches goal safely");
            let goal = w.goal();
            let manhattan = grid.start.0.abs_diff(goal.x) + grid.start.1.abs_diff(goal.y);
            assert!(d > manhattan, "path {d} not longer than manhattan {manhattan}");
            assert_eq!((grid.width, grid.height), (size, size));
            for x in 0..size {
                assert_eq!(grid.cell((x, 0)), common::Cell::Wall);
                assert_eq!(grid.cell((x, size - 1)), common::Cell::Wall);
                assert_eq!(grid.cell((0, x)), common::Cell::Wall);
                assert_eq!(grid.cell((size - 1, x)), common::Cell::Wall);
            }
        }
    }
}

#[test]
fn full_ranking_replays_the_base_policy() {
    let (_, text) = HAND_WORLDS[2];
    let world = parse_map(text).unwrap();
    let base: Arc<dyn Policy> = Arc::new(vi_policy(&world));
    let suite = generate_test_suite(&world, base.as_ref(), 200, 0.1, 5).unwrap();
    let ranking = polprune::ranking::rank_states(
        &world,
        base.as_ref(),
        &suite,
        &polprune::ranking::RankConfig::new(polprune::Method::Ochiai),
    )
    .unwrap();
    let full = prune(Arc::clone(&base), &ranking, 1.0).unwrap();
    for seed in 0..20 {
        assert_eq!(
            run_episode(&world, &full, seed).steps,
            run_episode(&world, base.as_ref(), seed).steps
        );
    }
    let none = prune(base, &ranking, 0.0).unwrap();
    for seed in 0..20 {
        assert_eq!(
            run_episode(&world, &none, seed).steps,
            run_episode(&world, &uniform_random_policy(), seed).steps
        );
    }
    assert_eq!(world.start(), Coord::new(1, 1));
}

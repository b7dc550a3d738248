"""Smoke test for the polprune_py extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`
or `pip install crates/py`, then run `python python/smoke_test.py`.
"""

import polprune_py as pp

MAP = """\
######
##L###
#LSL.#
#...##
#...G#
######
@ max_steps=40 discount=0.99 seed=0
"""


def main():
    world = pp.World.from_map(MAP)
    assert (world.width, world.height) == (6, 6)
    assert world.start == (2, 2) and world.goal == (4, 4)
    assert pp.World.from_map(world.to_map()).to_map() == world.to_map()

    policy = pp.train(world, seed=1)
    outcome, reward, steps, ret, random_steps = pp.run_episode(world, policy, seed=0)
    assert outcome == "GoalReached" and random_steps == 0, outcome
    assert abs(reward - (1 - 0.9 * steps / world.max_steps)) < 1e-12
    assert pp.Policy.from_csv(policy.to_csv()).table() == policy.table()

    mean, se = pp.estimate_value(world, policy, 5, seed=3)
    assert se == 0.0 and abs(mean - ret) < 1e-12

    assert pp.sbfl_score(4, 0, 0, 6, "ochiai") == 1.0
    assert pp.sbfl_score(0, 0, 3, 0, "tarantula") == 0.0

    causal = pp.rank(world, policy, "causal", seed=5)
    assert causal.method == "causal" and len(causal) > 0
    assert all(se == 0.0 for _, _, se, _ in causal.entries())
    assert pp.Ranking.from_csv(causal.to_csv()).entries() == causal.entries()

    curve = pp.evaluate_curve(world, policy, causal, seed=9, r_grid=[0.5], episodes=50)
    assert [p[0] for p in curve] == [0.0, 0.5, 1.0]
    assert curve[-1][1] == 1.0

    pruned = policy.prune(causal, 0.0)
    assert pruned.kind == "pruned"
    assert pp.run_episode(world, pruned, seed=0)[4] > 0

    worlds = pp.World.generate(2, 7, seed=4)
    report = pp.batch_experiment(worlds, ["causal", "random"], seed=0, suite_episodes=100, eval_episodes=20)
    assert sorted(m for m, *_ in report) == ["causal", "random"]
    assert all(len(per_world) == 2 for *_, per_world in report)

    try:
        pp.World.from_map("#####\n")
    except ValueError as e:
        assert "missing" in str(e) or "metadata" in str(e), e
    else:
        raise AssertionError("malformed map accepted")

    print("polprune_py smoke test passed")


if __name__ == "__main__":
    main()

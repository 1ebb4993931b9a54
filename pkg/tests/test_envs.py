import itertools

import numpy as np
import pytest

from blindspot.envs import (BAD, COPPER, GOOD, STEEL, Catcher, CatcherConfig, CatcherState,
                            DomainError, FlappyBird, FlappyConfig, FlappyState,
                            StateSpaceTooLarge, make_env_pair, rollout, write_states_csv)


def test_catcher_projection_drops_fruit_kind():
    env = Catcher(target=True)
    assert env.sim_observe(CatcherState(3, 5, 2, BAD)) == (3, 5, 2)
    assert env.sim_observe(CatcherState(3, 5, 2, GOOD)) == (3, 5, 2)


def test_catcher_left_region_projection_is_identity_on_observables():
    env = Catcher(target=True)
    s = CatcherState(1, 2, 4, GOOD)
    assert env.region(s) == "left"
    assert env.sim_observe(s) == (s.x_p, s.x_f, s.y_f)


def test_flappy_material_is_hidden():
    env = FlappyBird(target=True)
    a = FlappyState(3, 1, 5, 0, 9, STEEL)
    b = FlappyState(3, 1, 5, 0, 9, COPPER)
    assert env.sim_observe(a) == env.sim_observe(b)


def test_catcher_good_fruit_reward_w10():
    cfg = CatcherConfig(width=10, height=5)
    env = Catcher(cfg)
    # fruit one row above the catch row, paddle stays put
    s2, r, done = env.step(CatcherState(3, 5, 3, GOOD), 1)
    assert done and r == 8.0
    assert env.catch_reward(3, 5, GOOD) == 8.0


def test_catcher_bad_fruit_penalty_when_aligned():
    env = Catcher(CatcherConfig(width=10, height=5), target=True)
    _, r, done = env.step(CatcherState(6, 6, 3, BAD), 1)
    assert done and r == -100.0
    _, r, _ = env.step(CatcherState(4, 6, 3, BAD), 1)
    assert r == 2.0


@pytest.mark.parametrize("width", [5, 10, 11])
def test_catch_reward_exhaustive(width):
    env = Catcher(CatcherConfig(width=width), target=True)
    for x_p, x_f in itertools.product(range(width), repeat=2):
        d = abs(x_p - x_f)
        assert env.catch_reward(x_p, x_f, GOOD) == width - d
        assert env.catch_reward(x_p, x_f, BAD) == d + (-100 if d == 0 else 0)


def test_catcher_move_cost_and_bounds():
    env = Catcher(CatcherConfig(width=5, height=5))
    s, r, done = env.step(CatcherState(0, 2, 0, GOOD), 0)
    assert s.x_p == 0 and r == -0.01 and not done
    s, _, _ = env.step(CatcherState(4, 2, 0, GOOD), 2)
    assert s.x_p == 4


def test_flappy_pass_and_crash():
    env = FlappyBird()
    # one column before the pipe, inside the (1, 3) gap after falling
    _, r, done = env.step(FlappyState(3, 1, 3, 0, 1, STEEL), 1)
    assert done and r == 10.0
    _, r, done = env.step(FlappyState(3, 1, 8, 0, 1, STEEL), 1)
    assert done and r == -10.0
    # falling through the floor
    _, r, done = env.step(FlappyState(8, 6, 0, -2, 9, STEEL), 1)
    assert done and r == -10.0


def test_flappy_copper_danger_and_low_bonus():
    env = FlappyBird(target=True)
    _, r, done = env.step(FlappyState(3, 1, 5, 0, 4, COPPER), 0)  # flap to 7, dx 3
    assert not done and r == -100.0
    _, r, _ = env.step(FlappyState(3, 1, 3, 0, 8, COPPER), 1)  # fall to 2
    assert r == pytest.approx(0.1)
    _, r, _ = env.step(FlappyState(3, 1, 5, 0, 8, STEEL), 0)  # steel, high
    assert r == pytest.approx(0.1)


def test_invalid_action_rejected():
    with pytest.raises(DomainError):
        Catcher().step(CatcherState(0, 0, 0, GOOD), 3)
    with pytest.raises(DomainError):
        FlappyBird().step(FlappyState(3, 1, 5, 0, 5, STEEL), -1)


def test_seeded_reset_repeatable():
    env = Catcher(target=True)
    a = [env.reset(np.random.default_rng(7)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_p_good_zero_makes_right_region_bad():
    env = Catcher(CatcherConfig(p_good=0.0), target=True)
    rng = np.random.default_rng(1)
    for _ in range(300):
        s = env.reset(rng)
        if env.region(s) == "right":
            assert s.fruit_kind == BAD


def test_source_fruit_always_good():
    env = Catcher(target=False)
    rng = np.random.default_rng(2)
    assert all(env.reset(rng).fruit_kind == GOOD for _ in range(300))


def test_enumeration_small_grid():
    env = Catcher(CatcherConfig(width=5, height=3))
    sims, reals = env.enumerate_states()
    assert len(sims) == 75 and len(reals) == 75


def test_target_right_region_has_two_preimages():
    env = Catcher(CatcherConfig(width=5, height=3), target=True)
    sims, reals = env.enumerate_states()
    counts = {}
    for s in reals:
        counts[env.sim_observe(s)] = counts.get(env.sim_observe(s), 0) + 1
    for s in sims:
        assert counts[s] == (2 if s[1] >= env.right_start else 1)
    assert len(set(reals)) == len(reals) >= len(sims)
    assert set(map(env.sim_observe, reals)) == set(sims)


def test_enumeration_cap():
    with pytest.raises(StateSpaceTooLarge):
        Catcher().enumerate_states(cap=10)


def test_source_target_agree_without_hidden_feature():
    pair = make_env_pair("catcher")
    for s in pair.source.enumerate_real():
        for a in range(3):
            assert pair.source.step(s, a) == pair.target.step(s, a)
    fpair = make_env_pair("flappybird")
    for s in fpair.source.enumerate_real():
        for a in range(2):
            assert fpair.source.step(s, a) == fpair.target.step(s, a)


def test_flappy_copper_only_for_low_gaps():
    env = FlappyBird(target=True)
    for s in env.enumerate_real():
        if s.pipe_material == COPPER:
            assert s.y_t < env.config.danger_threshold


def test_rollouts_bit_identical():
    env = FlappyBird(target=True)
    pol = lambda s: int(s.y_a < 4)
    run = lambda: list(rollout(env, pol, np.random.default_rng(3)))
    assert run() == run()


def test_env_pair_shares_action_set():
    for d in ("catcher", "flappybird"):
        p = make_env_pair(d)
        assert p.source.actions == p.target.actions
    assert make_env_pair("catcher").actions == ("left", "stay", "right")
    assert make_env_pair("flappybird").actions == ("up", "noop")
    with pytest.raises(ValueError):
        make_env_pair("pong")


def test_config_validation():
    with pytest.raises(ValueError):
        CatcherConfig(p_good=1.5)
    with pytest.raises(ValueError):
        FlappyConfig(gaps=((1, 20),), gap_probs=(1.0,))


def test_states_csv(tmp_path):
    env = Catcher(CatcherConfig(width=3, height=2), target=True)
    _, reals = env.enumerate_states()
    p = tmp_path / "s.csv"
    write_states_csv(p, env, reals)
    lines = p.read_text().splitlines()
    assert lines[0] == "x_p,x_f,y_f,fruit_kind" and len(lines) == len(reals) + 1

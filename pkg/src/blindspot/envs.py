"""Discretized source/target domains with hidden real-world features.

Each domain comes as a pair: a *source* environment the agent trains in and a
*target* environment in which an extra feature (fruit kind, pipe material) is
active. The agent only ever observes the source representation, obtained from
a real state through :meth:`Env.sim_observe`.

States are plain tuples of ints (NamedTuples for the real domains), so they
hash cheaply and serialize to CSV rows without ceremony.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_STATE_CAP = 200_000


class DomainError(ValueError):
    """Invalid action or state handed to an environment."""


class StateSpaceTooLarge(RuntimeError):
    pass


class Env:
    """Minimal interface shared by the game domains and test MDPs.

    Transitions must be deterministic given ``(state, action)``; all
    randomness lives in :meth:`reset`. That is what lets the tabular code
    build exact transition tables by calling :meth:`step` once per pair.
    """

    actions: tuple[str, ...] = ()
    real_fields: tuple[str, ...] = ()
    sim_fields: tuple[str, ...] = ()
    horizon: int = 200
    target: bool = False

    def sim_observe(self, s) -> tuple:
        raise NotImplementedError

    def step(self, s, a: int):
        raise NotImplementedError

    def start_distribution(self) -> list[tuple[tuple, float]]:
        raise NotImplementedError

    def enumerate_real(self) -> list[tuple]:
        raise NotImplementedError

    def is_terminal(self, s) -> bool:
        return False

    def reset(self, rng: np.random.Generator):
        starts = self.start_distribution()
        probs = np.array([p for _, p in starts], dtype=float)
        i = rng.choice(len(starts), p=probs / probs.sum())
        return starts[i][0]

    def enumerate_states(self, cap: int = DEFAULT_STATE_CAP):
        """Return ``(sim_states, real_states)``, both duplicate-free and ordered."""
        reals = self.enumerate_real()
        if len(reals) > cap:
            raise StateSpaceTooLarge(
                f"{type(self).__name__}: {len(reals)} real states exceeds cap {cap}"
            )
        sims = list(dict.fromkeys(self.sim_observe(s) for s in reals))
        return sims, reals

    def check_action(self, a: int) -> None:
        if not isinstance(a, (int, np.integer)) or not 0 <= a < len(self.actions):
            raise DomainError(f"invalid action {a!r}; expected index into {self.actions}")


# ---------------------------------------------------------------- Catcher

CATCHER_ACTIONS = ("left", "stay", "right")
GOOD, BAD = 0, 1


class CatcherState(NamedTuple):
    x_p: int
    x_f: int
    y_f: int
    fruit_kind: int = GOOD


@dataclass(frozen=True)
class CatcherConfig:
    width: int = 11
    height: int = 11
    p_good: float = 0.5
    bad_penalty: float = -100.0
    # small cost per paddle move; removes exact Q-value ties between moving
    # now and moving later (0 restores the bare distance reward)
    move_cost: float = 0.01
    horizon: int = 200

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("catcher grid must be at least 2x2")
        if not 0.0 <= self.p_good <= 1.0:
            raise ValueError("p_good must lie in [0, 1]")


class Catcher(Env):
    """Paddle at the bottom row catches one falling fruit per episode.

    The fruit spawns in row 0 and falls one row per step. When it reaches the
    catch row (``height - 1``) the episode ends and the distance reward is paid.
    In the target, fruit spawned in the right half of the screen is bad with
    probability ``1 - p_good``.
    """

    actions = CATCHER_ACTIONS
    real_fields = ("x_p", "x_f", "y_f", "fruit_kind")
    sim_fields = ("x_p", "x_f", "y_f")

    def __init__(self, config: CatcherConfig | None = None, target: bool = False):
        self.config = config or CatcherConfig()
        self.target = target
        self.horizon = self.config.horizon

    @property
    def right_start(self) -> int:
        return (self.config.width + 1) // 2

    def region(self, s: CatcherState) -> str:
        return "right" if s.x_f >= self.right_start else "left"

    def sim_observe(self, s) -> tuple:
        return (s[0], s[1], s[2])

    def is_terminal(self, s) -> bool:
        return s[2] >= self.config.height - 1

    def catch_reward(self, x_p: int, x_f: int, kind: int) -> float:
        d = abs(x_p - x_f)
        if kind == GOOD:
            return float(self.config.width - d)
        return float(d) + (self.config.bad_penalty if d == 0 else 0.0)

    def step(self, s, a):
        self.check_action(a)
        s = CatcherState(*s)
        if self.is_terminal(s):
            return s, 0.0, True
        cfg = self.config
        x_p = min(max(s.x_p + (a - 1), 0), cfg.width - 1)
        y_f = s.y_f + 1
        r = -cfg.move_cost if a != 1 else 0.0
        nxt = CatcherState(x_p, s.x_f, y_f, s.fruit_kind)
        if y_f == cfg.height - 1:
            return nxt, r + self.catch_reward(x_p, s.x_f, s.fruit_kind), True
        return nxt, r, False

    def fruit_kinds(self, x_f: int) -> tuple[int, ...]:
        if self.target and x_f >= self.right_start:
            return (GOOD, BAD)
        return (GOOD,)

    def start_distribution(self):
        w = self.config.width
        out = []
        for x_p, x_f in itertools.product(range(w), range(w)):
            base = 1.0 / (w * w)
            kinds = self.fruit_kinds(x_f)
            if len(kinds) == 1:
                out.append((CatcherState(x_p, x_f, 0, GOOD), base))
            else:
                if self.config.p_good > 0:
                    out.append((CatcherState(x_p, x_f, 0, GOOD), base * self.config.p_good))
                if self.config.p_good < 1:
                    out.append((CatcherState(x_p, x_f, 0, BAD), base * (1 - self.config.p_good)))
        return out

    def reset(self, rng):
        w = self.config.width
        x_p = int(rng.integers(w))
        x_f = int(rng.integers(w))
        kind = GOOD
        if len(self.fruit_kinds(x_f)) == 2 and rng.random() >= self.config.p_good:
            kind = BAD
        return CatcherState(x_p, x_f, 0, kind)

    def enumerate_real(self):
        cfg = self.config
        return [
            CatcherState(x_p, x_f, y_f, kind)
            for x_p in range(cfg.width)
            for x_f in range(cfg.width)
            for y_f in range(cfg.height)
            for kind in self.fruit_kinds(x_f)
        ]


# ------------------------------------------------------------- FlappyBird

FLAPPY_ACTIONS = ("up", "noop")
STEEL, COPPER = 0, 1


class FlappyState(NamedTuple):
    y_t: int
    y_b: int
    y_a: int
    v_a: int
    dx: int
    pipe_material: int = STEEL


@dataclass(frozen=True)
class FlappyConfig:
    width: int = 15
    height: int = 10
    # gap rows as (y_b, y_t), inclusive; y grows upward from the ground at 0
    gaps: tuple[tuple[int, int], ...] = ((1, 3), (6, 8))
    gap_probs: tuple[float, ...] = (0.5, 0.5)
    copper_prob: float = 0.5
    start_y: int = 5
    flap_velocity: int = 2
    max_fall: int = 2
    high_threshold: int = 6
    low_threshold: int = 3
    danger_threshold: int = 5
    proximity: int = 3
    pass_reward: float = 10.0
    crash_reward: float = -10.0
    shaping: float = 0.1
    danger_penalty: float = -100.0
    horizon: int = 200

    def __post_init__(self):
        if len(self.gaps) != len(self.gap_probs):
            raise ValueError("gaps and gap_probs must have equal length")
        for lo, hi in self.gaps:
            if not 0 <= lo <= hi < self.height:
                raise ValueError(f"gap ({lo}, {hi}) outside the grid")
        if not 0 <= self.start_y < self.height:
            raise ValueError("start_y outside the grid")
        if not 0.0 <= self.copper_prob <= 1.0:
            raise ValueError("copper_prob must lie in [0, 1]")


class FlappyBird(Env):
    """Bird flies toward a single pipe; the episode ends at the pipe or on a crash.

    Copper pipes exist only in the target and only for gaps lying wholly below
    the danger threshold. Near a copper pipe, flying high is penalized heavily
    and flying low earns the shaping bonus instead.
    """

    actions = FLAPPY_ACTIONS
    real_fields = ("y_t", "y_b", "y_a", "v_a", "dx", "pipe_material")
    sim_fields = ("y_t", "y_b", "y_a", "v_a", "dx")

    def __init__(self, config: FlappyConfig | None = None, target: bool = False):
        self.config = config or FlappyConfig()
        self.target = target
        self.horizon = self.config.horizon

    def sim_observe(self, s) -> tuple:
        return (s[0], s[1], s[2], s[3], s[4])

    def is_terminal(self, s) -> bool:
        return s[4] <= 0

    def copper_possible(self, y_t: int) -> bool:
        return self.target and y_t < self.config.danger_threshold

    def materials(self, y_t: int) -> tuple[int, ...]:
        return (STEEL, COPPER) if self.copper_possible(y_t) else (STEEL,)

    def step(self, s, a):
        self.check_action(a)
        s = FlappyState(*s)
        if self.is_terminal(s):
            return s, 0.0, True
        cfg = self.config
        if a == 0:
            v = cfg.flap_velocity
        else:
            v = max(s.v_a - 1, -cfg.max_fall)
        y = s.y_a + v
        if y > cfg.height - 1:
            y, v = cfg.height - 1, 0
        dx = s.dx - 1
        if y < 0:
            return FlappyState(s.y_t, s.y_b, 0, v, dx, s.pipe_material), cfg.crash_reward, True
        nxt = FlappyState(s.y_t, s.y_b, y, v, dx, s.pipe_material)
        if dx == 0:
            r = cfg.pass_reward if s.y_b <= y <= s.y_t else cfg.crash_reward
            return nxt, r, True
        r = 0.0
        if s.pipe_material == COPPER:
            if y <= cfg.low_threshold:
                r += cfg.shaping
            if y >= cfg.danger_threshold and dx <= cfg.proximity:
                r += cfg.danger_penalty
        elif y >= cfg.high_threshold:
            r += cfg.shaping
        return nxt, r, False

    def start_distribution(self):
        cfg = self.config
        out = []
        for (y_b, y_t), p in zip(cfg.gaps, cfg.gap_probs):
            if p <= 0:
                continue
            mats = self.materials(y_t)
            if len(mats) == 1:
                out.append((FlappyState(y_t, y_b, cfg.start_y, 0, cfg.width - 1, STEEL), p))
                continue
            if cfg.copper_prob < 1:
                out.append((FlappyState(y_t, y_b, cfg.start_y, 0, cfg.width - 1, STEEL),
                            p * (1 - cfg.copper_prob)))
            if cfg.copper_prob > 0:
                out.append((FlappyState(y_t, y_b, cfg.start_y, 0, cfg.width - 1, COPPER),
                            p * cfg.copper_prob))
        return out

    def reset(self, rng):
        cfg = self.config
        probs = np.asarray(cfg.gap_probs, dtype=float)
        g = int(rng.choice(len(cfg.gaps), p=probs / probs.sum()))
        y_b, y_t = cfg.gaps[g]
        mat = STEEL
        if self.copper_possible(y_t) and rng.random() < cfg.copper_prob:
            mat = COPPER
        return FlappyState(y_t, y_b, cfg.start_y, 0, cfg.width - 1, mat)

    def enumerate_real(self):
        cfg = self.config
        return [
            FlappyState(y_t, y_b, y, v, dx, mat)
            for y_b, y_t in cfg.gaps
            for y in range(cfg.height)
            for v in range(-cfg.max_fall, cfg.flap_velocity + 1)
            for dx in range(cfg.width)
            for mat in self.materials(y_t)
        ]


# ---------------------------------------------------------------- pairing

@dataclass
class EnvPair:
    domain: str
    source: Env
    target: Env
    seed: int = 0
    config: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.source.actions != self.target.actions:
            raise DomainError("source and target must share one action set")
        if self.source.sim_fields != self.target.sim_fields:
            raise DomainError("source and target must share the sim state schema")

    @property
    def actions(self) -> tuple[str, ...]:
        return self.target.actions

    @property
    def horizon(self) -> int:
        return self.target.horizon


DOMAINS = ("catcher", "flappybird")


def make_env_pair(domain: str, config=None, seed: int = 0) -> EnvPair:
    if domain == "catcher":
        cfg = config or CatcherConfig()
        return EnvPair(domain, Catcher(cfg, target=False), Catcher(cfg, target=True), seed, cfg)
    if domain == "flappybird":
        cfg = config or FlappyConfig()
        return EnvPair(domain, FlappyBird(cfg, target=False), FlappyBird(cfg, target=True), seed, cfg)
    raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")


def rollout(env: Env, policy, rng: np.random.Generator, max_steps: int | None = None):
    """Run one episode of ``policy(real_state) -> action``; yields ``(s, a, r)``."""
    s = env.reset(rng)
    for _ in range(max_steps or env.horizon):
        if env.is_terminal(s):
            return
        a = policy(s)
        s_next, r, done = env.step(s, a)
        yield s, a, r
        s = s_next
        if done:
            return


def write_states_csv(path, env: Env, states: Sequence[tuple], real: bool = True) -> None:
    import csv

    fields = env.real_fields if real else env.sim_fields
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for s in states:
            w.writerow(list(s))

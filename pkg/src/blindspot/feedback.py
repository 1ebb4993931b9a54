"""Oracle feedback protocols producing per-sim-state noisy label lists.

Label 1 signals "unacceptable / blind spot", 0 signals "acceptable". One
budget unit is one labeled real-state visit, for every protocol.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .envs import Env
from .oracle import Oracle
from .tabular import Policy

PROTOCOLS = ("R-A", "R-AM", "D-A", "D-AM", "C")
# protocols whose 1-labels are never false alarms
NO_AM_NOISE = frozenset({"R-A", "D-A", "C"})


class LabelEvent(NamedTuple):
    sim: tuple
    label: int
    episode: int
    step: int
    real: tuple


@dataclass
class FeedbackDataset:
    protocol: str
    events: list[LabelEvent] = field(default_factory=list)
    seed: int | None = None
    budget: int | None = None

    @property
    def labels(self) -> dict[tuple, list[int]]:
        out: dict[tuple, list[int]] = {}
        for e in self.events:
            out.setdefault(e.sim, []).append(e.label)
        return out

    @property
    def total(self) -> int:
        return len(self.events)

    @property
    def states(self) -> list[tuple]:
        return list(dict.fromkeys(e.sim for e in self.events))

    def __len__(self) -> int:
        return len(self.events)

    def to_csv(self, path, env: Env) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["protocol", *env.sim_fields, "label", "episode", "step", "real_state"])
            for e in self.events:
                w.writerow([self.protocol, *e.sim, e.label, e.episode, e.step,
                            "|".join(str(v) for v in e.real)])

    @classmethod
    def from_csv(cls, path, n_sim_fields: int) -> FeedbackDataset:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        if not rows:
            return cls("unknown")
        k = n_sim_fields
        events = [
            LabelEvent(tuple(int(v) for v in r[1:1 + k]), int(r[1 + k]), int(r[2 + k]),
                       int(r[3 + k]), tuple(int(v) for v in r[4 + k].split("|")))
            for r in rows
        ]
        return cls(rows[0][0], events)


def _decision_states(env: Env) -> list[tuple]:
    return [s for s in env.enumerate_real() if not env.is_terminal(s)]


def _collect_random(oracle: Oracle, pi_sim: Policy, env: Env, budget: int, seed: int,
                    protocol: str) -> FeedbackDataset:
    reals = _decision_states(env)
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(reals), size=budget) if budget > 0 else []
    events = []
    for i, j in enumerate(picks):
        s = reals[j]
        sim = env.sim_observe(s)
        a = pi_sim(sim)
        if protocol == "R-A":
            label = oracle.acceptable(s, a)
        else:
            label = int(a != oracle(s))
        events.append(LabelEvent(sim, label, i, 0, tuple(s)))
    return FeedbackDataset(protocol, events, seed, budget)


def collect_random_acceptable(oracle, pi_sim, env, budget, seed) -> FeedbackDataset:
    """Uniform real states (with replacement); label = acceptability of the agent's action."""
    return _collect_random(oracle, pi_sim, env, budget, seed, "R-A")


def collect_random_action_mismatch(oracle, pi_sim, env, budget, seed) -> FeedbackDataset:
    """Uniform real states; label = 1 whenever the agent's action differs from the oracle's."""
    return _collect_random(oracle, pi_sim, env, budget, seed, "R-AM")


def _episodes(env: Env, budget: int, rng, step_fn):
    """Drive episodes from ``env.reset`` until ``budget`` labels are emitted.

    ``step_fn(s)`` returns ``(label, action_to_execute)``.
    """
    events = []
    ep = empty = 0
    while len(events) < budget:
        s = env.reset(rng)
        n_before = len(events)
        for t in range(env.horizon):
            if env.is_terminal(s) or len(events) >= budget:
                break
            label, a = step_fn(s)
            events.append(LabelEvent(env.sim_observe(s), label, ep, t, tuple(s)))
            s, _, done = env.step(s, a)
            if done:
                break
        empty = empty + 1 if len(events) == n_before else 0
        if empty > 1000:
            raise RuntimeError("episodes produce no labeled states; check the start distribution")
        ep += 1
    return events


def collect_demo(oracle: Oracle, pi_sim: Policy, env: Env, budget: int, seed: int,
                 resolve: str = "mismatch_only") -> FeedbackDataset:
    """Oracle demonstrations; the agent compares its own action at each visited state.

    ``resolve="mismatch_only"`` gives D-AM (mismatch = 1). ``resolve="acceptable"``
    gives D-A: each mismatch is reviewed with the acceptable function.
    """
    if resolve not in ("mismatch_only", "acceptable"):
        raise ValueError(f"unknown resolve mode {resolve!r}")
    rng = np.random.default_rng(seed)

    def step(s):
        a_o = oracle(s)
        a_s = pi_sim(env.sim_observe(s))
        if a_s == a_o:
            return 0, a_o
        if resolve == "acceptable":
            return oracle.acceptable(s, a_s), a_o
        return 1, a_o

    protocol = "D-A" if resolve == "acceptable" else "D-AM"
    return FeedbackDataset(protocol, _episodes(env, budget, rng, step), seed, budget)


def collect_corrections(oracle: Oracle, pi_sim: Policy, env: Env, budget: int,
                        seed: int) -> FeedbackDataset:
    """Agent acts; the oracle interrupts unacceptable actions and substitutes its own."""
    rng = np.random.default_rng(seed)

    def step(s):
        a_s = pi_sim(env.sim_observe(s))
        if oracle.acceptable(s, a_s):
            return 1, oracle(s)
        return 0, a_s

    return FeedbackDataset("C", _episodes(env, budget, rng, step), seed, budget)


def collect(protocol: str, oracle, pi_sim, env, budget, seed) -> FeedbackDataset:
    if protocol == "R-A":
        return collect_random_acceptable(oracle, pi_sim, env, budget, seed)
    if protocol == "R-AM":
        return collect_random_action_mismatch(oracle, pi_sim, env, budget, seed)
    if protocol == "D-A":
        return collect_demo(oracle, pi_sim, env, budget, seed, resolve="acceptable")
    if protocol == "D-AM":
        return collect_demo(oracle, pi_sim, env, budget, seed, resolve="mismatch_only")
    if protocol == "C":
        return collect_corrections(oracle, pi_sim, env, budget, seed)
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")

"""Simulated oracle: acceptable-action function plus the target-optimal policy."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .envs import Env, EnvPair
from .tabular import Policy, QTable, greedy_policy

ORACLE_MODES = ("strict", "lenient")
# Q-values closer than this to the row maximum count as tied for strict mode
TIE_TOL = 1e-9


@dataclass
class AcceptableFunction:
    q_real: QTable
    mode: str
    percentile: float | None = None
    delta: float | None = None
    include_zero_deltas: bool = True
    tie_tol: float = TIE_TOL

    def __post_init__(self):
        gaps = self.q_real.values.max(axis=1, keepdims=True) - self.q_real.values
        if self.mode == "strict":
            bad = gaps > self.tie_tol
        else:
            bad = (gaps >= self.delta) & (gaps > self.tie_tol)
        self.unacceptable = bad.astype(np.int8)
        self.unacceptable.setflags(write=False)

    def __call__(self, s, a: int) -> int:
        return int(self.unacceptable[self.q_real.index[tuple(s)], a])

    def acceptable_actions(self, s) -> list[int]:
        row = self.unacceptable[self.q_real.index[tuple(s)]]
        return [a for a in range(len(row)) if row[a] == 0]


def q_deltas(q_real: QTable, env: Env | None = None, include_zero: bool = True) -> np.ndarray:
    """Pool of ``Q(s, a*) - Q(s, a)`` over every state and action, sorted ascending.

    Terminal states (no decision is made there) are left out when ``env`` is given.
    """
    vals = q_real.values
    if env is not None:
        keep = np.array([not env.is_terminal(k) for k in q_real.keys])
        vals = vals[keep]
    d = (vals.max(axis=1, keepdims=True) - vals).ravel()
    if not include_zero:
        d = d[d > 0]
    return np.sort(d)


def build_acceptable(q_real: QTable, mode: str = "strict", percentile: float | None = None,
                     env: Env | None = None, include_zero_deltas: bool = True) -> AcceptableFunction:
    if mode not in ORACLE_MODES:
        raise ValueError(f"oracle mode must be one of {ORACLE_MODES}, got {mode!r}")
    if mode == "strict":
        return AcceptableFunction(q_real, "strict")
    if percentile is None or not 0.0 < percentile < 1.0:
        raise ValueError(f"lenient percentile must lie in (0, 1), got {percentile!r}")
    pool = q_deltas(q_real, env, include_zero_deltas)
    if pool.size == 0:
        raise ValueError("empty Q-delta pool")
    delta = float(np.quantile(pool, percentile, method="linear"))
    return AcceptableFunction(q_real, "lenient", percentile, delta, include_zero_deltas)


def is_acceptable(A: AcceptableFunction, s, a: int) -> int:
    """0 when ``a`` is acceptable in real state ``s``, 1 otherwise."""
    return A(s, a)


@dataclass
class Oracle:
    acceptable: AcceptableFunction
    policy: Policy

    def __call__(self, s) -> int:
        return self.policy(s)


def make_oracle(q_real: QTable, mode="strict", percentile=None, env=None,
                include_zero_deltas=True) -> Oracle:
    A = build_acceptable(q_real, mode, percentile, env, include_zero_deltas)
    return Oracle(A, greedy_policy(q_real))


def oracle_policy_action(oracle: Oracle, s) -> int:
    return oracle.policy(s)


@dataclass
class BlindSpotTruth:
    sim_states: list[tuple]
    label: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)

    def __getitem__(self, s) -> int:
        return self.label[tuple(s)]

    def labels(self, states=None) -> np.ndarray:
        states = self.sim_states if states is None else states
        return np.array([self.label[tuple(s)] for s in states], dtype=np.int8)

    @property
    def blind_spots(self) -> list[tuple]:
        return [s for s in self.sim_states if self.label[s]]

    def to_csv(self, path, env: Env) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(env.sim_fields) + ["blind_spot"]
                       + [f"witness_{f}" for f in env.real_fields])
            for s in self.sim_states:
                wit = self.witness.get(s)
                w.writerow(list(s) + [self.label[s]]
                           + (list(wit) if wit is not None else [""] * len(env.real_fields)))


def ground_truth_blind_spots(pair: EnvPair, pi_sim: Policy, A: AcceptableFunction) -> BlindSpotTruth:
    """Label every sim state by checking all of its real preimages.

    A sim state is a blind spot when the agent's action there is unacceptable
    in at least one real state projecting onto it; the first such real state
    (enumeration order) is kept as witness.
    """
    env = pair.target
    sims, reals = env.enumerate_states()
    truth = BlindSpotTruth(sims, {s: 0 for s in sims})
    for s in reals:
        sim = env.sim_observe(s)
        if truth.label[sim]:
            continue
        if A(s, pi_sim(sim)):
            truth.label[sim] = 1
            truth.witness[sim] = tuple(s)
    return truth

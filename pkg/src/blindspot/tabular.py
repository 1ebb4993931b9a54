"""Tabular action-value learning over enumerable environments.

Environments here have deterministic transitions (randomness only at reset),
so one call to ``env.step`` per state-action pair gives the exact model. Both
Q-learning and value iteration run over those tables.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .envs import DEFAULT_STATE_CAP, Env, StateSpaceTooLarge

SPACES = ("sim", "real")


@dataclass
class TabularMDP:
    keys: list[tuple]
    index: dict
    next_state: np.ndarray  # (n, A) int64
    reward: np.ndarray  # (n, A) float64
    done: np.ndarray  # (n, A) bool
    terminal: np.ndarray  # (n,) bool
    start_index: np.ndarray
    start_prob: np.ndarray

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]


def build_mdp(env: Env, space: str = "real", cap: int = DEFAULT_STATE_CAP) -> TabularMDP:
    """Tabulate ``env`` keyed by real states or by their sim projections.

    Keying by sim state is only legal when the projection is one-to-one on
    this environment, i.e. on a source environment with no hidden feature.
    """
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    reals = env.enumerate_real()
    if len(reals) > cap:
        raise StateSpaceTooLarge(f"{len(reals)} states exceeds cap {cap}")
    key = env.sim_observe if space == "sim" else (lambda s: tuple(s))
    keys = [key(s) for s in reals]
    index = {k: i for i, k in enumerate(keys)}
    if len(index) != len(keys):
        raise ValueError("sim projection is not one-to-one on this environment; train on 'real'")
    n, n_act = len(keys), len(env.actions)
    nxt = np.zeros((n, n_act), dtype=np.int64)
    rew = np.zeros((n, n_act))
    done = np.zeros((n, n_act), dtype=bool)
    terminal = np.zeros(n, dtype=bool)
    for i, s in enumerate(reals):
        terminal[i] = env.is_terminal(s)
        for a in range(n_act):
            s2, r, d = env.step(s, a)
            nxt[i, a] = index[key(s2)]
            rew[i, a] = r
            done[i, a] = d
    starts = env.start_distribution()
    start_index = np.array([index[key(s)] for s, _ in starts], dtype=np.int64)
    start_prob = np.array([p for _, p in starts], dtype=float)
    start_prob /= start_prob.sum()
    return TabularMDP(keys, index, nxt, rew, done, terminal, start_index, start_prob)


@dataclass
class QTable:
    keys: list[tuple]
    values: np.ndarray  # (n_states, n_actions)
    fields: tuple[str, ...]
    actions: tuple[str, ...]
    space: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.values.setflags(write=False)

    def __getitem__(self, s) -> np.ndarray:
        return self.values[self.index[tuple(s)]]

    def __len__(self) -> int:
        return len(self.keys)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.fields) + ["action", "value"])
            for k, row in zip(self.keys, self.values):
                for a, v in enumerate(row):
                    w.writerow(list(k) + [self.actions[a], repr(float(v))])

    @classmethod
    def from_csv(cls, path, actions, space="real") -> QTable:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        fields = tuple(header[:-2])
        act_index = {a: i for i, a in enumerate(actions)}
        index: dict = {}
        keys: list = []
        vals: list = []
        for row in body:
            k = tuple(int(x) for x in row[:-2])
            if k not in index:
                index[k] = len(keys)
                keys.append(k)
                vals.append([0.0] * len(actions))
            vals[index[k]][act_index[row[-2]]] = float(row[-1])
        return cls(keys, np.array(vals), fields, tuple(actions), space)


@dataclass
class Policy:
    keys: list[tuple]
    actions: np.ndarray
    tie_break: str = "lowest-index"

    def __post_init__(self):
        self.index = {k: i for i, k in enumerate(self.keys)}

    def __call__(self, s) -> int:
        return int(self.actions[self.index[tuple(s)]])


def greedy_policy(q: QTable) -> Policy:
    # np.argmax returns the first maximal entry: lowest action index wins ties
    return Policy(list(q.keys), np.argmax(q.values, axis=1).astype(np.int64))


@dataclass(frozen=True)
class QLearningParams:
    episodes: int = 300_000
    alpha: float = 1.0
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.8
    exploring_starts: bool = True
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        for name in ("eps_start", "eps_end", "eps_decay_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@numba.njit(cache=True)
def _q_learning(nxt, rew, done, terminal, start_idx, start_cdf, episodes, horizon,
                alpha, gamma, eps0, eps1, decay_eps, seed):
    np.random.seed(seed)
    n, n_act = rew.shape
    q = np.zeros((n, n_act))
    for ep in range(episodes):
        if ep < decay_eps:
            eps = eps0 + (eps1 - eps0) * ep / decay_eps
        else:
            eps = eps1
        j = np.searchsorted(start_cdf, np.random.random(), side="right")
        if j >= start_idx.shape[0]:
            j = start_idx.shape[0] - 1
        s = start_idx[j]
        for _ in range(horizon):
            if terminal[s]:
                break
            if np.random.random() < eps:
                a = np.random.randint(n_act)
            else:
                a = 0
                for b in range(1, n_act):
                    if q[s, b] > q[s, a]:
                        a = b
            s2 = nxt[s, a]
            target = rew[s, a]
            if not done[s, a]:
                best = q[s2, 0]
                for b in range(1, n_act):
                    if q[s2, b] > best:
                        best = q[s2, b]
                target += gamma * best
            q[s, a] += alpha * (target - q[s, a])
            if not np.isfinite(q[s, a]):
                return q, ep
            if done[s, a]:
                break
            s = s2
    return q, -1


def train_q(env: Env, space: str = "real", params: QLearningParams | None = None,
            mdp: TabularMDP | None = None) -> QTable:
    """Q-learning with linearly decaying epsilon-greedy exploration.

    With ``exploring_starts`` each episode begins at a uniformly drawn
    non-terminal state, otherwise at a draw from the environment's reset
    distribution. Deterministic for a fixed ``params.seed``.
    """
    params = params or QLearningParams()
    params.validate()
    mdp = mdp or build_mdp(env, space)
    if params.exploring_starts:
        start_idx = np.flatnonzero(~mdp.terminal).astype(np.int64)
        start_cdf = np.arange(1, len(start_idx) + 1) / len(start_idx)
    else:
        start_idx = mdp.start_index
        start_cdf = np.cumsum(mdp.start_prob)
    decay = max(1, int(params.episodes * params.eps_decay_frac))
    q, bad_ep = _q_learning(mdp.next_state, mdp.reward, mdp.done, mdp.terminal,
                            start_idx, start_cdf, params.episodes, env.horizon,
                            params.alpha, params.gamma, params.eps_start, params.eps_end,
                            decay, params.seed)
    if bad_ep >= 0:
        raise FloatingPointError(f"non-finite Q-value during episode {bad_ep}")
    fields = env.sim_fields if space == "sim" else env.real_fields
    return QTable(mdp.keys, q, fields, env.actions, space,
                  meta={"algorithm": "q-learning", **asdict(params)})


class NoConvergence(RuntimeError):
    pass


def value_iteration(env: Env, space: str = "real", gamma: float = 0.95, tol: float = 1e-10,
                    max_iter: int = 100_000, mdp: TabularMDP | None = None) -> QTable:
    """Exhaustive Bellman-optimality sweeps until the max update is below ``tol``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    mdp = mdp or build_mdp(env, space)
    cont = ~mdp.done
    q = np.zeros_like(mdp.reward)
    for it in range(max_iter):
        v = q.max(axis=1)
        q_new = mdp.reward + gamma * cont * v[mdp.next_state]
        delta = np.abs(q_new - q).max()
        q = q_new
        if delta < tol:
            break
    else:
        raise NoConvergence(f"value iteration did not reach tol={tol} in {max_iter} sweeps")
    fields = env.sim_fields if space == "sim" else env.real_fields
    return QTable(mdp.keys, q, fields, env.actions, space,
                  meta={"algorithm": "value-iteration", "gamma": gamma, "tol": tol,
                        "iterations": it + 1})


def bellman_residual(q: QTable, mdp: TabularMDP, gamma: float) -> np.ndarray:
    v = q.values.max(axis=1)
    return np.abs(mdp.reward + gamma * (~mdp.done) * v[mdp.next_state] - q.values)

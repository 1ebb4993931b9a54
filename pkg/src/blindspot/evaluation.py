"""Seen/unseen weighted F1 and oracle-in-the-loop execution."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .envs import Env, EnvPair, rollout
from .feedback import FeedbackDataset
from .model import BlindSpotModel, f1_score
from .oracle import BlindSpotTruth, Oracle
from .tabular import Policy

CONDITIONS = ("model", "never-query", "always-query")


class EmptySplit(ValueError):
    pass


@dataclass
class EvalSplit:
    seen: list[tuple]
    unseen: list[tuple]
    weights: dict

    def weight_vector(self, states) -> np.ndarray:
        return np.array([self.weights[s] for s in states])


def visitation_weights(env: Env, pi_sim: Policy, rollouts: int, seed) -> dict:
    """Add-one-smoothed, normalized sim-state visit frequencies of ``pi_sim`` in ``env``."""
    sims, _ = env.enumerate_states()
    counts = dict.fromkeys(sims, 1.0)
    rng = np.random.default_rng(seed)
    act = lambda s: pi_sim(env.sim_observe(s))
    for _ in range(rollouts):
        for s, _, _ in rollout(env, act, rng):
            counts[env.sim_observe(s)] += 1.0
    total = sum(counts.values())
    return {s: c / total for s, c in counts.items()}


def make_split(feedback: FeedbackDataset, pair: EnvPair, pi_sim: Policy, rollouts: int = 1000,
               seed=0, weights: dict | None = None) -> EvalSplit:
    """Seen = sim states holding at least one label; unseen = every other sim state."""
    sims, _ = pair.target.enumerate_states()
    seen_set = set(feedback.labels)
    seen = [s for s in sims if s in seen_set]
    unseen = [s for s in sims if s not in seen_set]
    if weights is None:
        weights = visitation_weights(pair.target, pi_sim, rollouts, seed)
    return EvalSplit(seen, unseen, weights)


def weighted_f1(m: BlindSpotModel | dict, states, truth: BlindSpotTruth, weights) -> float:
    """Importance-weighted F1 on the blind-spot class over ``states``.

    ``m`` is a model or a precomputed ``{sim_state: predicted_label}`` map;
    ``weights`` a ``{sim_state: weight}`` map.
    """
    if not states:
        raise EmptySplit("weighted F1 over an empty state set")
    if isinstance(m, BlindSpotModel):
        pred = m.classify(np.array(states, dtype=float))
    else:
        pred = np.array([m[s] for s in states])
    w = np.array([weights[s] for s in states])
    return f1_score(truth.labels(states), pred, w)


@dataclass
class OILResult:
    condition: str
    mean_reward: float
    reward_std: float
    query_rate: float
    episodes: int
    steps: int
    queries: int
    seed: int


def oil_run(env: Env, pi_sim: Policy, oracle: Oracle, condition: str = "model",
            model: BlindSpotModel | None = None, episodes: int = 100, seed=0,
            flags: dict | None = None) -> OILResult:
    """Execute ``pi_sim`` in the target, handing control to the oracle on flagged states.

    ``model`` flags sim states it classifies as blind spots; ``flags`` can pass
    a precomputed ``{sim_state: 0/1}`` map instead.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if condition == "model" and flags is None:
        if model is None:
            raise ValueError("model condition needs a model or flags")
        sims, _ = env.enumerate_states()
        flags = dict(zip(sims, model.classify(np.array(sims, dtype=float)).tolist()))
    rng = np.random.default_rng(seed)
    returns = []
    steps = queries = 0
    for _ in range(episodes):
        s = env.reset(rng)
        total = 0.0
        for _ in range(env.horizon):
            if env.is_terminal(s):
                break
            sim = env.sim_observe(s)
            if condition == "always-query" or (condition == "model" and flags[sim]):
                a = oracle(s)
                queries += 1
            else:
                a = pi_sim(sim)
            s, r, done = env.step(s, a)
            total += r
            steps += 1
            if done:
                break
        returns.append(total)
    returns = np.array(returns)
    return OILResult(condition, float(returns.mean()), float(returns.std()),
                     queries / steps if steps else 0.0, episodes, steps, queries, int(seed))


def bias_heatmap(feedback: FeedbackDataset) -> Counter:
    """Label-event count per sim state."""
    return Counter(e.sim for e in feedback.events)


def write_heatmap(path, counts: Counter, sim_fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*sim_fields, "count"])
        for s in sorted(counts):
            w.writerow([*s, counts[s]])

"""Label aggregation: single-channel Dawid-Skene EM plus MV and AL baselines.

All labels come through one feedback channel, so there is one 2x2 confusion
matrix (rows: true class safe/blind spot, columns: observed label 0/1) and one
class prior. The constrained variant pins the safe row to ``[1, 0]``: a safe
state never produces a 1.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .feedback import NO_AM_NOISE, FeedbackDataset

AGGREGATORS = ("ds", "ds-constrained", "ds-original", "mv", "al")


class EmptyDataset(ValueError):
    pass


@dataclass
class NoiseModel:
    prior: float
    confusion: np.ndarray

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=float)
        if self.confusion.shape != (2, 2):
            raise ValueError("confusion must be 2x2")
        if np.any(self.confusion < 0) or np.any(self.confusion > 1):
            raise ValueError("confusion entries must lie in [0, 1]")
        if not np.allclose(self.confusion.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("confusion rows must sum to 1")

    @classmethod
    def from_rates(cls, prior, false_alarm, hit) -> NoiseModel:
        """``false_alarm`` = P(obs 1 | safe), ``hit`` = P(obs 1 | blind spot)."""
        return cls(prior, np.array([[1 - false_alarm, false_alarm], [1 - hit, hit]]))

    def to_dict(self) -> dict:
        return {"prior": self.prior, "confusion": self.confusion.tolist()}


@dataclass
class AggregatedDataset:
    states: list[tuple]
    label: np.ndarray
    confidence: np.ndarray
    method: str
    posterior: np.ndarray | None = None
    noise: NoiseModel | None = None
    iterations: int = 0
    log_likelihood: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def to_csv(self, path, sim_fields) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*sim_fields, "label", "confidence"])
            for s, l, c in zip(self.states, self.label, self.confidence):
                w.writerow([*s, int(l), repr(float(c))])

    @classmethod
    def from_csv(cls, path, method="csv") -> AggregatedDataset:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        states = [tuple(int(v) for v in r[:-2]) for r in rows]
        return cls(states, np.array([int(r[-2]) for r in rows], dtype=np.int8),
                   np.array([float(r[-1]) for r in rows]), method)

    def noise_json(self) -> str:
        return json.dumps({"method": self.method, "iterations": self.iterations,
                           "noise": self.noise.to_dict() if self.noise else None},
                          sort_keys=True, indent=2)


def label_counts(d: FeedbackDataset):
    labels = d.labels
    states = list(labels)
    n1 = np.array([sum(v) for v in labels.values()], dtype=float)
    n = np.array([len(v) for v in labels.values()], dtype=float)
    return states, n - n1, n1


def _log_terms(n0, n1, prior, false_alarm, hit):
    # 0 * log(0) is taken as 0 so a zero rate only excludes states that saw that label
    with np.errstate(divide="ignore", invalid="ignore"):
        def ll(k, p):
            return np.where(k > 0, k * np.log(p), 0.0)
        log_bs = np.log(prior) + ll(n1, hit) + ll(n0, 1 - hit)
        log_safe = np.log(1 - prior) + ll(n1, false_alarm) + ll(n0, 1 - false_alarm)
    return log_bs, log_safe


def posterior(n0, n1, noise: NoiseModel):
    """Per-state P(blind spot | counts) and the observed-data log-likelihood."""
    n0, n1 = np.asarray(n0, float), np.asarray(n1, float)
    log_bs, log_safe = _log_terms(n0, n1, noise.prior, noise.confusion[0, 1], noise.confusion[1, 1])
    norm = np.logaddexp(log_bs, log_safe)
    with np.errstate(invalid="ignore"):
        post = np.exp(log_bs - norm)
    return post, float(norm.sum())


def _map_labels(post):
    # ties at 0.5 resolve to blind spot, as in majority_vote
    label = (post >= 0.5).astype(np.int8)
    return label, np.maximum(post, 1 - post)


def _rate(ones, total, a):
    den = total + 2 * a
    return float((ones + a) / den) if den > 0 else 0.5


def dawid_skene(d: FeedbackDataset, constrained: bool = False, tol: float = 1e-6,
                max_iters: int = 500, pseudocount: float = 0.01,
                prior_clamp: tuple[float, float] = (0.01, 0.99)) -> AggregatedDataset:
    """EM over one shared prior and confusion matrix.

    Starts from per-state label means, alternates M-step (prior, confusion
    with ``pseudocount`` smoothing) and E-step (per-state posteriors), and
    stops when no posterior moves by ``tol`` or more. ``objective`` holds the
    smoothed log-likelihood that EM maximizes; it never decreases.
    """
    states, n0, n1 = label_counts(d)
    if not states:
        raise EmptyDataset("cannot aggregate an empty feedback dataset")
    n = n0 + n1
    t = n1 / n
    a = pseudocount
    lls: list[float] = []
    objs: list[float] = []
    noise = None
    it = 0
    for it in range(1, max_iters + 1):
        prior = float(np.clip(t.mean(), *prior_clamp))
        hit = _rate(np.dot(t, n1), np.dot(t, n), a)
        false_alarm = 0.0 if constrained else _rate(np.dot(1 - t, n1), np.dot(1 - t, n), a)
        noise = NoiseModel.from_rates(prior, false_alarm, hit)
        t_new, ll = posterior(n0, n1, noise)
        penalty = a * (np.log(hit) + np.log1p(-hit)) if a > 0 else 0.0
        if a > 0 and not constrained:
            penalty += a * (np.log(false_alarm) + np.log1p(-false_alarm))
        lls.append(ll)
        objs.append(ll + penalty)
        change = np.abs(t_new - t).max()
        t = t_new
        if change < tol:
            break
    label, conf = _map_labels(t)
    method = "ds-constrained" if constrained else "ds-original"
    return AggregatedDataset(states, label, conf, method, t, noise, it, lls, objs)


def majority_vote(d: FeedbackDataset) -> AggregatedDataset:
    states, n0, n1 = label_counts(d)
    if not states:
        raise EmptyDataset("cannot aggregate an empty feedback dataset")
    label = (n1 >= n0).astype(np.int8)
    conf = np.maximum(n0, n1) / (n0 + n1)
    return AggregatedDataset(states, label, conf, "mv", posterior=n1 / (n0 + n1))


def all_labels(d: FeedbackDataset) -> AggregatedDataset:
    """One unit-weight instance per label event, no aggregation."""
    states = [e.sim for e in d.events]
    label = np.array([e.label for e in d.events], dtype=np.int8)
    return AggregatedDataset(states, label, np.ones(len(states)), "al")


def aggregate(d: FeedbackDataset, method: str = "ds", **kw) -> AggregatedDataset:
    """Dispatch by aggregator name; ``ds`` picks the variant from the protocol."""
    if method == "ds":
        return dawid_skene(d, constrained=d.protocol in NO_AM_NOISE, **kw)
    if method == "ds-constrained":
        return dawid_skene(d, constrained=True, **kw)
    if method == "ds-original":
        return dawid_skene(d, constrained=False, **kw)
    if method == "mv":
        return majority_vote(d)
    if method == "al":
        return all_labels(d)
    raise ValueError(f"unknown aggregator {method!r}; expected one of {AGGREGATORS}")

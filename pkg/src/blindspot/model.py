"""Blind-spot classifier: oversampling, randomized search, threshold calibration."""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregatedDataset
from .forest import ForestClassifier

MODEL_FORMAT = "blindspot-model"
MODEL_VERSION = 1


class DegenerateDataWarning(UserWarning):
    """Training data holds a single class."""


class SchemaError(ValueError):
    pass


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    origin: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), -1)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.w = np.asarray(self.w, dtype=float)
        if self.origin is None:
            self.origin = np.arange(len(self.y))
        if np.any(~np.isfinite(self.w)) or np.any(self.w <= 0):
            raise ValueError("instance weights must be finite and positive")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> TrainingSet:
        idx = np.asarray(idx, dtype=np.int64)
        return TrainingSet(self.X[idx], self.y[idx], self.w[idx], self.origin[idx],
                           self.feature_names)

    @property
    def prior(self) -> float:
        return float(self.y.mean()) if len(self.y) else 0.0

    @classmethod
    def from_aggregated(cls, agg: AggregatedDataset, feature_names=()) -> TrainingSet:
        X = np.array(agg.states, dtype=float)
        return cls(X, agg.label, agg.confidence, None, tuple(feature_names))


def oversample(ts: TrainingSet, seed=0) -> TrainingSet:
    """Duplicate minority-class instances (with replacement) until classes balance."""
    n1 = int(ts.y.sum())
    n0 = len(ts) - n1
    if n0 == 0 or n1 == 0:
        warnings.warn("single-class training set left unchanged", DegenerateDataWarning,
                      stacklevel=2)
        return ts
    minority = 1 if n1 < n0 else 0
    need = abs(n0 - n1)
    if need == 0:
        return ts
    rng = np.random.default_rng(seed)
    pool = np.flatnonzero(ts.y == minority)
    extra = rng.choice(pool, size=need, replace=True)
    return ts.subset(np.concatenate([np.arange(len(ts)), extra]))


def f1_score(y_true, y_pred, weights=None) -> float:
    """F1 on the positive (blind spot) class; 0 when undefined."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    w = np.ones(len(y_true)) if weights is None else np.asarray(weights, dtype=float)
    tp = w[y_true & y_pred].sum()
    fp = w[~y_true & y_pred].sum()
    fn = w[y_true & ~y_pred].sum()
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def stratified_folds(y, k: int, rng: np.random.Generator):
    y = np.asarray(y)
    fold = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(len(idx)) % k
    return [(np.flatnonzero(fold != f), np.flatnonzero(fold == f)) for f in range(k)]


@dataclass(frozen=True)
class SearchSpace:
    n_trees: tuple = (25, 50, 100)
    max_depth: tuple = (4, 8, 16, None)
    min_samples_leaf: tuple = (1, 2, 5)
    # None means every size from 1 to the number of features
    max_features: tuple | None = None

    def sample(self, rng: np.random.Generator, n_features: int) -> dict:
        feats = self.max_features or tuple(range(1, n_features + 1))
        pick = lambda opts: opts[int(rng.integers(len(opts)))]
        return {"n_trees": pick(self.n_trees), "max_depth": pick(self.max_depth),
                "min_samples_leaf": pick(self.min_samples_leaf),
                "max_features": min(pick(feats), n_features)}


def hyperparameter_search(ts: TrainingSet, space: SearchSpace | None = None, n_trials: int = 20,
                          seed=0, n_folds: int = 3):
    """Random search scored by mean positive-class F1 over stratified folds.

    Only the training part of each fold is oversampled. Returns
    ``(best_params, trials)`` with ``trials`` a list of ``(params, mean_f1)``;
    ties keep the earliest trial.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = space or SearchSpace()
    rng = np.random.default_rng(seed)
    configs = [space.sample(rng, ts.X.shape[1]) for _ in range(n_trials)]
    folds = stratified_folds(ts.y, n_folds, rng)
    fold_seeds = [int(s) for s in rng.integers(2**31 - 1, size=n_folds)]
    trials = []
    best, best_f1 = None, -1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        for hp in configs:
            scores = []
            for (tr, va), fs in zip(folds, fold_seeds):
                if len(va) == 0 or len(tr) == 0:
                    scores.append(0.0)
                    continue
                train = oversample(ts.subset(tr), fs)
                forest = ForestClassifier(seed=fs, **hp).fit(train.X, train.y, train.w)
                scores.append(f1_score(ts.y[va], forest.predict(ts.X[va])))
            mean = float(np.mean(scores))
            trials.append((hp, mean))
            if mean > best_f1:
                best, best_f1 = hp, mean
    return best, trials


def calibrate_threshold(forest: ForestClassifier, calib: TrainingSet, target_prior: float) -> float:
    """Threshold whose predicted blind-spot fraction on ``calib`` best matches ``target_prior``.

    Candidates are the distinct calibration probabilities plus 0 and 1; on equal
    error the larger threshold wins.
    """
    p = forest.predict_proba(calib.X)
    cands = np.unique(np.concatenate([p, [0.0, 1.0]]))
    best_t, best_err = 1.0, np.inf
    for t in cands[::-1]:
        err = abs(float(np.mean(p >= t)) - target_prior)
        if err < best_err - 1e-12:
            best_t, best_err = float(t), err
    return best_t


@dataclass
class BlindSpotModel:
    forest: ForestClassifier
    threshold: float
    prior: float
    feature_names: tuple[str, ...]
    report: dict = field(default_factory=dict)
    degenerate: bool = False

    def proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected features {self.feature_names}, got width {X.shape[1]}")
        return self.forest.predict_proba(X)

    def classify(self, X) -> np.ndarray:
        return (self.proba(X) >= self.threshold).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_names": list(self.feature_names),
            "feature_schema_hash": schema_hash(self.feature_names),
            "threshold": self.threshold,
            "prior": self.prior,
            "degenerate": self.degenerate,
            "report": self.report,
            "forest": self.forest.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> BlindSpotModel:
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise SchemaError("not a blindspot-model v1 file")
        names = tuple(d["feature_names"])
        if d["feature_schema_hash"] != schema_hash(names):
            raise SchemaError("feature schema hash mismatch")
        return cls(ForestClassifier.from_dict(d["forest"]), d["threshold"], d["prior"], names,
                   d["report"], d["degenerate"])


def schema_hash(names) -> str:
    return hashlib.sha256(",".join(names).encode()).hexdigest()[:16]


def save_model(m: BlindSpotModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, sort_keys=True)


def load_model(path) -> BlindSpotModel:
    with open(path) as fh:
        return BlindSpotModel.from_dict(json.load(fh))


def predict(m: BlindSpotModel, s) -> tuple[float, int]:
    p = float(m.proba([list(s)])[0])
    return p, int(p >= m.threshold)


def _calibration_split(y, frac, rng):
    calib = []
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        calib.extend(idx[:int(round(frac * len(idx)))])
    calib = np.sort(np.array(calib, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(y)), calib)
    return train, calib


def train_model(data: TrainingSet | AggregatedDataset, seed=0, space: SearchSpace | None = None,
                n_trials: int = 20, calib_frac: float = 0.3, feature_names=()) -> BlindSpotModel:
    """Fit ``M = {C, t}``: stratified calibration holdout, search, oversampled fit, threshold."""
    ts = data if isinstance(data, TrainingSet) else TrainingSet.from_aggregated(data, feature_names)
    names = ts.feature_names or tuple(f"x{i}" for i in range(ts.X.shape[1]))
    if len(ts) == 0:
        raise ValueError("cannot train on an empty training set")
    n1 = int(ts.y.sum())
    if n1 == 0 or n1 == len(ts):
        cls = int(ts.y[0])
        warnings.warn(f"all training labels are {cls}; constant model", DegenerateDataWarning,
                      stacklevel=2)
        return BlindSpotModel(ForestClassifier.constant(ts.X.shape[1], float(cls)), 0.5,
                              float(cls), names, {"n_train": len(ts), "degenerate": True}, True)
    rng = np.random.default_rng(seed)
    tr_idx, cal_idx = _calibration_split(ts.y, calib_frac, rng)
    train = ts.subset(tr_idx)
    search_seed, over_seed, forest_seed = (int(s) for s in rng.integers(2**31 - 1, size=3))
    hp, trials = hyperparameter_search(train, space, n_trials, search_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        over = oversample(train, over_seed)
    forest = ForestClassifier(seed=forest_seed, **hp).fit(over.X, over.y, over.w)
    prior = train.prior
    calib = ts.subset(cal_idx) if len(cal_idx) else train
    t = calibrate_threshold(forest, calib, prior)
    calib_frac_pred = float(np.mean(forest.predict_proba(calib.X) >= t))
    report = {
        "n_train": len(train),
        "n_calib": len(cal_idx),
        "calibrated_on_train": len(cal_idx) == 0,
        "train_prior": prior,
        "calib_predicted_fraction": calib_frac_pred,
        "calib_origin": [int(i) for i in calib.origin],
        "params": hp,
        "cv_f1": max(f for _, f in trials),
    }
    return BlindSpotModel(forest, t, prior, names, report)

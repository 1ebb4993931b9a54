"""Random forest classifier with instance weights (binary, Gini impurity).

Features are bucketed by their distinct training values, so each node split
scan is a histogram pass instead of a sort. Trees are grown in numba.

Seeding: a master ``numpy.random.Generator`` built from ``seed`` draws one
31-bit seed per tree, in tree order. That tree seed drives both its bootstrap
sample and the per-node feature shuffles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class ForestConfigError(ValueError):
    pass


@numba.njit(cache=True)
def _grow_tree(codes, bin_vals, n_bins, y, w, cnt, idx, max_depth, min_leaf,
               max_features, seed, feat, thr, left, right, value):
    np.random.seed(seed)
    n_feat = codes.shape[1]
    max_bins = bin_vals.shape[1]
    h0 = np.zeros(max_bins)
    h1 = np.zeros(max_bins)
    hn = np.zeros(max_bins, np.int64)
    perm = np.arange(n_feat)
    cap = feat.shape[0]
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 1
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, idx.shape[0], 0
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, lo, hi, depth = st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp]
        w0 = 0.0
        w1 = 0.0
        n = 0
        for k in range(lo, hi):
            i = idx[k]
            if y[i] == 1:
                w1 += w[i]
            else:
                w0 += w[i]
            n += cnt[i]
        tot = w0 + w1
        value[node] = w1 / tot if tot > 0 else 0.0
        feat[node] = -1
        left[node] = -1
        right[node] = -1
        if (max_depth >= 0 and depth >= max_depth) or n < 2 * min_leaf or w0 <= 0 or w1 <= 0:
            continue
        for i in range(n_feat - 1, 0, -1):
            j = np.random.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        best_score = -1.0
        best_f = -1
        best_b = -1
        seen = 0
        for fi in range(n_feat):
            if seen >= max_features and best_f >= 0:
                break
            f = perm[fi]
            nb = n_bins[f]
            for b in range(nb):
                h0[b] = 0.0
                h1[b] = 0.0
                hn[b] = 0
            bmin = nb
            bmax = -1
            for k in range(lo, hi):
                i = idx[k]
                b = codes[i, f]
                if y[i] == 1:
                    h1[b] += w[i]
                else:
                    h0[b] += w[i]
                hn[b] += cnt[i]
                if b < bmin:
                    bmin = b
                if b > bmax:
                    bmax = b
            if bmin == bmax:
                continue
            seen += 1
            l0 = 0.0
            l1 = 0.0
            ln = 0
            for b in range(bmin, bmax):
                if hn[b] == 0:
                    continue
                l0 += h0[b]
                l1 += h1[b]
                ln += hn[b]
                if ln < min_leaf or n - ln < min_leaf:
                    continue
                lw = l0 + l1
                r0 = w0 - l0
                r1 = w1 - l1
                rw = r0 + r1
                if lw <= 0 or rw <= 0:
                    continue
                score = (l0 * l0 + l1 * l1) / lw + (r0 * r0 + r1 * r1) / rw
                if score > best_score + 1e-12 * tot:
                    best_score = score
                    best_f = f
                    best_b = b
        if best_f < 0:
            continue
        # partition idx[lo:hi] so the left child's samples come first
        a = lo
        z = hi - 1
        while a <= z:
            if codes[idx[a], best_f] <= best_b:
                a += 1
            else:
                idx[a], idx[z] = idx[z], idx[a]
                z -= 1
        feat[node] = best_f
        thr[node] = 0.5 * (bin_vals[best_f, best_b] + bin_vals[best_f, best_b + 1])
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = n_nodes + 1, a, hi, depth + 1
        sp += 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = n_nodes, lo, a, depth + 1
        sp += 1
        n_nodes += 2
    return n_nodes


@numba.njit(cache=True)
def _predict(X, roots, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feat[node] >= 0:
                if X[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / roots.shape[0]
    return out


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d) -> Tree:
        return cls(np.array(d["feature"], np.int64), np.array(d["threshold"], float),
                   np.array(d["left"], np.int64), np.array(d["right"], np.int64),
                   np.array(d["value"], float))


def _bins(X):
    cols = [np.unique(X[:, f]) for f in range(X.shape[1])]
    max_bins = max(len(c) for c in cols) + 1
    bin_vals = np.zeros((X.shape[1], max_bins))
    codes = np.empty(X.shape, dtype=np.int64)
    for f, c in enumerate(cols):
        bin_vals[f, :len(c)] = c
        codes[:, f] = np.searchsorted(c, X[:, f])
    return codes, bin_vals, np.array([len(c) for c in cols], np.int64)


class ForestClassifier:
    """Bagged Gini trees with per-node random feature subsets.

    ``max_depth=None`` grows until leaves are pure or ``min_samples_leaf``
    blocks further splits. ``max_features=None`` considers every feature.
    """

    def __init__(self, n_trees=50, max_depth=None, min_samples_leaf=1, max_features=None,
                 bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[Tree] = []
        self._packed = None

    def params(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "max_features": self.max_features,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def _check(self, n_feat):
        if self.n_trees < 1:
            raise ForestConfigError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ForestConfigError("max_depth must be >= 0 or None")
        if self.min_samples_leaf < 1:
            raise ForestConfigError("min_samples_leaf must be >= 1")
        if self.max_features is not None and not 1 <= self.max_features <= n_feat:
            raise ForestConfigError(f"max_features must be in [1, {n_feat}] or None")

    def fit(self, X, y, sample_weight=None) -> ForestClassifier:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        n, n_feat = X.shape
        if n == 0:
            raise ValueError("cannot fit a forest on zero instances")
        self._check(n_feat)
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("sample weights must be finite and positive")
        codes, bin_vals, n_bins = _bins(X)
        max_depth = -1 if self.max_depth is None else int(self.max_depth)
        max_feat = n_feat if self.max_features is None else int(self.max_features)
        master = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            tree_seed = int(master.integers(2**31 - 1))
            if self.bootstrap:
                draws = np.random.default_rng(tree_seed).integers(0, n, n)
                cnt = np.bincount(draws, minlength=n).astype(np.int64)
            else:
                cnt = np.ones(n, np.int64)
            idx = np.flatnonzero(cnt).astype(np.int64)
            cap = 2 * len(idx) + 1
            feat = np.empty(cap, np.int64)
            thr = np.zeros(cap)
            lt = np.empty(cap, np.int64)
            rt = np.empty(cap, np.int64)
            val = np.zeros(cap)
            m = _grow_tree(codes, bin_vals, n_bins, y, w * cnt, cnt, idx, max_depth,
                           int(self.min_samples_leaf), max_feat, tree_seed,
                           feat, thr, lt, rt, val)
            self.trees.append(Tree(feat[:m].copy(), thr[:m].copy(), lt[:m].copy(),
                                   rt[:m].copy(), val[:m].copy()))
        self.n_features = n_feat
        self._packed = None
        return self

    def _pack(self):
        if self._packed is None:
            offs = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]]).astype(np.int64)
            shift = lambda a, o: np.where(a >= 0, a + o, -1)
            self._packed = (
                offs,
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offs)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offs)]),
                np.concatenate([t.value for t in self.trees]),
            )
        return self._packed

    def predict_proba(self, X) -> np.ndarray:
        """Probability of class 1: mean of leaf class-1 frequencies over trees."""
        if not self.trees:
            raise RuntimeError("forest is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _predict(X, *self._pack())

    def predict(self, X, threshold=0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int8)

    def to_dict(self) -> dict:
        return {"params": self.params(), "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d) -> ForestClassifier:
        f = cls(**d["params"])
        f.n_features = d["n_features"]
        f.trees = [Tree.from_dict(t) for t in d["trees"]]
        return f

    @classmethod
    def constant(cls, n_features: int, p: float) -> ForestClassifier:
        """Single-leaf forest predicting ``p`` everywhere."""
        f = cls(n_trees=1, max_depth=0, bootstrap=False)
        f.n_features = n_features
        f.trees = [Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]),
                        np.array([float(p)]))]
        return f

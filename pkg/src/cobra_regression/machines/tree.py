"""CART regression trees and random forests.

Trees split on the variance-reduction criterion, sending ``x <= threshold``
left. The builder is compiled; per-split feature subsampling draws from a
xorshift generator seeded from the caller's :class:`RngStream`, so a fitted
forest is a pure function of (data, hyperparameters, stream).
"""

import numpy as np
from numba import njit

from .exceptions import MachineError


@njit(cache=True, nogil=True)
def _next(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True, nogil=True)
def _randint(state, m):
    return np.int64((_next(state) >> np.uint64(11)) % np.uint64(m))


@njit(cache=True, nogil=True)
def _grow(XT, y, rows, max_depth, min_leaf, max_features, seed):
    n = rows.shape[0]
    d = XT.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    work = rows.copy()
    tmp = np.empty(n, np.int64)
    xs = np.empty(n)
    feats = np.arange(d)
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed) | np.uint64(1)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    n_try = d if max_features >= d else max_features

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        s = st_start[sp]
        e = st_end[sp]
        depth = st_depth[sp]
        m = e - s
        total = 0.0
        sq = 0.0
        for t in range(s, e):
            v = y[work[t]]
            total += v
            sq += v * v
        value[node] = total / m
        if (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf:
            continue
        sse = sq - total * total / m
        if sse <= 1e-14 * sq:
            continue
        parent = total * total / m

        if n_try < d:
            for a in range(n_try):
                b = a + _randint(state, d - a)
                f = feats[a]
                feats[a] = feats[b]
                feats[b] = f

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for fi in range(n_try):
            f = feats[fi]
            for t in range(m):
                xs[t] = XT[f, work[s + t]]
            order = np.argsort(xs[:m])
            cum = 0.0
            for t in range(m - 1):
                cum += y[work[s + order[t]]]
                nl = t + 1
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                a_val = xs[order[t]]
                b_val = xs[order[t + 1]]
                if b_val <= a_val:
                    continue
                rest = total - cum
                score = cum * cum / nl + rest * rest / (m - nl)
                if score > best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (a_val + b_val)
                    if thr >= b_val:
                        thr = a_val
                    best_thr = thr
        if best_f < 0 or best_score - parent <= 1e-12 * sse:
            continue

        # stable partition of work[s:e] on the chosen split
        nl = 0
        for t in range(s, e):
            if XT[best_f, work[t]] <= best_thr:
                tmp[nl] = work[t]
                nl += 1
        k = nl
        for t in range(s, e):
            if XT[best_f, work[t]] > best_thr:
                tmp[k] = work[t]
                k += 1
        for t in range(m):
            work[s + t] = tmp[t]

        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is grown first
        st_node[sp] = rc
        st_start[sp] = s + nl
        st_end[sp] = e
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = s
        st_end[sp] = s + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right, offset):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = offset
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = offset + left[node]
            else:
                node = offset + right[node]
        out[i] = node - offset
    return out


@njit(cache=True, nogil=True)
def _forest_predict(X, feature, threshold, left, right, value, offsets):
    n_trees = offsets.shape[0] - 1
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            off = offsets[t]
            node = off
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = off + left[node]
                else:
                    node = off + right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


def _check_depth(max_depth):
    if max_depth is None or max_depth < 0:
        return -1
    if int(max_depth) != max_depth:
        raise MachineError(f"max_depth must be an integer, got {max_depth}")
    return int(max_depth)


class TreeRegressor:
    """Single CART tree; ``max_depth=None`` grows until ``min_leaf`` stops it."""

    def __init__(self, max_depth=10, min_leaf=5, max_features=None):
        if min_leaf < 1:
            raise MachineError(f"min_leaf must be >= 1, got {min_leaf}")
        self.max_depth = _check_depth(max_depth)
        self.min_leaf = int(min_leaf)
        self.max_features = max_features

    def fit(self, X, y, rng=None, rows=None):
        XT = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
        y = np.ascontiguousarray(y, dtype=np.float64)
        n, d = X.shape
        mf = d if self.max_features is None else max(1, min(int(self.max_features), d))
        seed = rng.seed64() if (rng is not None and mf < d) else 1
        if rows is None:
            rows = np.arange(n, dtype=np.int64)
        (self.feature_, self.threshold_, self.left_, self.right_,
         self.value_) = _grow(XT, y, np.asarray(rows, np.int64), self.max_depth,
                              self.min_leaf, mf, seed)
        return self

    @property
    def node_count(self):
        return self.feature_.shape[0]

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(X, self.feature_, self.threshold_, self.left_, self.right_, 0)

    def predict(self, X):
        return self.value_[self.apply(X)]

    def get_state(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "feature": self.feature_.tolist(),
                "threshold": self.threshold_.tolist(),
                "left": self.left_.tolist(), "right": self.right_.tolist(),
                "value": self.value_.tolist()}

    @classmethod
    def from_state(cls, state):
        self = cls(state["max_depth"], state["min_leaf"])
        self.feature_ = np.asarray(state["feature"], np.int64)
        self.threshold_ = np.asarray(state["threshold"], np.float64)
        self.left_ = np.asarray(state["left"], np.int64)
        self.right_ = np.asarray(state["right"], np.int64)
        self.value_ = np.asarray(state["value"], np.float64)
        return self


class ForestRegressor:
    """Bagged CART trees with per-split feature subsampling, mean aggregated.

    ``max_features=None`` uses ``max(1, d // 3)`` candidate features per split.
    """

    def __init__(self, n_trees=500, max_features=None, bootstrap=True,
                 max_depth=None, min_leaf=5):
        if int(n_trees) != n_trees or n_trees < 1:
            raise MachineError(f"a forest needs trees >= 1, got {n_trees}")
        if max_features is not None and max_features < 1:
            raise MachineError(f"mtry must be >= 1, got {max_features}")
        if min_leaf < 1:
            raise MachineError(f"min_leaf must be >= 1, got {min_leaf}")
        self.n_trees = int(n_trees)
        self.max_features = max_features
        self.bootstrap = bool(bootstrap)
        self.max_depth = _check_depth(max_depth)
        self.min_leaf = int(min_leaf)

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        XT = np.ascontiguousarray(X.T)
        y = np.ascontiguousarray(y, dtype=np.float64)
        n, d = X.shape
        mf = max(1, d // 3) if self.max_features is None else min(int(self.max_features), d)
        if rng is None and (self.bootstrap or mf < d):
            raise MachineError("a randomized forest needs an RngStream")
        parts = []
        for _ in range(self.n_trees):
            if self.bootstrap:
                rows = rng.generator.integers(0, n, n).astype(np.int64)
            else:
                rows = np.arange(n, dtype=np.int64)
            seed = rng.seed64() if mf < d else 1
            parts.append(_grow(XT, y, rows, self.max_depth, self.min_leaf, mf, seed))
        self.max_features_ = mf
        self._pack(parts)
        return self

    def _pack(self, parts):
        sizes = [p[0].shape[0] for p in parts]
        self.offsets_ = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.feature_, self.threshold_, self.left_, self.right_, self.value_ = (
            np.concatenate([p[i] for p in parts]) for i in range(5))

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _forest_predict(X, self.feature_, self.threshold_, self.left_,
                               self.right_, self.value_, self.offsets_)

    def get_state(self):
        return {"n_trees": self.n_trees, "max_features": self.max_features_,
                "offsets": self.offsets_.tolist(),
                "feature": self.feature_.tolist(),
                "threshold": self.threshold_.tolist(),
                "left": self.left_.tolist(), "right": self.right_.tolist(),
                "value": self.value_.tolist()}

    @classmethod
    def from_state(cls, state):
        self = cls(state["n_trees"], state["max_features"])
        self.max_features_ = state["max_features"]
        self.offsets_ = np.asarray(state["offsets"], np.int64)
        self.feature_ = np.asarray(state["feature"], np.int64)
        self.threshold_ = np.asarray(state["threshold"], np.float64)
        self.left_ = np.asarray(state["left"], np.int64)
        self.right_ = np.asarray(state["right"], np.int64)
        self.value_ = np.asarray(state["value"], np.float64)
        return self

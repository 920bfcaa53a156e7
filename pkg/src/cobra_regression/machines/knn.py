"""Brute-force k-nearest-neighbour regression (Euclidean metric)."""

import numpy as np

from .exceptions import MachineError

# upper bound on query_chunk * n_train * d floats held at once
_CHUNK_BUDGET = 4_000_000


class KNNRegressor:
    """Average response of the ``k`` nearest training points.

    Distances are exact squared Euclidean distances (no Gram-matrix
    expansion), so a query equal to a training row is at distance 0 from it.
    Ties are broken by training-row order. ``k`` larger than the training set
    is clipped to the training size; ``k=None`` picks ``max(1, round(sqrt(n)))``.
    """

    def __init__(self, k=None):
        if k is not None and (int(k) != k or k < 1):
            raise MachineError(f"knn needs integer k >= 1, got {k}")
        self.k = None if k is None else int(k)

    def fit(self, X, y, rng=None):
        self.X_ = np.ascontiguousarray(X, dtype=np.float64)
        self.y_ = np.ascontiguousarray(y, dtype=np.float64)
        n = self.X_.shape[0]
        k = self.k if self.k is not None else max(1, int(round(np.sqrt(n))))
        self.k_ = min(k, n)
        return self

    def kneighbors(self, X):
        X = np.asarray(X, dtype=np.float64)
        n, d = self.X_.shape
        step = max(1, _CHUNK_BUDGET // max(1, n * d))
        out = np.empty((X.shape[0], self.k_), dtype=np.intp)
        for s in range(0, X.shape[0], step):
            diff = X[s:s + step, None, :] - self.X_[None, :, :]
            dist = np.einsum("qnd,qnd->qn", diff, diff)
            out[s:s + step] = np.argsort(dist, axis=1, kind="stable")[:, :self.k_]
        return out

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.empty(0)
        return self.y_[self.kneighbors(X)].mean(axis=1)

    def get_state(self):
        return {"k": self.k_, "X": self.X_.tolist(), "y": self.y_.tolist()}

    @classmethod
    def from_state(cls, state):
        self = cls(state["k"])
        self.X_ = np.asarray(state["X"], dtype=np.float64).reshape(len(state["y"]), -1)
        self.y_ = np.asarray(state["y"], dtype=np.float64)
        self.k_ = int(state["k"])
        return self

"""The regression collective: consensus weights, prediction and calibration.

A retained observation ``i`` is selected for a query when at least
``need = alpha * M`` machines put their output at the query within
``epsilon`` of their output at ``X_i``. The prediction is the plain average
of the selected responses ``Y_i`` (never of machine outputs); an empty
selection predicts 0 and is flagged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .data import Dataset, DataError, RngStream
from .machines import MachinePool, MachineSpec, train_pool

__all__ = [
    "EPSILON_MIN",
    "CalibrationError",
    "WeightVector",
    "CalibrationGrid",
    "CollectiveModel",
    "BatchResult",
    "quantize_alpha",
    "fit_collective",
    "consensus_weights",
    "predict",
    "predict_batch",
    "build_epsilon_grid",
    "calibration_risks",
    "calibrate",
    "theoretical_epsilon",
    "random_cut_ensemble",
]

EPSILON_MIN = 1e-300
DEFAULT_GRID_SIZE = 200


class CalibrationError(ValueError):
    pass


# ------------------------------------------------------------------ kernels


@njit(cache=True, nogil=True)
def _kernel(query, cached, y, eps, need, early_exit, mask, want_mask):
    """Weight kernel over all (query, retained point) pairs.

    Returns ``(predictions, counts, evaluations)``; fills ``mask`` (q x l)
    when ``want_mask``. ``evaluations`` counts indicator tests actually made.
    """
    q, M = query.shape
    ell = cached.shape[0]
    preds = np.zeros(q)
    counts = np.zeros(q, np.int64)
    evaluations = 0
    for v in range(q):
        total = 0.0
        lo = np.inf
        hi = -np.inf
        cnt = 0
        for i in range(ell):
            agree = 0
            for m in range(M):
                evaluations += 1
                if abs(query[v, m] - cached[i, m]) <= eps:
                    agree += 1
                    if early_exit and agree >= need:
                        break
                elif early_exit and agree + (M - m - 1) < need:
                    break
            if agree >= need:
                cnt += 1
                total += y[i]
                if y[i] < lo:
                    lo = y[i]
                if y[i] > hi:
                    hi = y[i]
                if want_mask:
                    mask[v, i] = True
        counts[v] = cnt
        if cnt > 0:
            p = total / cnt
            # the exact mean lies in [lo, hi]; clip away rounding excursions
            if p < lo:
                p = lo
            elif p > hi:
                p = hi
            preds[v] = p
    return preds, counts, evaluations


# ------------------------------------------------------------------ types


def quantize_alpha(alpha: float, M: int) -> tuple[float, int]:
    """Round ``alpha`` to the nearest of ``{1/M, ..., 1}``; return (alpha, need)."""
    if not (isinstance(alpha, (int, float, np.floating, np.integer))
            and 0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    need = int(min(M, max(1, math.floor(alpha * M + 0.5))))
    return need / M, need


@dataclass(frozen=True)
class WeightVector:
    """Weights over the retained sample: ``1/count`` on selected points, else 0."""

    weights: np.ndarray
    selected_count: int

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    @property
    def empty(self) -> bool:
        return self.selected_count == 0

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "WeightVector":
        count = int(mask.sum())
        w = np.zeros(mask.shape[0])
        if count:
            w[mask] = 1.0 / count
        return cls(w, count)


@dataclass(frozen=True)
class CalibrationGrid:
    """The (epsilon, alpha) search lattice with validation risks.

    ``risks[i, j]`` is the validation quadratic risk at ``epsilons[i]`` and
    ``alphas[j]``; ``chosen`` indexes the minimizing cell, ties going to the
    smallest epsilon and then the smallest alpha.
    """

    epsilons: np.ndarray
    alphas: np.ndarray
    scale: str
    risks: np.ndarray
    chosen: tuple[int, int]

    @property
    def epsilon(self) -> float:
        return float(self.epsilons[self.chosen[0]])

    @property
    def alpha(self) -> float:
        return float(self.alphas[self.chosen[1]])

    @property
    def risk(self) -> float:
        return float(self.risks[self.chosen])

    def to_dict(self):
        return {"epsilons": self.epsilons.tolist(), "alphas": self.alphas.tolist(),
                "scale": self.scale, "risks": self.risks.tolist(),
                "chosen": list(self.chosen)}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["epsilons"], float), np.asarray(doc["alphas"], float),
                   doc["scale"], np.asarray(doc["risks"], float),
                   tuple(int(c) for c in doc["chosen"]))


@dataclass(frozen=True)
class BatchResult:
    predictions: np.ndarray
    counts: np.ndarray
    evaluations: int

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0

    @property
    def empty_count(self) -> int:
        return int(np.count_nonzero(self.counts == 0))


@dataclass(frozen=True)
class CollectiveModel:
    """A calibrated collective: pool, retained sample and (epsilon, alpha).

    ``cached_predictions[i]`` holds the pool's outputs at retained row ``i``.
    ``alpha`` is stored quantized; ``need`` is the integer machine count
    ``alpha * M`` that must agree.
    """

    pool: MachinePool | None
    retained_features: np.ndarray | None
    retained_responses: np.ndarray
    cached_predictions: np.ndarray
    epsilon: float
    alpha: float
    grid: CalibrationGrid | None = None

    def __post_init__(self):
        C = np.ascontiguousarray(self.cached_predictions, dtype=np.float64)
        y = np.ascontiguousarray(self.retained_responses, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != y.shape[0] or C.shape[0] < 1:
            raise ValueError("cached predictions must be an l x M matrix aligned with responses")
        if self.pool is not None and self.pool.M != C.shape[1]:
            raise ValueError("cached predictions do not match the pool size")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a positive finite real, got {self.epsilon}")
        alpha, need = quantize_alpha(self.alpha, C.shape[1])
        for a in (C, y):
            a.flags.writeable = False
        object.__setattr__(self, "cached_predictions", C)
        object.__setattr__(self, "retained_responses", y)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "_need", need)

    @property
    def M(self) -> int:
        return self.cached_predictions.shape[1]

    @property
    def ell(self) -> int:
        return self.cached_predictions.shape[0]

    @property
    def need(self) -> int:
        return self._need

    def with_parameters(self, epsilon=None, alpha=None) -> "CollectiveModel":
        return CollectiveModel(self.pool, self.retained_features,
                               self.retained_responses, self.cached_predictions,
                               self.epsilon if epsilon is None else epsilon,
                               self.alpha if alpha is None else alpha, self.grid)

    def machine_outputs(self, X) -> np.ndarray:
        if self.pool is None:
            raise ValueError("this model carries no machines; pass machine outputs directly")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.pool.d:
            raise DataError(f"expected {self.pool.d} covariates, got {X.shape[1]}")
        return self.pool.predict(X)

    def aggregate(self, Q, early_exit=True, workers=1) -> BatchResult:
        """Run the weight kernel on a ``q x M`` matrix of machine outputs."""
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.M:
            raise ValueError(f"machine outputs must be q x {self.M}")
        dummy = np.zeros((0, 0), dtype=np.bool_)
        if workers <= 1 or Q.shape[0] < 2 * workers:
            p, c, ev = _kernel(Q, self.cached_predictions, self.retained_responses,
                               self.epsilon, self.need, early_exit, dummy, False)
            return BatchResult(p, c, int(ev))
        chunks = np.array_split(np.arange(Q.shape[0]), workers)

        def run(rows):
            return _kernel(Q[rows], self.cached_predictions, self.retained_responses,
                           self.epsilon, self.need, early_exit, dummy, False)

        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, chunks))
        return BatchResult(np.concatenate([p[0] for p in parts]),
                           np.concatenate([p[1] for p in parts]),
                           int(sum(p[2] for p in parts)))

    def selection_mask(self, Q, early_exit=True) -> np.ndarray:
        Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
        mask = np.zeros((Q.shape[0], self.ell), dtype=np.bool_)
        _kernel(Q, self.cached_predictions, self.retained_responses,
                self.epsilon, self.need, early_exit, mask, True)
        return mask


# ------------------------------------------------------------------ operations


def fit_collective(pool: MachinePool, retained: Dataset, epsilon: float,
                   alpha: float = 1.0, grid: CalibrationGrid | None = None) -> CollectiveModel:
    """Cache the pool's outputs on ``retained`` and fix (epsilon, alpha)."""
    C = pool.predict(retained.features)
    return CollectiveModel(pool, retained.features, retained.responses, C,
                           epsilon, alpha, grid)


def consensus_weights(model: CollectiveModel, query_predictions) -> WeightVector:
    q = np.asarray(query_predictions, dtype=np.float64).reshape(1, -1)
    if q.shape[1] != model.M or not np.isfinite(q).all():
        raise ValueError(f"query predictions must be {model.M} finite reals")
    return WeightVector.from_mask(model.selection_mask(q)[0])


def predict(model: CollectiveModel, x) -> tuple[float, WeightVector]:
    """Predict at a single covariate vector; also return the weights used."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("predict expects one covariate vector; use predict_batch")
    Q = model.machine_outputs(x)
    w = consensus_weights(model, Q[0])
    res = model.aggregate(Q)
    return float(res.predictions[0]), w


def predict_batch(model: CollectiveModel, X, workers: int = 1) -> tuple[np.ndarray, int]:
    """Predict every row of ``X``; return ``(predictions, empty_selection_count)``.

    Rows can be spread over ``workers`` threads; the output does not depend
    on the worker count.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("predict_batch expects a q x d matrix")
    if X.shape[0] == 0:
        return np.empty(0), 0
    res = model.aggregate(model.machine_outputs(X), workers=workers)
    return res.predictions, res.empty_count


def build_epsilon_grid(cached_predictions, size: int = DEFAULT_GRID_SIZE,
                       scale: str = "linear") -> np.ndarray:
    """Epsilon candidates from ``1e-300`` up to the widest per-machine range.

    ``linear`` spaces ``size`` values evenly. ``logistic`` keeps ``1e-300`` as
    the first value and log-spaces the remaining ``size - 1`` between
    ``max(1e-300, 1e-8 * eps_max)`` and ``eps_max``.
    """
    C = np.asarray(cached_predictions, dtype=np.float64)
    if size < 2:
        raise CalibrationError("the epsilon grid needs at least 2 values")
    eps_max = float((C.max(axis=0) - C.min(axis=0)).max()) if C.size else 0.0
    if not eps_max > 0.0:
        raise CalibrationError(
            "all cached machine predictions are identical: the pool is degenerate "
            "and epsilon cannot be calibrated")
    if scale == "linear":
        grid = np.linspace(EPSILON_MIN, eps_max, size)
    elif scale == "logistic":
        lo = max(EPSILON_MIN, 1e-8 * eps_max)
        grid = np.concatenate([[EPSILON_MIN], np.geomspace(lo, eps_max, size - 1)])
    else:
        raise CalibrationError(f"unknown grid scale {scale!r}")
    grid[-1] = eps_max
    if not np.all(np.diff(grid) > 0):
        raise CalibrationError("epsilon grid is not strictly increasing")
    return grid


def calibration_risks(retained_predictions, retained_responses,
                      validation_predictions, validation_responses,
                      epsilons, needs: Sequence[int]) -> np.ndarray:
    """Validation quadratic risk for every (epsilon, need) pair.

    Agreement of at least ``a`` machines within epsilon is equivalent to the
    ``a``-th smallest absolute output gap being ``<= epsilon``, so each
    (validation point, need) costs one sort of the retained points and one
    search per grid value.
    """
    C = np.asarray(retained_predictions, dtype=np.float64)
    y = np.asarray(retained_responses, dtype=np.float64)
    V = np.asarray(validation_predictions, dtype=np.float64)
    yv = np.asarray(validation_responses, dtype=np.float64)
    eps = np.asarray(epsilons, dtype=np.float64)
    gaps = np.sort(np.abs(V[:, None, :] - C[None, :, :]), axis=2)  # (p, l, M)
    risks = np.empty((eps.shape[0], len(needs)))
    for j, need in enumerate(needs):
        t = gaps[:, :, need - 1]
        order = np.argsort(t, axis=1, kind="stable")
        t_sorted = np.take_along_axis(t, order, axis=1)
        csum = np.cumsum(y[order], axis=1)
        sq = np.zeros(eps.shape[0])
        for v in range(t.shape[0]):
            cnt = np.searchsorted(t_sorted[v], eps, side="right")
            pred = np.zeros(eps.shape[0])
            hit = cnt > 0
            pred[hit] = csum[v, cnt[hit] - 1] / cnt[hit]
            sq += (pred - yv[v]) ** 2
        risks[:, j] = sq / t.shape[0]
    return risks


def _choose(risks) -> tuple[int, int]:
    # row-major argmin: smallest epsilon first, then smallest alpha
    flat = int(np.argmin(risks))
    return divmod(flat, risks.shape[1])


def calibrate(pool: MachinePool, retained: Dataset, grid_size: int = DEFAULT_GRID_SIZE,
              scale: str = "linear", rng: RngStream | None = None,
              epsilon: float | None = None, alpha: float | None = None) -> CollectiveModel:
    """Choose (epsilon, alpha) by validation risk, then refit on all of ``retained``.

    ``retained`` is cut at random into a retained half and a validation half;
    the collective built on the retained half is scored on the validation
    half for every grid cell. Passing ``epsilon`` and/or ``alpha`` pins that
    axis to the given value instead of searching it.
    """
    M = pool.M
    if epsilon is not None and alpha is not None:
        return fit_collective(pool, retained, epsilon, alpha)
    if retained.n < 4:
        raise CalibrationError(f"calibration needs at least 4 retained rows, got {retained.n}")
    rng = rng if rng is not None else RngStream(0)
    order = rng.generator.permutation(retained.n)
    half = retained.n // 2
    ret, val = order[:half], order[half:]
    C_all = pool.predict(retained.features)
    if epsilon is None:
        epsilons = build_epsilon_grid(C_all, grid_size, scale)
    else:
        if not epsilon > 0:
            raise CalibrationError(f"epsilon must be positive, got {epsilon}")
        epsilons = np.array([float(epsilon)])
    if alpha is None:
        needs = list(range(1, M + 1))
    else:
        needs = [quantize_alpha(alpha, M)[1]]
    y = retained.responses
    risks = calibration_risks(C_all[ret], y[ret], C_all[val], y[val], epsilons, needs)
    chosen = _choose(risks)
    grid = CalibrationGrid(epsilons, np.array([a / M for a in needs]),
                           scale if epsilon is None else "fixed", risks, chosen)
    return CollectiveModel(pool, retained.features, retained.responses, C_all,
                           grid.epsilon, grid.alpha, grid)


def theoretical_epsilon(ell: int, M: int, c: float = 1.0) -> float:
    """Smoothing schedule ``c * ell ** (-1 / (M + 2))``."""
    if ell < 1 or M < 1 or not c > 0:
        raise ValueError("need ell >= 1, M >= 1 and c > 0")
    return c * ell ** (-1.0 / (M + 2))


def _draw_cut(n: int, rng: RngStream, min_train: int, min_retained: int,
              max_retries: int) -> int:
    for _ in range(max_retries):
        k = int(rng.generator.integers(1, n))  # uniform in {1, ..., n-1}
        if k >= min_train and n - k >= min_retained:
            return k
    raise DataError(
        f"no usable random cut of n={n} rows after {max_retries} draws "
        f"(need >= {min_train} machine rows and >= {min_retained} retained rows)")


def random_cut_ensemble(data: Dataset, specs: Sequence[MachineSpec], X,
                        repeats: int, combine: str = "median",
                        rng: RngStream | None = None,
                        grid_size: int = DEFAULT_GRID_SIZE, scale: str = "linear",
                        max_retries: int = 100, return_runs: bool = False):
    """Combine ``repeats`` collectives, each built on a random cut of ``data``.

    Every repeat draws ``k`` uniformly in ``{1, ..., n-1}`` (redrawn when a
    side is too small to train or calibrate), trains the pool on the first
    ``k`` shuffled rows, calibrates on the rest and predicts ``X``. The runs
    are combined elementwise by ``mean`` or ``median``.

    With ``return_runs=True`` also return the ``repeats x q`` run matrix and
    the drawn cut sizes.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if combine not in ("mean", "median"):
        raise ValueError(f"combine must be 'mean' or 'median', got {combine!r}")
    rng = rng if rng is not None else RngStream(0)
    X = np.asarray(X, dtype=np.float64)
    runs = np.empty((repeats, X.shape[0]))
    cuts = []
    for r in range(repeats):
        stream = rng.fork(r)
        k = _draw_cut(data.n, stream.fork(0), 2, 4, max_retries)
        order = stream.fork(1).generator.permutation(data.n)
        machine_part, retained = data.subset(order[:k]), data.subset(order[k:])
        pool = train_pool(machine_part, specs, stream.fork(2))
        model = calibrate(pool, retained, grid_size, scale, stream.fork(3))
        runs[r] = predict_batch(model, X)[0] if X.shape[0] else np.empty(0)
        cuts.append(k)
    combined = runs.mean(axis=0) if combine == "mean" else np.median(runs, axis=0)
    if return_runs:
        return combined, runs, np.array(cuts)
    return combined

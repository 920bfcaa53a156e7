"""Exponentially weighted aggregation (EWA) of the machine pool.

Weights are a softmax of negative empirical machine risks at temperature
``beta``: ``w_j = exp(-beta R_j) / sum_i exp(-beta R_i)``. Risks come from one
half of the retained sample; ``beta`` is chosen on the other half over a
log-spaced grid centered on ``1 / mean(R)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataError, RngStream
from .machines import MachinePool

__all__ = ["EwaModel", "softmax_weights", "beta_grid", "fit_ewa", "predict_ewa",
           "predict_ewa_batch"]

DEFAULT_BETA_GRID = 200


def softmax_weights(risks, beta: float) -> np.ndarray:
    r = np.asarray(risks, dtype=np.float64)
    z = -beta * (r - r.min())
    w = np.exp(z)
    return w / w.sum()


def beta_grid(risks, size: int = DEFAULT_BETA_GRID) -> np.ndarray:
    mean_risk = max(float(np.mean(risks)), 1e-12)
    return np.geomspace(1e-4 / mean_risk, 1e4 / mean_risk, size)


@dataclass(frozen=True)
class EwaModel:
    pool: MachinePool
    weights: np.ndarray
    beta: float
    machine_risks: np.ndarray
    betas: np.ndarray | None = None
    beta_risks: np.ndarray | None = None
    note: str = ""

    @property
    def M(self):
        return self.weights.shape[0]


def _risk(pred, y):
    return np.mean((pred - y[:, None]) ** 2, axis=0)


def fit_ewa(pool: MachinePool, retained: Dataset, beta_grid_size: int = DEFAULT_BETA_GRID,
            rng: RngStream | None = None) -> EwaModel:
    """Fit EWA on ``retained``: machine risks on one half, ``beta`` on the other.

    Ties among grid temperatures resolve to the smallest ``beta``.
    """
    if retained.n < 4:
        raise DataError(f"EWA needs at least 4 retained rows, got {retained.n}")
    rng = rng if rng is not None else RngStream(0)
    order = rng.generator.permutation(retained.n)
    half = retained.n // 2
    est, val = order[:half], order[half:]
    P = pool.predict(retained.features)
    y = retained.responses
    risks = _risk(P[est], y[est])
    betas = beta_grid(risks, beta_grid_size)
    W = np.array([softmax_weights(risks, b) for b in betas])  # (grid, M)
    beta_risks = _risk(P[val] @ W.T, y[val])
    best = int(np.argmin(beta_risks))
    note = ""
    if np.all(risks == 0.0):
        note = "all machine risks are zero; beta does not affect the weights"
    return EwaModel(pool, W[best], float(betas[best]), risks, betas, beta_risks, note)


def predict_ewa_batch(model: EwaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.pool.d:
        raise DataError(f"expected a q x {model.pool.d} matrix, got shape {X.shape}")
    P = model.pool.predict(X)
    out = P @ model.weights
    # stay inside the machine envelope despite rounding
    return np.clip(out, P.min(axis=1), P.max(axis=1)) if P.size else out


def predict_ewa(model: EwaModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("predict_ewa expects a single covariate vector")
    return float(predict_ewa_batch(model, x[None, :])[0])

"""Seeded generators for the synthetic regression benchmarks.

Covariates come from one of two designs: i.i.d. uniform on (-1, 1)
("uncorrelated") or a centered Gaussian with covariance
``Sigma[i, j] = 2 ** -|i - j|`` ("correlated"). Noise written ``N(0, s2)``
has variance ``s2``. Column ``j`` of the feature matrix is covariate
``X_{j+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset, DataError, RngStream

__all__ = ["DesignSpec", "ModelSpec", "MODELS", "get_model", "correlated_covariance",
           "sample_design", "generate", "model_oracle"]

DESIGNS = ("uncorrelated", "correlated")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise DataError(f"unknown design {self.kind!r}; expected one of {DESIGNS}")
        if self.d < 1:
            raise DataError("design dimension must be >= 1")


def correlated_covariance(d: int) -> np.ndarray:
    idx = np.arange(d)
    return 2.0 ** -np.abs(idx[:, None] - idx[None, :])


def sample_design(spec: DesignSpec, n: int, rng: RngStream) -> np.ndarray:
    if n < 1:
        raise DataError("need n >= 1 design rows")
    g = rng.generator
    if spec.kind == "uncorrelated":
        u = g.random((n, spec.d))
        # 2u - 1 lies in [-1, 1); redraw exact zeros to stay strictly inside
        while True:
            zero = u == 0.0
            if not zero.any():
                break
            u[zero] = g.random(int(zero.sum()))
        return 2.0 * u - 1.0
    L = np.linalg.cholesky(correlated_covariance(spec.d))
    assert np.all(np.isfinite(L)), "Cholesky factor of the design covariance failed"
    return g.standard_normal((n, spec.d)) @ L.T


# Each formula takes the covariates and a standard normal vector ``z`` (one
# draw per row); noiseless evaluation passes ``z = 0``.

def _m1(X, z):
    return X[:, 0] ** 2 + np.exp(-X[:, 1] ** 2)


def _m2(X, z):
    x = X
    return (x[:, 0] * x[:, 1] + x[:, 2] ** 2 - x[:, 3] * x[:, 6] + x[:, 7] * x[:, 9]
            - x[:, 5] ** 2 + np.sqrt(0.5) * z)


def _m3(X, z):
    return (-np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + X[:, 2] - np.exp(-X[:, 3])
            + np.sqrt(0.5) * z)


def _m4(X, z):
    s3 = np.sin(2 * np.pi * X[:, 2])
    a = 2 * np.pi * X[:, 3]
    return (X[:, 0] + (2 * X[:, 1] - 1) ** 2 + s3 / (2 - s3) + np.sin(a)
            + 2 * np.cos(a) + 3 * np.sin(a) ** 2 + 4 * np.cos(a) ** 2
            + np.sqrt(0.5) * z)


def _m5(X, z):
    x = X
    return ((x[:, 0] > 0).astype(float) + x[:, 1] ** 3
            + (x[:, 3] + x[:, 5] - x[:, 7] - x[:, 8] > 1 + x[:, 13]).astype(float)
            + np.exp(-x[:, 1] ** 2) + np.sqrt(0.5) * z)


def _m6(X, z):
    return (X[:, :10] ** 3 < 0).sum(axis=1).astype(float) - (z > 1.25).astype(float)


def _m7(X, z):
    x = X
    return (x[:, 0] ** 2 + x[:, 1] ** 2 * x[:, 2] * np.exp(-np.abs(x[:, 3]))
            + x[:, 5] - x[:, 7] + np.sqrt(0.5) * z)


def _m8(X, z):
    x = X
    arg = x[:, 0] + x[:, 3] ** 3 + x[:, 8] + np.sin(x[:, 11] * x[:, 17]) + np.sqrt(0.1) * z
    return (arg > 0.38).astype(float)


def _additive4(X, z):
    return X[:, 0] + 3 * X[:, 2] ** 2 - 2 * np.exp(-X[:, 4]) + X[:, 5]


def _hd3(X, z):
    powers = np.arange(2, X.shape[1] + 1) / 100.0
    tail = X[:, 1:]
    # negative bases: sign(x) * |x| ** p
    return np.exp(-X[:, 0]) + np.exp(X[:, 0]) + (np.sign(tail) * np.abs(tail) ** powers).sum(axis=1)


@dataclass(frozen=True)
class ModelSpec:
    id: str
    n: int
    d: int
    noise: str
    formula: Callable[[np.ndarray, np.ndarray], np.ndarray]
    design: str | None = None  # fixed design, or None when both are used

    def default_design(self) -> DesignSpec:
        return DesignSpec(self.design or "uncorrelated", self.d)


MODELS = {m.id: m for m in [
    ModelSpec("m1", 800, 50, "none", _m1),
    ModelSpec("m2", 600, 100, "N(0, 0.5)", _m2),
    ModelSpec("m3", 600, 100, "N(0, 0.5)", _m3),
    ModelSpec("m4", 600, 100, "N(0, 0.5)", _m4),
    ModelSpec("m5", 700, 20, "N(0, 0.5)", _m5),
    ModelSpec("m6", 500, 30, "indicator of N(0, 1) > 1.25", _m6),
    ModelSpec("m7", 600, 300, "N(0, 0.5)", _m7),
    ModelSpec("m8", 600, 50, "N(0, 0.1) inside the indicator", _m8),
    ModelSpec("hd1", 500, 1000, "none", _additive4, "uncorrelated"),
    ModelSpec("hd2", 500, 1000, "none", _additive4, "correlated"),
    ModelSpec("hd3", 500, 1500, "none", _hd3, "uncorrelated"),
    ModelSpec("stab", 1200, 10, "none", _additive4, "uncorrelated"),
]}


def get_model(model_id: str) -> ModelSpec:
    try:
        return MODELS[model_id.lower()]
    except KeyError:
        raise DataError(f"unknown model {model_id!r}; expected one of {sorted(MODELS)}") from None


def generate(spec: ModelSpec, design: DesignSpec | None, rng: RngStream,
             noise_scale: float = 1.0, n: int | None = None) -> Dataset:
    """Draw ``n`` (default ``spec.n``) rows of the model.

    ``noise_scale`` multiplies every Gaussian draw; 0 gives the noiseless
    responses, equal to :func:`model_oracle` row by row.
    """
    design = design or spec.default_design()
    if design.d != spec.d:
        raise DataError(f"{spec.id} needs d={spec.d}, design has d={design.d}")
    n = spec.n if n is None else n
    X = sample_design(design, n, rng.fork(0))
    z = rng.fork(1).generator.standard_normal(n) * noise_scale
    return Dataset(X, spec.formula(X, z))


def model_oracle(spec: ModelSpec, x) -> np.ndarray | float:
    """Noiseless regression function at one covariate vector (or each row)."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.d:
        raise DataError(f"{spec.id} needs d={spec.d} covariates, got {X.shape[1]}")
    out = spec.formula(X, np.zeros(X.shape[0]))
    return float(out[0]) if single else out

"""Machine specifications, trained machines and the machine pool."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..data import Dataset, RngStream
from .exceptions import MachineError
from .external import ExternalPredictions
from .knn import KNNRegressor
from .linear import LassoRegressor, RidgeRegressor
from .tree import ForestRegressor, TreeRegressor

KINDS = ("knn", "ridge", "lasso", "tree", "random_forest", "external")

# accepted hyperparameters per kind, mapped onto estimator keyword arguments
_HYPER = {
    "knn": {"k": "k"},
    "ridge": {"lambda": "lam", "n_lambdas": "n_lambdas", "folds": "cv_folds"},
    "lasso": {"lambda": "lam", "n_lambdas": "n_lambdas", "folds": "cv_folds",
              "tol": "tol", "max_sweeps": "max_sweeps"},
    "tree": {"max_depth": "max_depth", "min_leaf": "min_leaf"},
    "random_forest": {"trees": "n_trees", "mtry": "max_features",
                      "bootstrap": "bootstrap", "max_depth": "max_depth",
                      "min_leaf": "min_leaf"},
    "external": {},
}

_ESTIMATORS = {
    "knn": KNNRegressor,
    "ridge": RidgeRegressor,
    "lasso": LassoRegressor,
    "tree": TreeRegressor,
    "random_forest": ForestRegressor,
    "external": ExternalPredictions,
}

_INTEGER = {"k", "n_lambdas", "folds", "max_sweeps", "max_depth", "min_leaf",
            "trees", "mtry"}
_MINIMUM = {"k": 1, "lambda": 0, "n_lambdas": 1, "folds": 2, "tol": 0,
            "max_sweeps": 1, "max_depth": 0, "min_leaf": 1, "trees": 1, "mtry": 1}


@dataclass(frozen=True)
class MachineSpec:
    """Kind, hyperparameters and display name of one base machine.

    Hyperparameters are validated here, so an invalid spec never reaches
    training. Omitted hyperparameters take the package defaults (see
    :func:`default_specs`).
    """

    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MachineError(f"unknown machine kind {self.kind!r}; expected one of {KINDS}")
        allowed = _HYPER[self.kind]
        hp = dict(self.hyperparameters)
        label = self.name or self.kind
        for key, value in hp.items():
            if key not in allowed:
                raise MachineError(f"unknown hyperparameter {key!r} for {self.kind}", label)
            if key == "max_depth" and value is None:
                continue
            if key == "bootstrap":
                hp[key] = bool(value)
                continue
            if not isinstance(value, (int, float, np.integer, np.floating)) or not math.isfinite(value):
                raise MachineError(f"{key} must be a finite number, got {value!r}", label)
            if key in _INTEGER:
                if value != int(value):
                    raise MachineError(f"{key} must be an integer, got {value}", label)
                value = int(value)
            if value < _MINIMUM.get(key, -math.inf):
                raise MachineError(f"{key} must be >= {_MINIMUM[key]}, got {value}", label)
            hp[key] = value
        object.__setattr__(self, "hyperparameters", hp)
        if self.name is None:
            object.__setattr__(self, "name", self.kind)

    def build(self):
        kwargs = {_HYPER[self.kind][k]: v for k, v in self.hyperparameters.items()}
        return _ESTIMATORS[self.kind](**kwargs)

    def to_dict(self):
        return {"kind": self.kind, "name": self.name,
                "hyperparameters": dict(self.hyperparameters)}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["kind"], doc.get("hyperparameters", {}), doc.get("name"))


def default_specs() -> list[MachineSpec]:
    """The default five-machine pool: lasso, ridge, k-NN, CART tree, forest."""
    return [
        MachineSpec("lasso", name="lasso"),
        MachineSpec("ridge", name="ridge"),
        MachineSpec("knn", name="knn"),
        MachineSpec("tree", {"max_depth": 10, "min_leaf": 5}, name="tree"),
        MachineSpec("random_forest", {"trees": 500, "bootstrap": True}, name="forest"),
    ]


@dataclass(frozen=True)
class TrainedMachine:
    spec: MachineSpec
    estimator: Any
    n_train: int
    d: int

    @property
    def name(self) -> str:
        return self.spec.name

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise MachineError(
                f"expected queries with {self.d} columns, got shape {X.shape}", self.name)
        if X.shape[0] == 0:
            return np.empty(0)
        try:
            out = np.asarray(self.estimator.predict(X), dtype=np.float64)
        except MachineError as exc:
            if exc.machine is None:
                raise MachineError(str(exc), self.name) from exc
            raise
        if not np.isfinite(out).all():
            raise MachineError("non-finite prediction", self.name)
        return out

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "n_train": self.n_train, "d": self.d,
                "state": self.estimator.get_state()}

    @classmethod
    def from_dict(cls, doc):
        spec = MachineSpec.from_dict(doc["spec"])
        est = _ESTIMATORS[spec.kind].from_state(doc["state"])
        return cls(spec, est, int(doc["n_train"]), int(doc["d"]))


@dataclass(frozen=True)
class MachinePool:
    """An ordered, fixed collection of trained machines."""

    machines: tuple[TrainedMachine, ...]

    def __post_init__(self):
        object.__setattr__(self, "machines", tuple(self.machines))
        if not self.machines:
            raise MachineError("a machine pool needs at least one machine")
        if len({m.d for m in self.machines}) != 1:
            raise MachineError("all machines in a pool must share the input dimension")

    @property
    def M(self) -> int:
        return len(self.machines)

    @property
    def d(self) -> int:
        return self.machines[0].d

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.machines]

    def predict(self, X) -> np.ndarray:
        return predict_pool(self, X)

    def __len__(self):
        return self.M

    def __iter__(self):
        return iter(self.machines)

    def __getitem__(self, i):
        return self.machines[i]


def fit_machine(spec: MachineSpec, data: Dataset, rng: RngStream | None = None) -> TrainedMachine:
    est = spec.build()
    try:
        est.fit(data.features, data.responses, rng)
    except MachineError as exc:
        if exc.machine is None:
            raise type(exc)(str(exc), spec.name) from exc
        raise
    except np.linalg.LinAlgError as exc:
        raise MachineError(f"linear algebra failure: {exc}", spec.name) from exc
    return TrainedMachine(spec, est, data.n, data.d)


def train_pool(data: Dataset, specs: Sequence[MachineSpec],
               rng: RngStream | None = None, workers: int = 1) -> MachinePool:
    """Fit one machine per spec on ``data`` (the machine-training part).

    Machine ``m`` draws its randomness from ``rng.fork(m)``, so results do not
    depend on ``workers`` or on completion order.
    """
    specs = list(specs)
    if not specs:
        raise MachineError("train_pool needs at least one machine spec")
    if data.n < 2:
        raise MachineError(f"train_pool needs at least 2 rows, got {data.n}")
    rng = rng if rng is not None else RngStream(0)
    streams = [rng.fork(m) for m in range(len(specs))]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            machines = list(ex.map(lambda a: fit_machine(*a),
                                   [(s, data, r) for s, r in zip(specs, streams)]))
    else:
        machines = [fit_machine(s, data, r) for s, r in zip(specs, streams)]
    return MachinePool(tuple(machines))


def predict_machine(machine: TrainedMachine, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise MachineError("predict_machine expects a single covariate vector", machine.name)
    return float(machine.predict(x[None, :])[0])


def predict_pool(pool: MachinePool, X) -> np.ndarray:
    """Return the ``q x M`` matrix of machine outputs, column ``m`` for machine ``m``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, pool.d) if X.size else X.reshape(0, pool.d)
    out = np.empty((X.shape[0], pool.M))
    for m, machine in enumerate(pool.machines):
        out[:, m] = machine.predict(X)
    return out

"""JSON persistence for fitted collectives and EWA models.

The document is versioned by ``format``/``version`` and tagged with the
aggregation ``method`` ("cobra" or "ewa"). Floats are written with ``repr``
precision, so a reload reproduces predictions bitwise.
"""

import json

import numpy as np

from .baselines import EwaModel
from .collective import CalibrationGrid, CollectiveModel
from .machines import MachinePool, TrainedMachine

FORMAT = "cobra-regression-model"
VERSION = 1


class ModelFileError(ValueError):
    pass


def _pool_doc(pool):
    return [m.to_dict() for m in pool.machines]


def _pool_from(doc):
    return MachinePool(tuple(TrainedMachine.from_dict(m) for m in doc))


def model_to_dict(model) -> dict:
    if isinstance(model, CollectiveModel):
        if model.pool is None:
            raise ModelFileError("cannot persist a collective without its machines")
        return {
            "format": FORMAT, "version": VERSION, "method": "cobra",
            "epsilon": model.epsilon, "alpha": model.alpha, "M": model.M,
            "d": model.pool.d,
            "machine_names": model.pool.names,
            "retained_features": np.asarray(model.retained_features).tolist(),
            "retained_responses": model.retained_responses.tolist(),
            "cached_predictions": model.cached_predictions.tolist(),
            "calibration": model.grid.to_dict() if model.grid is not None else None,
            "machines": _pool_doc(model.pool),
        }
    if isinstance(model, EwaModel):
        return {
            "format": FORMAT, "version": VERSION, "method": "ewa",
            "beta": model.beta, "M": model.M, "d": model.pool.d,
            "machine_names": model.pool.names,
            "weights": model.weights.tolist(),
            "machine_risks": model.machine_risks.tolist(),
            "betas": None if model.betas is None else model.betas.tolist(),
            "beta_risks": None if model.beta_risks is None else model.beta_risks.tolist(),
            "machines": _pool_doc(model.pool),
        }
    raise TypeError(f"cannot persist {type(model).__name__}")


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise ModelFileError("not a cobra-regression model document")
    if doc.get("version") != VERSION:
        raise ModelFileError(f"unsupported model version {doc.get('version')!r}")
    pool = _pool_from(doc["machines"])
    if doc["method"] == "cobra":
        grid = doc.get("calibration")
        ell = len(doc["retained_responses"])
        return CollectiveModel(
            pool,
            np.asarray(doc["retained_features"], dtype=np.float64).reshape(ell, -1),
            np.asarray(doc["retained_responses"], dtype=np.float64),
            np.asarray(doc["cached_predictions"], dtype=np.float64).reshape(ell, -1),
            doc["epsilon"], doc["alpha"],
            CalibrationGrid.from_dict(grid) if grid else None)
    if doc["method"] == "ewa":
        opt = lambda k: None if doc.get(k) is None else np.asarray(doc[k], float)
        return EwaModel(pool, np.asarray(doc["weights"], float), float(doc["beta"]),
                        np.asarray(doc["machine_risks"], float), opt("betas"),
                        opt("beta_risks"))
    raise ModelFileError(f"unknown method tag {doc['method']!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ModelFileError(f"no such model file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)

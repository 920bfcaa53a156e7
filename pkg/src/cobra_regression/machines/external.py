"""Machines trained elsewhere, supplied as precomputed prediction columns."""

import numpy as np

from ..data import DataError, read_numeric_csv
from .exceptions import MachineError


def _key(row):
    return np.ascontiguousarray(row, dtype=np.float64).tobytes()


class ExternalPredictions:
    """Lookup-table machine: returns the stored prediction for a known row.

    Built from feature rows and the matching predictions; querying a row that
    was not supplied is an error, since there is no model to fall back on.
    """

    def __init__(self, features=None, predictions=None):
        self.table_ = {}
        if features is not None:
            self.add(features, predictions)

    def add(self, features, predictions):
        features = np.asarray(features, dtype=np.float64)
        predictions = np.asarray(predictions, dtype=np.float64)
        if features.shape[0] != predictions.shape[0]:
            raise MachineError("external predictions are not aligned with the rows")
        for row, p in zip(features, predictions):
            self.table_[_key(row)] = float(p)
        return self

    def fit(self, X, y, rng=None):
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            try:
                out[i] = self.table_[_key(row)]
            except KeyError:
                raise MachineError(f"no external prediction for query row {i}") from None
        return out

    def get_state(self):
        keys = list(self.table_)
        rows = [np.frombuffer(k, dtype=np.float64).tolist() for k in keys]
        return {"rows": rows, "predictions": [self.table_[k] for k in keys]}

    @classmethod
    def from_state(cls, state):
        return cls(np.asarray(state["rows"], dtype=np.float64).reshape(
            len(state["predictions"]), -1), state["predictions"])


def read_external_csv(path, features):
    """Read a prediction CSV (one column per machine, header = names).

    Rows must be aligned with ``features``. Returns ``{name: ExternalPredictions}``
    in column order.
    """
    header, arr = read_numeric_csv(path)
    features = np.asarray(features, dtype=np.float64)
    if arr.shape[0] != features.shape[0]:
        raise DataError(
            f"{path}: {arr.shape[0]} prediction rows for {features.shape[0]} feature rows"
        )
    return {name: ExternalPredictions(features, arr[:, j])
            for j, name in enumerate(header)}

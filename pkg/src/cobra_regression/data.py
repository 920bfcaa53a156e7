"""Datasets, seeded random streams, splitting and CSV ingestion."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "SplitSpec",
    "RngStream",
    "load_csv",
    "write_csv",
    "split",
    "train_test_split",
]


class DataError(ValueError):
    """Raised for malformed datasets, CSV files or split requests."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus response vector.

    Parameters
    ----------
    features : array-like, shape (n, d)
    responses : array-like, shape (n,)
    names : optional column names for the features; ``response_name`` names
        the response column when the dataset is written back to CSV.
    """

    features: np.ndarray
    responses: np.ndarray
    names: tuple[str, ...] | None = None
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.responses, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or y.ndim != 1:
            raise DataError("features must be 2-d and responses 1-d")
        if X.shape[0] != y.shape[0]:
            raise DataError(
                f"features have {X.shape[0]} rows but responses have {y.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("a dataset needs n >= 1 and d >= 1")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset entries must be finite")
        if self.names is not None and len(self.names) != X.shape[1]:
            raise DataError("names must match the number of feature columns")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "responses", _frozen(y))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.features[rows], self.responses[rows], self.names,
                       self.response_name)

    def __len__(self):
        return self.n


class RngStream:
    """A reproducible random stream identified by ``(seed, stream)``.

    Streams with the same identifiers replay the same draws. ``fork`` derives
    a child stream deterministically, so independent consumers (data
    generation, splits, machine training) never share state.
    """

    def __init__(self, seed: int, stream: int | Sequence[int] = 0):
        if isinstance(stream, (int, np.integer)):
            key = (int(stream),)
        else:
            key = tuple(int(s) for s in stream)
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = key
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def stream(self) -> int:
        return self.key[-1]

    def fork(self, stream: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(stream),))

    def clone(self) -> "RngStream":
        """Fresh stream with the same identity (replays from the start)."""
        return RngStream(self.seed, self.key)

    def seed64(self) -> int:
        """Draw a 64-bit integer, e.g. to seed compiled code."""
        return int(self.generator.integers(0, 2**63 - 1, dtype=np.int64))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.key})"


@dataclass(frozen=True)
class SplitSpec:
    """How to cut a dataset into a machine-training part and a retained part."""

    k: int
    seed: int = 0
    shuffle: bool = True

    def validate(self, n: int) -> None:
        if not 1 <= self.k <= n - 1:
            raise DataError(f"k={self.k} out of range: need 1 <= k <= n-1 = {n - 1}")


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Return ``(machine_part, retained)``: ``k`` rows for the machines, ``n - k`` retained."""
    spec.validate(data.n)
    if spec.shuffle:
        order = RngStream(spec.seed).generator.permutation(data.n)
    else:
        order = np.arange(data.n)
    return data.subset(order[: spec.k]), data.subset(order[spec.k:])


def train_test_split(data: Dataset, train_fraction: float,
                     rng: RngStream) -> tuple[Dataset, Dataset]:
    """Seeded uniform train/test split with ``round(n * fraction)`` train rows."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie in (0, 1)")
    n_train = int(round(data.n * train_fraction))
    if n_train < 2 or data.n - n_train < 1:
        raise DataError(
            f"train_fraction={train_fraction} on n={data.n} gives "
            f"{n_train} train / {data.n - n_train} test rows"
        )
    order = rng.generator.permutation(data.n)
    return data.subset(order[:n_train]), data.subset(order[n_train:])


def _parse_cell(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    """Parse a headed all-numeric CSV into ``(header, rows x cols array)``.

    Data rows are numbered from 1 (the header is row 0) in error messages.
    """
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        values = []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                raise DataError(
                    f"row {r}: expected {len(header)} cells, found {len(line)}"
                )
            values.append([_parse_cell(c.strip(), r, header[j])
                           for j, c in enumerate(line)])
    arr = np.array(values, dtype=np.float64).reshape(len(values), len(header))
    return header, arr


def load_csv(path, response_column: str | int = "y") -> Dataset:
    """Load a dataset from CSV; every column but the response is a feature."""
    header, arr = read_numeric_csv(path)
    if isinstance(response_column, (int, np.integer)):
        j = int(response_column)
        if not -len(header) <= j < len(header):
            raise DataError(f"response column index {j} out of range")
        j %= len(header)
    else:
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header")
        j = header.index(response_column)
    if arr.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    if len(header) < 2:
        raise DataError(f"{path}: need at least one feature column")
    keep = [c for c in range(len(header)) if c != j]
    return Dataset(arr[:, keep], arr[:, j], tuple(header[c] for c in keep),
                   header[j])


def format_float(x: float) -> str:
    return "%.17g" % x


def write_csv(data: Dataset, path) -> None:
    """Write features then the response column, 17 significant digits."""
    names = data.names or tuple(f"x{j + 1}" for j in range(data.d))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + [data.response_name])
        for x, y in zip(data.features, data.responses):
            w.writerow([format_float(v) for v in x] + [format_float(y)])

"""Replicated benchmark campaigns over the synthetic models.

Each replication draws fresh data, holds out a test fold, splits the training
fold into a machine part and a retained part, trains the pool once and scores
every requested method on the test fold. Replication ``r`` uses the random
stream ``(seed, r)`` only, so campaigns are reproducible and replications can
run in any order or concurrently.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import fit_ewa, predict_ewa_batch
from .collective import (DEFAULT_GRID_SIZE, _draw_cut, calibrate, predict_batch,
                         random_cut_ensemble)
from .data import Dataset, RngStream, train_test_split
from .machines import MachinePool, MachineSpec, default_specs, fit_machine
from .synthetic import DesignSpec, ModelSpec, generate, get_model

__all__ = ["CampaignSpec", "CampaignError", "MethodSummary", "BenchmarkReport",
           "empirical_risk", "run_campaign", "report_emit", "read_report_csv",
           "read_report_json", "CSV_HEADER"]

AGGREGATES = ("cobra", "ewa", "random_cut")
K_POLICIES = ("half", "fixed", "random")
CSV_HEADER = ["method", "replication", "risk", "seconds", "empty_consensus"]
REPORT_FORMAT = "cobra-regression-report"
REPORT_VERSION = 1


class CampaignError(RuntimeError):
    pass


def empirical_risk(predicted, actual) -> float:
    """Mean squared difference between predictions and responses."""
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.shape[0] == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    return float(np.mean((p - a) ** 2))


@dataclass(frozen=True)
class CampaignSpec:
    model: ModelSpec | str
    replications: int = 100
    methods: Sequence[str] | None = None
    design: DesignSpec | str | None = None
    train_fraction: float = 0.8
    k_policy: str = "half"
    k: int | None = None
    seed: int = 0
    machines: Sequence[MachineSpec] | None = None
    grid_size: int = DEFAULT_GRID_SIZE
    grid_scale: str = "linear"
    beta_grid_size: int = 200
    repeats: int = 1
    combine: str = "median"
    workers: int = 1

    def __post_init__(self):
        model = get_model(self.model) if isinstance(self.model, str) else self.model
        object.__setattr__(self, "model", model)
        design = self.design
        if isinstance(design, str):
            design = DesignSpec(design, model.d)
        object.__setattr__(self, "design", design or model.default_design())
        machines = tuple(self.machines) if self.machines is not None else tuple(default_specs())
        object.__setattr__(self, "machines", machines)
        names = [m.name for m in machines]
        if len(set(names)) != len(names):
            raise ValueError(f"machine names must be unique, got {names}")
        methods = tuple(self.methods) if self.methods is not None else tuple(names) + ("cobra",)
        object.__setattr__(self, "methods", methods)
        problems = []
        if self.replications < 1:
            problems.append("replications must be >= 1")
        if not methods:
            problems.append("at least one method is required")
        unknown = [m for m in methods if m not in names and m not in AGGREGATES]
        if unknown:
            problems.append(f"unknown methods {unknown}; choose from {names + list(AGGREGATES)}")
        if len(set(methods)) != len(methods):
            problems.append("methods must not repeat")
        if self.k_policy not in K_POLICIES:
            problems.append(f"k_policy must be one of {K_POLICIES}")
        if self.k_policy == "fixed" and (self.k is None or self.k < 1):
            problems.append("k_policy 'fixed' needs k >= 1")
        if not 0 < self.train_fraction < 1:
            problems.append("train_fraction must lie in (0, 1)")
        if self.repeats < 1:
            problems.append("repeats must be >= 1")
        if self.combine not in ("mean", "median"):
            problems.append("combine must be 'mean' or 'median'")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self):
        return {"model": self.model.id, "n": self.model.n, "d": self.model.d,
                "design": self.design.kind, "replications": self.replications,
                "methods": list(self.methods), "train_fraction": self.train_fraction,
                "k_policy": self.k_policy, "k": self.k, "seed": self.seed,
                "machines": [m.to_dict() for m in self.machines],
                "grid_size": self.grid_size, "grid_scale": self.grid_scale,
                "beta_grid_size": self.beta_grid_size, "repeats": self.repeats,
                "combine": self.combine}


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean: float
    sd: float
    replications: int
    mean_seconds: float

    @property
    def single_replication(self) -> bool:
        return self.replications == 1


@dataclass
class BenchmarkReport:
    spec: dict
    methods: list[str]
    risks: dict[str, list[float]]
    seconds: dict[str, list[float]]
    empty_consensus: dict[str, list[int]]
    replications: list[dict] = field(default_factory=list)

    def summary(self, method: str) -> MethodSummary:
        r = np.asarray(self.risks[method], dtype=np.float64)
        sd = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
        return MethodSummary(method, float(np.mean(r)), sd, int(r.size),
                             float(np.mean(self.seconds[method])))

    def mean(self, method: str) -> float:
        return self.summary(method).mean

    def table(self) -> str:
        lines = [f"{'method':<12} {'mean':>10} {'sd':>10} {'seconds':>9}"]
        for m in self.methods:
            s = self.summary(m)
            lines.append(f"{m:<12} {s.mean:>10.4f} {s.sd:>10.4f} {s.mean_seconds:>9.2f}")
        return "\n".join(lines)


def _split_training(train: Dataset, spec: CampaignSpec, stream: RngStream):
    n = train.n
    if spec.k_policy == "half":
        k = n // 2
    elif spec.k_policy == "fixed":
        k = spec.k
        if not 1 <= k <= n - 1:
            raise ValueError(f"fixed k={k} out of range for a training fold of {n} rows")
    else:
        k = _draw_cut(n, stream.fork(0), 2, 4, 100)
    order = stream.fork(1).generator.permutation(n)
    return train.subset(order[:k]), train.subset(order[k:])


def _run_replication(spec: CampaignSpec, r: int) -> dict:
    stream = RngStream(spec.seed, r)
    data = generate(spec.model, spec.design, stream.fork(0))
    train, test = train_test_split(data, spec.train_fraction, stream.fork(1))
    machine_part, retained = _split_training(train, spec, stream.fork(2))
    out = {"replication": r, "seed": spec.seed, "stream": r, "k": machine_part.n,
           "ell": retained.n, "risk": {}, "seconds": {}, "empty": {}}
    names = [m.name for m in spec.machines]
    methods = set(spec.methods)
    pool = None
    pool_seconds = 0.0
    if methods & (set(names) | {"cobra", "ewa"}):
        pool_rng = stream.fork(3)
        trained = []
        for m, mspec in enumerate(spec.machines):
            t0 = time.perf_counter()
            tm = fit_machine(mspec, machine_part, pool_rng.fork(m))
            fit_s = time.perf_counter() - t0
            pool_seconds += fit_s
            trained.append(tm)
            if mspec.name in methods:
                t0 = time.perf_counter()
                pred = tm.predict(test.features)
                out["seconds"][mspec.name] = fit_s + time.perf_counter() - t0
                out["risk"][mspec.name] = empirical_risk(pred, test.responses)
                out["empty"][mspec.name] = 0
        pool = MachinePool(tuple(trained))
    if "cobra" in methods:
        t0 = time.perf_counter()
        model = calibrate(pool, retained, spec.grid_size, spec.grid_scale, stream.fork(4))
        pred, n_empty = predict_batch(model, test.features)
        out["seconds"]["cobra"] = pool_seconds + time.perf_counter() - t0
        out["risk"]["cobra"] = empirical_risk(pred, test.responses)
        out["empty"]["cobra"] = n_empty
        out["epsilon"] = model.epsilon
        out["alpha"] = model.alpha
        out["calibration"] = model.grid.to_dict()
    if "ewa" in methods:
        t0 = time.perf_counter()
        ewa = fit_ewa(pool, retained, spec.beta_grid_size, stream.fork(5))
        pred = predict_ewa_batch(ewa, test.features)
        out["seconds"]["ewa"] = pool_seconds + time.perf_counter() - t0
        out["risk"]["ewa"] = empirical_risk(pred, test.responses)
        out["empty"]["ewa"] = 0
        out["beta"] = ewa.beta
        out["ewa_weights"] = ewa.weights.tolist()
    if "random_cut" in methods:
        t0 = time.perf_counter()
        combined, runs, cuts = random_cut_ensemble(
            train, spec.machines, test.features, spec.repeats, spec.combine,
            stream.fork(6), spec.grid_size, spec.grid_scale, return_runs=True)
        out["seconds"]["random_cut"] = time.perf_counter() - t0
        out["risk"]["random_cut"] = empirical_risk(combined, test.responses)
        out["empty"]["random_cut"] = 0
        out["random_cut_runs_mean_risk"] = float(np.mean(
            [empirical_risk(run, test.responses) for run in runs]))
        out["random_cut_k"] = cuts.tolist()
    return out


def run_campaign(spec: CampaignSpec, progress=None) -> BenchmarkReport:
    """Run every replication of ``spec`` and aggregate per-method risks.

    ``progress``, when given, is called with each finished replication record.
    """
    def job(r):
        try:
            rec = _run_replication(spec, r)
        except Exception as exc:
            raise CampaignError(
                f"replication {r} (seed={spec.seed}, stream={r}) failed: {exc}") from exc
        if progress is not None:
            progress(rec)
        return rec

    reps = range(spec.replications)
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            records = list(ex.map(job, reps))
    else:
        records = [job(r) for r in reps]
    methods = list(spec.methods)
    return BenchmarkReport(
        spec=spec.to_dict(), methods=methods,
        risks={m: [rec["risk"][m] for rec in records] for m in methods},
        seconds={m: [rec["seconds"][m] for rec in records] for m in methods},
        empty_consensus={m: [rec["empty"][m] for rec in records] for m in methods},
        replications=records)


# ------------------------------------------------------------------ emission


def _fmt(x):
    return repr(float(x))


def report_emit(report: BenchmarkReport, path, format: str = "csv") -> None:
    """Write ``report`` as CSV (rows + summary block) or a structured JSON document."""
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for m in report.methods:
                for r, (risk, sec, emp) in enumerate(zip(report.risks[m], report.seconds[m],
                                                         report.empty_consensus[m])):
                    w.writerow([m, r, _fmt(risk), _fmt(sec), int(emp)])
            w.writerow([])
            w.writerow(["summary", "mean_risk", "sd_risk", "replications", "mean_seconds"])
            for m in report.methods:
                s = report.summary(m)
                w.writerow([m, _fmt(s.mean), _fmt(s.sd), s.replications, _fmt(s.mean_seconds)])
    elif format in ("structured", "json"):
        doc = {
            "format": REPORT_FORMAT, "version": REPORT_VERSION,
            "package_version": __version__, "spec": report.spec,
            "methods": report.methods,
            "summary": {m: {"mean": s.mean, "sd": s.sd, "replications": s.replications,
                            "single_replication": s.single_replication,
                            "mean_seconds": s.mean_seconds}
                        for m in report.methods for s in [report.summary(m)]},
            "risks": report.risks, "seconds": report.seconds,
            "empty_consensus": report.empty_consensus,
            "replications": report.replications,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report_csv(path) -> dict[str, list[tuple[int, float, float, int]]]:
    """Parse the data rows of a CSV report into ``{method: [(rep, risk, s, empty)]}``."""
    rows: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected report header {header}")
        for line in reader:
            if not line:
                break
            m, r, risk, sec, emp = line
            rows.setdefault(m, []).append((int(r), float(risk), float(sec), int(emp)))
    return rows


def read_report_json(path) -> BenchmarkReport:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError("not a benchmark report document")
    return BenchmarkReport(doc["spec"], doc["methods"], doc["risks"], doc["seconds"],
                           doc["empty_consensus"], doc["replications"])

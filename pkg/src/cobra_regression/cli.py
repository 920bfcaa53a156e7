"""Command-line interface: ``cobra-regression simulate|fit|predict|benchmark``."""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .baselines import fit_ewa, predict_ewa_batch
from .collective import calibrate
from .data import (DataError, RngStream, SplitSpec, format_float, load_csv,
                   read_numeric_csv, split, write_csv)
from .harness import CampaignSpec, empirical_risk, report_emit, run_campaign
from .machines import (KINDS, MachineError, MachineSpec, TrainedMachine, MachinePool,
                       default_specs, read_external_csv, train_pool)
from .persistence import load_model, save_model
from .synthetic import MODELS, DesignSpec, generate, get_model

DEFAULT_MACHINES = ",".join(s.name for s in default_specs())


def _guarded(fn):
    """Report library errors as one diagnostic line and exit with status 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, RuntimeError, OSError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def _check(problems):
    if problems:
        raise click.UsageError("; ".join(problems))


def _auto_float(value, flag, problems, positive=True, upper=None):
    if value == "auto":
        return None
    try:
        x = float(value)
    except ValueError:
        problems.append(f"{flag} must be 'auto' or a number, got {value!r}")
        return None
    if not np.isfinite(x) or (positive and x <= 0) or (upper is not None and x > upper):
        bound = f"in (0, {upper}]" if upper is not None else "positive and finite"
        problems.append(f"{flag} must be {bound}, got {value}")
        return None
    return x


def parse_machines(text: str) -> list[MachineSpec]:
    """Parse ``name[:key=value...]`` items separated by commas.

    ``name`` is a default machine name (lasso, ridge, knn, tree, forest) or a
    machine kind; extra ``key=value`` pairs override hyperparameters.
    """
    defaults = {s.name: s for s in default_specs()}
    specs = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        name, *pairs = item.split(":")
        if name in defaults:
            base = defaults[name]
        elif name in KINDS and name != "external":
            base = MachineSpec(name)
        else:
            raise MachineError(f"unknown machine {name!r}; choose from "
                               f"{sorted(defaults) + [k for k in KINDS if k != 'external']}")
        hp = dict(base.hyperparameters)
        for pair in pairs:
            key, sep, value = pair.partition("=")
            if not sep:
                raise MachineError(f"expected key=value, got {pair!r}", name)
            if value.lower() in ("true", "false"):
                hp[key] = value.lower() == "true"
            elif value.lower() == "none":
                hp[key] = None
            else:
                try:
                    hp[key] = float(value) if any(c in value for c in ".eE") else int(value)
                except ValueError:
                    raise MachineError(f"{key}={value!r} is not a number", name) from None
        specs.append(MachineSpec(base.kind, hp, name))
    return specs


@click.group()
@click.version_option(__version__, prog_name="cobra-regression")
def main():
    """Consensus-based nonlinear regression aggregation."""


@main.command()
@click.option("--model", "model_id", required=True,
              type=click.Choice(sorted(MODELS), case_sensitive=False),
              help="Synthetic model id.")
@click.option("--design", type=click.Choice(["uncorrelated", "correlated"]), default=None,
              help="Covariate design  [default: the model's own design, else uncorrelated]")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Dataset CSV to write; metadata goes to <out>.meta.json.")
@_guarded
def simulate(model_id, design, seed, out):
    """Draw one dataset from a synthetic model."""
    spec = get_model(model_id)
    dspec = DesignSpec(design, spec.d) if design else spec.default_design()
    if spec.design is not None and dspec.kind != spec.design:
        raise click.UsageError(f"model {spec.id} is defined for the {spec.design} design only")
    data = generate(spec, dspec, RngStream(seed))
    write_csv(data, out)
    meta = {"model": spec.id, "design": dspec.kind, "seed": seed, "n": data.n, "d": data.d,
            "noise": spec.noise, "response_column": data.response_name,
            "package_version": __version__}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    click.echo(f"wrote {data.n} x {data.d + 1} to {out}")


@main.command()
@click.argument("data_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--response", default="y", show_default=True, help="Response column name.")
@click.option("--machines", default=DEFAULT_MACHINES, show_default=True,
              help="Comma-separated machines, each name[:key=value...].")
@click.option("--external", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="CSV of precomputed machine predictions aligned with the data rows.")
@click.option("--k", type=int, default=None,
              help="Rows used to train the machines  [default: half of the data]")
@click.option("--shuffle/--no-shuffle", default=True, show_default=True,
              help="Shuffle rows before splitting.")
@click.option("--method", type=click.Choice(["cobra", "ewa"]), default="cobra",
              show_default=True, help="Aggregation method.")
@click.option("--grid-size", type=int, default=200, show_default=True,
              help="Number of epsilon grid points.")
@click.option("--grid-scale", type=click.Choice(["linear", "logistic"]), default="linear",
              show_default=True, help="Spacing of the epsilon grid.")
@click.option("--alpha", default="auto", show_default=True,
              help="Agreement fraction in (0, 1], or 'auto' to calibrate.")
@click.option("--epsilon", default="auto", show_default=True,
              help="Tolerance > 0, or 'auto' to calibrate.")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
@click.option("--model-out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Where to write the fitted model (JSON).")
@_guarded
def fit(data_path, response, machines, external, k, shuffle, method, grid_size, grid_scale,
        alpha, epsilon, seed, model_out):
    """Split, train the machine pool, calibrate and save a model."""
    problems = []
    a = _auto_float(alpha, "--alpha", problems, upper=1.0)
    e = _auto_float(epsilon, "--epsilon", problems)
    if grid_size < 1:
        problems.append("--grid-size must be >= 1")
    if k is not None and k < 1:
        problems.append("--k must be >= 1")
    if method == "ewa" and (a is not None or e is not None):
        problems.append("--alpha/--epsilon apply to --method cobra only")
    try:
        specs = parse_machines(machines)
    except MachineError as exc:
        problems.append(str(exc))
        specs = []
    _check(problems)

    data = load_csv(data_path, response)
    extra = read_external_csv(external, data.features) if external else {}
    if not specs and not extra:
        raise click.UsageError("no machines selected")
    k = data.n // 2 if k is None else k
    machine_part, retained = split(data, SplitSpec(k, seed, shuffle))
    rng = RngStream(seed)
    pool = train_pool(machine_part, specs, rng.fork(1)) if specs else None
    ext = [TrainedMachine(MachineSpec("external", name=name), est, machine_part.n, data.d)
           for name, est in extra.items()]
    pool = MachinePool((pool.machines if pool else ()) + tuple(ext))
    if method == "ewa":
        model = fit_ewa(pool, retained, rng=rng.fork(2))
        save_model(model, model_out)
        click.echo(f"beta: {format_float(model.beta)}")
        click.echo("weights: " + ", ".join(f"{n}={w:.6g}" for n, w in
                                            zip(pool.names, model.weights)))
        click.echo(f"validation risk: {format_float(float(model.beta_risks.min()))}")
        return
    model = calibrate(pool, retained, grid_size, grid_scale, rng.fork(2), e, a)
    save_model(model, model_out)
    click.echo(f"epsilon: {format_float(model.epsilon)}")
    click.echo(f"alpha: {format_float(model.alpha)} ({model.need}/{model.M} machines)")
    if model.grid is not None:
        click.echo(f"validation risk: {format_float(model.grid.risk)}")
    else:
        click.echo("validation risk: not computed (epsilon and alpha given)")


@main.command()
@click.argument("model_path", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("query_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, allow_dash=True), default="-",
              show_default=True, help="Predictions CSV ('-' for standard output).")
@click.option("--response", default=None,
              help="Response column in the query file; when given, the test risk is reported.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for batch prediction.")
@_guarded
def predict(model_path, query_path, out, response, threads):
    """Predict every row of a query CSV with a saved model."""
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")
    model = load_model(model_path)
    header, arr = read_numeric_csv(query_path)
    y = None
    if response is not None:
        if response not in header:
            raise DataError(f"response column {response!r} not in {query_path}")
        j = header.index(response)
        y = arr[:, j]
        arr = np.delete(arr, j, axis=1)
    d = model.pool.d
    if arr.shape[1] != d:
        raise DataError(f"query has {arr.shape[1]} feature columns, model expects {d}")
    if hasattr(model, "epsilon"):
        if arr.shape[0]:
            res = model.aggregate(model.machine_outputs(arr), workers=threads)
            pred, flags = res.predictions, res.empty.astype(int)
        else:
            pred, flags = np.empty(0), np.zeros(0, dtype=int)
    else:
        pred = predict_ewa_batch(model, arr) if arr.shape[0] else np.empty(0)
        flags = np.zeros(len(pred), dtype=int)
    fh = sys.stdout if out == "-" else open(out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prediction", "empty_consensus"])
        for p, f in zip(pred, flags):
            w.writerow([format_float(p), int(f)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if y is not None and len(y):
        click.echo(f"risk: {format_float(empirical_risk(pred, y))}", err=out == "-")


@main.command()
@click.option("--model", "model_id", required=True,
              type=click.Choice(sorted(MODELS), case_sensitive=False),
              help="Synthetic model id.")
@click.option("--design", type=click.Choice(["uncorrelated", "correlated"]), default=None,
              help="Covariate design  [default: the model's own design, else uncorrelated]")
@click.option("--replications", type=int, default=100, show_default=True,
              help="Independent replications.")
@click.option("--machines", default=DEFAULT_MACHINES, show_default=True,
              help="Comma-separated machine pool, each name[:key=value...].")
@click.option("--methods", default=None,
              help="Comma-separated subset of the machine names, cobra, ewa, random_cut"
                   "  [default: every machine and cobra]")
@click.option("--train-fraction", type=float, default=0.8, show_default=True,
              help="Outer train fraction; the rest is the test fold.")
@click.option("--k-policy", type=click.Choice(["half", "fixed", "random"]), default="half",
              show_default=True, help="How the training fold is cut for the machines.")
@click.option("--k", type=int, default=None, help="Machine rows for --k-policy fixed.")
@click.option("--repeats", type=int, default=1, show_default=True,
              help="Random cuts per replication for the random-cut ensemble.")
@click.option("--combine", type=click.Choice(["mean", "median"]), default="median",
              show_default=True, help="How random-cut runs are combined.")
@click.option("--grid-size", type=int, default=200, show_default=True,
              help="Number of epsilon grid points.")
@click.option("--grid-scale", type=click.Choice(["linear", "logistic"]), default="linear",
              show_default=True, help="Spacing of the epsilon grid.")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
@click.option("--threads", type=int, default=None,
              help="Worker threads for replications  [default: available CPUs]")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=".",
              show_default=True, help="Directory for report.csv and report.json.")
@_guarded
def benchmark(model_id, design, replications, machines, methods, train_fraction, k_policy, k,
              repeats, combine, grid_size, grid_scale, seed, threads, out_dir):
    """Run a replicated campaign and write CSV and JSON reports.

    With --k-policy random and --repeats above 1, the cobra method is run as
    the random-cut ensemble.
    """
    problems = []
    try:
        specs = parse_machines(machines)
    except MachineError as exc:
        problems.append(str(exc))
        specs = []
    if methods is None:
        methods = ",".join([s.name for s in specs] + ["cobra"])
    names = [m.strip() for m in methods.split(",") if m.strip()]
    if replications < 1:
        problems.append("--replications must be >= 1")
    if not names:
        problems.append("--methods must name at least one method")
    if repeats < 1:
        problems.append("--repeats must be >= 1")
    if repeats > 1 and k_policy != "random" and "random_cut" not in names:
        problems.append("--repeats > 1 needs --k-policy random or the random_cut method")
    if k_policy == "fixed" and k is None:
        problems.append("--k-policy fixed needs --k")
    if k is not None and k_policy != "fixed":
        problems.append("--k applies to --k-policy fixed only")
    if threads is not None and threads < 1:
        problems.append("--threads must be >= 1")
    if grid_size < 1:
        problems.append("--grid-size must be >= 1")
    _check(problems)
    if k_policy == "random" and repeats > 1 and "cobra" in names:
        names = ["random_cut" if m == "cobra" else m for m in names]
    spec = get_model(model_id)
    dspec = DesignSpec(design, spec.d) if design else None
    try:
        campaign = CampaignSpec(spec, replications, names, dspec, train_fraction, k_policy, k,
                                seed, specs, grid_size=grid_size, grid_scale=grid_scale,
                                repeats=repeats, combine=combine,
                                workers=threads or os.cpu_count() or 1)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    report = run_campaign(campaign)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_emit(report, out_dir / "report.csv", "csv")
    report_emit(report, out_dir / "report.json", "structured")
    click.echo(report.table())
    click.echo(f"reports written to {out_dir}")


if __name__ == "__main__":
    main()

"""Evaluation metrics, experiment grids, and the Monte-Carlo runner.

A grid is a JSON-friendly document with five sweep axes (m, n, N, eps,
eps_h; each a scalar or a list), a replication count, a base seed, and the
estimator/metric lists. Grid points enumerate the axis product with m
outermost and eps_h innermost; a null N resolves to m * n at each point.

Each (grid point, replication) task is a pure function of the grid and the
base seed: its generation, contamination, and single-source-pick streams
are keyed by SeedSequence(base_seed, spawn_key=(grid_id, replication,
role)) with roles 0, 1, 2 respectively. Tasks run inline or on a process
pool; either way rows come back in task order, so the results CSV is
byte-identical for any worker count.

Results are long-form rows, one metric value per row:
  grid_id,m,n,N,eps,eps_h,replication,estimator,metric,value,status
A failed pipeline or estimator yields rows with an empty value and a
status code instead of aborting the run.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .classifier import predict_labels, train_calibrated_classifier
from .datasets import _format_float, atomic_writer
from .errors import (
    DegenerateSourceError,
    DivisionGuardError,
    EstimationError,
    NumericalError,
    SchemaError,
)
from .kernels import KernelSpec, fit_mmd_terms
from .simplex import (
    OptimizerConfig,
    baseline_estimate,
    rod_estimate,
    roe_estimate,
    roe_multistep,
)
from .simulate import ContaminationPlan, contaminate, default_mixture, generate_sources
from .weighting import WeightingConfig

RESULTS_HEADER = ("grid_id", "m", "n", "N", "eps", "eps_h", "replication",
                  "estimator", "metric", "value", "status")

ESTIMATOR_NAMES = ("single", "average", "trim", "rod", "roe", "roe-multi",
                   "oracle")
METRIC_NAMES = ("mse", "fsn", "misclassification")

DEFAULT_ESTIMATORS = ("single", "average", "trim", "rod", "roe", "oracle")
DEFAULT_METRICS = ("mse", "fsn")
DEFAULT_REPLICATIONS = 100

_GRID_KEYS = ("m", "n", "N", "eps", "eps_h", "replications", "base_seed",
              "estimators", "metrics")


def mse_metric(q_hat, q_star) -> float:
    """Squared Euclidean distance between estimate and truth."""
    a = np.asarray(q_hat, dtype=np.float64)
    b = np.asarray(q_star, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("q_hat and q_star must have the same length")
    return float(np.sum((a - b) ** 2))


def fsn_metric(selected, outliers) -> int:
    """How many selected sources are actually outliers: |S intersect O|."""
    s = np.asarray(selected, dtype=np.int64)
    o = np.asarray(outliers, dtype=np.int64)
    return int(np.intersect1d(s, o).size)


def misclassification_error(predicted, truth) -> float:
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError("predictions and truth must have the same length")
    return float(np.mean(p != t))


class GridPoint(NamedTuple):
    grid_id: int
    m: int
    n: int
    big_n: int
    eps: float
    eps_h: float


def _schema(check: bool, message: str) -> None:
    if not check:
        raise SchemaError(message)


def _int_axis(doc, key, minimum=1):
    raw = doc[key]
    values = raw if isinstance(raw, list) else [raw]
    _schema(len(values) > 0, f"{key} axis is empty")
    out = []
    for v in values:
        _schema(isinstance(v, int) and not isinstance(v, bool) and v >= minimum,
                f"{key} entries must be integers >= {minimum}, got {v!r}")
        out.append(v)
    return tuple(out)


def _count_axis(doc, key):
    # like _int_axis but entries may be null (resolved to m * n per point)
    raw = doc.get(key)
    values = raw if isinstance(raw, list) else [raw]
    _schema(len(values) > 0, f"{key} axis is empty")
    out = []
    for v in values:
        if v is None:
            out.append(None)
            continue
        _schema(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                f"{key} entries must be positive integers or null, got {v!r}")
        out.append(v)
    return tuple(out)


def _eps_axis(doc, key):
    raw = doc[key]
    values = raw if isinstance(raw, list) else [raw]
    _schema(len(values) > 0, f"{key} axis is empty")
    out = []
    for v in values:
        _schema(isinstance(v, (int, float)) and not isinstance(v, bool)
                and 0.0 <= float(v) < 0.5,
                f"{key} entries must lie in [0, 0.5), got {v!r}")
        out.append(float(v))
    return tuple(out)


def _name_list(doc, key, allowed, default):
    raw = doc.get(key)
    if raw is None:
        return default
    _schema(isinstance(raw, list) and len(raw) > 0, f"{key} must be a non-empty list")
    for name in raw:
        _schema(name in allowed, f"unknown {key[:-1]} {name!r}")
    return tuple(raw)


@dataclass(frozen=True)
class ExperimentGrid:
    """Sweep axes plus run bookkeeping; axes are tuples of point values."""

    ms: tuple
    ns: tuple
    big_ns: tuple
    epss: tuple
    eps_hs: tuple
    replications: int
    base_seed: int | None
    estimators: tuple
    metrics: tuple

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentGrid":
        _schema(isinstance(doc, dict), "grid config must be a JSON object")
        for key in doc:
            _schema(key in _GRID_KEYS, f"unknown grid key {key!r}")
        for key in ("m", "n", "eps", "eps_h"):
            _schema(key in doc, f"grid key {key!r} is required")
        replications = doc.get("replications", DEFAULT_REPLICATIONS)
        _schema(isinstance(replications, int) and not isinstance(replications, bool)
                and replications >= 1, "replications must be a positive integer")
        base_seed = doc.get("base_seed")
        _schema(base_seed is None or (isinstance(base_seed, int)
                                      and not isinstance(base_seed, bool)),
                "base_seed must be an integer or null")
        return cls(
            ms=_int_axis(doc, "m"),
            ns=_int_axis(doc, "n"),
            big_ns=_count_axis(doc, "N"),
            epss=_eps_axis(doc, "eps"),
            eps_hs=_eps_axis(doc, "eps_h"),
            replications=replications,
            base_seed=base_seed,
            estimators=_name_list(doc, "estimators", ESTIMATOR_NAMES,
                                  DEFAULT_ESTIMATORS),
            metrics=_name_list(doc, "metrics", METRIC_NAMES, DEFAULT_METRICS),
        )

    @classmethod
    def from_json(cls, path: str) -> "ExperimentGrid":
        import json

        with open(path, "r") as handle:
            try:
                doc = json.load(handle)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"grid config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def points(self) -> list:
        out = []
        for grid_id, (m, n, big_n, eps, eps_h) in enumerate(
                product(self.ms, self.ns, self.big_ns, self.epss, self.eps_hs)):
            out.append(GridPoint(grid_id, m, n,
                                 m * n if big_n is None else big_n, eps, eps_h))
        return out


def weighting_config_for(rule: str, eps_h: float, m: int) -> WeightingConfig:
    """Build the weighting config, sizing median-of-means groups from eps_h.

    Group count 2*floor(eps_h*m) + 1 is the smallest odd number strictly
    above twice the outlier budget, so a majority of groups stays clean.
    """
    if rule == "median_of_means":
        return WeightingConfig(rule=rule, eps_h=eps_h,
                               mom_groups=2 * math.floor(eps_h * m) + 1)
    return WeightingConfig(rule=rule, eps_h=eps_h)


def _status_code(exc: Exception) -> str:
    if isinstance(exc, DegenerateSourceError):
        return "degenerate_source"
    if isinstance(exc, NumericalError):
        return "numerical_error"
    if isinstance(exc, DivisionGuardError):
        return "division_guard"
    if isinstance(exc, SchemaError):
        return "schema_error"
    if isinstance(exc, EstimationError):
        return "estimation_error"
    if isinstance(exc, ValueError):
        return "invalid_value"
    return "error"


def _run_task(args) -> list:
    (point, rep, base_seed, estimators, metrics, mixture, cfg, rule,
     kernel) = args
    prefix = (point.grid_id, point.m, point.n, point.big_n, point.eps,
              point.eps_h, rep)

    def error_rows(code, names):
        return [(*prefix, est, met, None, code)
                for est in names for met in metrics]

    try:
        gen_key = np.random.SeedSequence(base_seed,
                                         spawn_key=(point.grid_id, rep, 0))
        con_key = np.random.SeedSequence(base_seed,
                                         spawn_key=(point.grid_id, rep, 1))
        pick_key = np.random.SeedSequence(base_seed,
                                          spawn_key=(point.grid_id, rep, 2))
        sources, target, target_labels = generate_sources(
            mixture, point.m, point.n, point.big_n, gen_key)
        plan = ContaminationPlan(eps=point.eps, scheme="flip_largest")
        contaminated, outliers = contaminate(sources, plan, con_key)
        quads = [fit_mmd_terms(src, target, kernel) for src in contaminated]
    except Exception as exc:
        return error_rows(_status_code(exc), estimators)

    wcfg = weighting_config_for(rule, point.eps_h, point.m)
    inliers = np.setdiff1d(np.arange(point.m), outliers)
    cache = {}

    def rod():
        if "rod" not in cache:
            cache["rod"] = rod_estimate(quads, cfg, wcfg)
        return cache["rod"]

    def estimate(kind):
        if kind == "single":
            rng = np.random.Generator(np.random.Philox(pick_key))
            return baseline_estimate(quads, "single", cfg,
                                     source_index=int(rng.integers(point.m)))
        if kind == "average":
            return baseline_estimate(quads, "average", cfg)
        if kind == "trim":
            return baseline_estimate(quads, "trim", cfg, eps_h=point.eps_h)
        if kind == "rod":
            return rod()
        if kind == "roe":
            return roe_estimate(quads, cfg, wcfg, q_prime=rod().q_hat)
        if kind == "roe-multi":
            return roe_multistep(quads, cfg, wcfg, q0=rod().q_hat)
        return baseline_estimate(quads, "oracle", cfg, inlier_set=inliers)

    rows = []
    for est in estimators:
        try:
            result = estimate(est)
            values = {}
            for met in metrics:
                if met == "mse":
                    values[met] = mse_metric(result.q_hat,
                                             mixture.target_proportions)
                elif met == "fsn":
                    values[met] = float(fsn_metric(result.weights.selected,
                                                   outliers))
                else:
                    params = train_calibrated_classifier(
                        contaminated, result.q_hat, cfg, wcfg)
                    predicted = predict_labels(params, target.covariates)
                    values[met] = misclassification_error(predicted,
                                                          target_labels)
            rows.extend((*prefix, est, met, values[met], "ok")
                        for met in metrics)
        except Exception as exc:
            rows.extend(error_rows(_status_code(exc), [est]))
    return rows


def run_experiment_grid(grid: ExperimentGrid, workers: int = 1,
                        base_seed: int | None = None, mixture=None,
                        cfg: OptimizerConfig | None = None, rule: str = "mwv",
                        kernel: KernelSpec | None = None) -> list:
    """Run every (grid point, replication) task; returns long-form rows.

    base_seed overrides the grid's own seed; one of the two must be set.
    Rows are ordered by (grid point, replication, estimator listing,
    metric listing) whatever the worker count.
    """
    seed = grid.base_seed if base_seed is None else base_seed
    if seed is None:
        raise ValueError("a base seed is required (grid base_seed or argument)")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    mixture = default_mixture() if mixture is None else mixture
    cfg = OptimizerConfig() if cfg is None else cfg
    kernel = KernelSpec() if kernel is None else kernel
    tasks = [(point, rep, seed, grid.estimators, grid.metrics, mixture, cfg,
              rule, kernel)
             for point in grid.points() for rep in range(grid.replications)]
    if workers == 1:
        chunks = map(_run_task, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks, chunksize=1))
    return [row for chunk in chunks for row in chunk]


def write_results_csv(rows, path: str) -> None:
    with atomic_writer(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULTS_HEADER)
        for row in rows:
            (grid_id, m, n, big_n, eps, eps_h, rep, est, met, value,
             status) = row
            writer.writerow([
                grid_id, m, n, big_n, _format_float(eps),
                _format_float(eps_h), rep, est, met,
                "" if value is None else _format_float(value), status,
            ])


def load_results_csv(path: str) -> list:
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_HEADER:
            raise SchemaError("results file does not carry the expected header")
        rows = []
        for i, record in enumerate(reader, start=2):
            if len(record) != len(RESULTS_HEADER):
                raise SchemaError(f"line {i}: expected "
                                  f"{len(RESULTS_HEADER)} columns")
            try:
                rows.append((int(record[0]), int(record[1]), int(record[2]),
                             int(record[3]), float(record[4]),
                             float(record[5]), int(record[6]), record[7],
                             record[8],
                             None if record[9] == "" else float(record[9]),
                             record[10]))
            except ValueError as exc:
                raise SchemaError(f"line {i}: {exc}") from None
    return rows

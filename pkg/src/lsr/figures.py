"""Render benchmark results into metric-versus-parameter panels.

One panel per call: the chosen metric on the y axis against one swept
grid axis on the x axis, one line per estimator, mean over replications
with a standard-error band (error bars when the sweep has one point).
Rows whose status is not "ok" are dropped before aggregation; rows from
other swept axes pool into the mean. Colors are keyed by estimator name
so the same estimator looks the same across panels, and the legend
follows the order the estimators were requested in.
"""

import os
import tempfile
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import RESULTS_HEADER, load_results_csv
from .errors import SchemaError

METRICS = ("mse", "fsn", "misclassification")
X_AXES = ("m", "n", "N", "eps", "eps_h")

# fixed series colors; estimators outside this table draw from the
# matplotlib tab10 cycle in sorted-name order
_PALETTE = {
    "single": "#8c564b",
    "average": "#7f7f7f",
    "trim": "#2ca02c",
    "rod": "#ff7f0e",
    "roe": "#1f77b4",
    "roe-multi": "#9467bd",
    "oracle": "#d62728",
}


@dataclass(frozen=True)
class FigureSpec:
    """One panel: which CSV, which metric, which x axis, which series."""

    input_path: str
    metric: str
    x_axis: str
    output_path: str
    estimators: tuple

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.x_axis not in X_AXES:
            raise ValueError(f"x_axis must be one of {X_AXES}")
        names = tuple(self.estimators)
        if not names:
            raise ValueError("estimators must be non-empty")
        object.__setattr__(self, "estimators", names)


def _color_for(name: str, fallback_rank: dict) -> str:
    if name in _PALETTE:
        return _PALETTE[name]
    cycle = plt.get_cmap("tab10").colors
    return cycle[fallback_rank[name] % len(cycle)]


def _series(rows, spec: FigureSpec):
    """Aggregate rows into {estimator: (xs, means, standard errors)}."""
    x_col = RESULTS_HEADER.index(spec.x_axis)
    grouped = {}
    for row in rows:
        if row[10] != "ok" or row[8] != spec.metric or row[9] is None:
            continue
        if row[7] not in spec.estimators:
            continue
        grouped.setdefault(row[7], {}).setdefault(row[x_col], []).append(row[9])
    series = {}
    for name, by_x in grouped.items():
        xs = sorted(by_x)
        means = np.array([np.mean(by_x[x]) for x in xs])
        errors = np.array([
            np.std(by_x[x], ddof=1) / np.sqrt(len(by_x[x]))
            if len(by_x[x]) > 1 else 0.0
            for x in xs
        ])
        series[name] = (np.array(xs, dtype=np.float64), means, errors)
    return series


def render_metric_panels(spec: FigureSpec) -> str:
    """Draw the panel described by spec; returns the written image path.

    Raises SchemaError when the results file lacks the expected header or
    when no requested estimator has an "ok" row for the metric. A
    requested estimator with no usable rows is skipped.
    """
    rows = load_results_csv(spec.input_path)
    series = _series(rows, spec)
    if not series:
        raise SchemaError(
            f"no ok rows for metric {spec.metric!r} and estimators "
            f"{list(spec.estimators)} in {spec.input_path}")

    unknown = sorted(name for name in spec.estimators if name not in _PALETTE)
    fallback_rank = {name: i for i, name in enumerate(unknown)}

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for name in spec.estimators:
            if name not in series:
                continue
            xs, means, errors = series[name]
            color = _color_for(name, fallback_rank)
            if xs.size == 1:
                ax.errorbar(xs, means, yerr=errors, color=color, label=name,
                            marker="o", capsize=4)
            else:
                ax.plot(xs, means, color=color, label=name, marker="o")
                ax.fill_between(xs, means - errors, means + errors,
                                color=color, alpha=0.2, linewidth=0)
        ax.set_xlabel(spec.x_axis)
        ax.set_ylabel(spec.metric)
        ax.set_title(f"{spec.metric} vs {spec.x_axis}")
        ax.legend()
        fig.tight_layout()
        directory = os.path.dirname(os.path.abspath(spec.output_path))
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
        os.close(fd)
        try:
            fig.savefig(tmp, dpi=150)
            os.replace(tmp, spec.output_path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    finally:
        plt.close(fig)
    return spec.output_path

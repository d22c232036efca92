"""Robust weighting rules over scalar per-source values.

Each rule maps a length-m value vector to nonnegative weights that sum to
one, with equal mass on a selected subset and zero elsewhere:

  mwv              the size-s subset with minimal population variance,
                   s = m - floor(eps_h * m); the minimizer is always a
                   window of consecutive order statistics
  truncated        drop the lowest and highest floor(eps_h * m) values
  trimmed          keep the s smallest values
  median_of_means  split indices into L contiguous blocks; the block whose
                   mean is the median of block means gets all the mass

Ties anywhere are resolved by a stable sort on (value, original index);
for mwv, equal-variance windows resolve to the lowest starting rank.

Window variances are computed per window with a two-pass mean subtraction
(vectorized over all windows) rather than global prefix sums: with
adversarial inputs around 1e9 the prefix-sum form loses ~1e2 absolute
precision to cancellation, which can misrank inlier windows. m is small
throughout this package, so the O(m s) cost is irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_RULES = ("mwv", "truncated", "trimmed", "median_of_means")


@dataclass(frozen=True)
class WeightingConfig:
    """Which rule to apply and its contamination budget."""

    rule: str = "mwv"
    eps_h: float = 0.0
    mom_groups: int = 1

    def __post_init__(self):
        if self.rule not in _RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {_RULES}")
        if not (0.0 <= self.eps_h < 0.5):
            raise ValueError("eps_h must lie in [0, 1/2)")
        if self.mom_groups < 1 or self.mom_groups % 2 == 0:
            raise ValueError("mom_groups must be odd and >= 1")


@dataclass
class RobustWeights:
    """Weight vector plus the index set it is supported on."""

    weights: np.ndarray
    selected: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        sel = np.sort(np.asarray(self.selected, dtype=np.int64))
        if w.ndim != 1 or np.any(w < 0):
            raise ValueError("weights must be a nonnegative vector")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if not np.array_equal(sel, np.flatnonzero(w > 0)):
            raise ValueError("selected must be exactly the nonzero-weight indices")
        self.weights = w
        self.selected = sel


def _as_values(values, min_size: int = 1) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < min_size:
        raise ValueError(f"values must be a 1-D vector with at least {min_size} entries")
    if not np.all(np.isfinite(v)):
        raise ValueError("values contain non-finite entries")
    return v


def _check_eps(eps_h: float) -> float:
    if not (0.0 <= eps_h < 0.5):
        raise ValueError("eps_h must lie in [0, 1/2)")
    return float(eps_h)


def _stable_order(v: np.ndarray) -> np.ndarray:
    # sort by value, ties by original index
    return np.lexsort((np.arange(v.size), v))


def _uniform_on(indices: np.ndarray, m: int) -> RobustWeights:
    w = np.zeros(m)
    w[indices] = 1.0 / indices.size
    return RobustWeights(w, indices)


def mwv_weights(values, eps_h: float) -> RobustWeights:
    """Minimum-variance subset of size s = m - floor(eps_h m), uniform on it."""
    v = _as_values(values, min_size=2)
    eps_h = _check_eps(eps_h)
    m = v.size
    s = m - int(np.floor(eps_h * m))
    order = _stable_order(v)
    windows = sliding_window_view(v[order], s)
    variances = np.var(windows, axis=1)
    start = int(np.argmin(variances))  # first minimum = lowest starting rank
    return _uniform_on(order[start : start + s], m)


def truncated_weights(values, eps_h: float) -> RobustWeights:
    """Drop the g lowest and g highest order statistics, g = floor(eps_h m)."""
    v = _as_values(values)
    eps_h = _check_eps(eps_h)
    m = v.size
    g = int(np.floor(eps_h * m))
    order = _stable_order(v)
    return _uniform_on(order[g : m - g], m)


def trimmed_weights(values, eps_h: float) -> RobustWeights:
    """Keep the s smallest values, s = m - floor(eps_h m)."""
    v = _as_values(values)
    eps_h = _check_eps(eps_h)
    m = v.size
    s = m - int(np.floor(eps_h * m))
    order = _stable_order(v)
    return _uniform_on(order[:s], m)


def median_of_means_weights(values, mom_groups: int) -> RobustWeights:
    """Contiguous blocks by original index; the median-mean block takes all mass.

    With m not divisible by L the last block absorbs the remainder; mass on
    the winning block is 1/|block|, which equals the textbook L/m whenever
    m is divisible by L.
    """
    v = _as_values(values)
    m = v.size
    if mom_groups < 1 or mom_groups % 2 == 0:
        raise ValueError("mom_groups must be odd and >= 1")
    if mom_groups > m:
        raise ValueError("mom_groups cannot exceed the number of values")
    size = m // mom_groups
    bounds = [(g * size, (g + 1) * size if g < mom_groups - 1 else m)
              for g in range(mom_groups)]
    means = np.array([v[a:b].mean() for a, b in bounds])
    med = int(np.argsort(means, kind="stable")[mom_groups // 2])
    a, b = bounds[med]
    return _uniform_on(np.arange(a, b), m)


def robust_weights(values, cfg: WeightingConfig) -> RobustWeights:
    """Dispatch to the configured rule."""
    if cfg.rule == "mwv":
        return mwv_weights(values, cfg.eps_h)
    if cfg.rule == "truncated":
        return truncated_weights(values, cfg.eps_h)
    if cfg.rule == "trimmed":
        return trimmed_weights(values, cfg.eps_h)
    return median_of_means_weights(values, cfg.mom_groups)


def robust_mean(values, cfg: WeightingConfig) -> float:
    """Weighted mean under the configured rule's weights."""
    v = _as_values(values)
    return float(robust_weights(v, cfg).weights @ v)

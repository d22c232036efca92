"""Gaussian kernel and the per-source MMD quadratic form.

For a source with classes k = 1..K and an unlabeled target sample, the
squared-MMD objective in the mixture weights q reduces to

    L(q) = q' A q - 2 q' b

where, with kernel k(.,.),

    A[k,k]   = sum_{x != x' in class k} k(x, x') / (n_k (n_k - 1))
    A[k,k']  = mean of k over all cross pairs class_k x class_k'
    b[k]     = mean of k over all pairs class_k x target.

The diagonal excludes self-pairs (a U-statistic) so every entry is an
unbiased estimate of its population counterpart. Pair sums are evaluated
in fixed 512x512 tiles: numpy's pairwise summation applies within a tile
and the tile order is constant, so results are bit-identical run to run
and independent of any outer parallelism. Each off-diagonal block of A
is computed once and mirrored, which makes A symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import LabeledDataset, UnlabeledDataset
from .errors import DegenerateSourceError

_TILE = 512


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and scale. Gaussian only: k(x,y) = exp(-|x-y|^2 / (2 sigma^2))."""

    family: str = "gaussian"
    bandwidth: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValueError("bandwidth must be a positive finite real")
        if self.bound != 1.0:
            raise ValueError("gaussian kernel has supremum 1")

    @property
    def gamma(self) -> float:
        return 1.0 / (2.0 * self.bandwidth * self.bandwidth)


@dataclass
class MmdQuadratic:
    """The fitted terms (A, b) of one source's quadratic MMD objective."""

    a_matrix: np.ndarray
    b_vector: np.ndarray
    n_per_class: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=np.float64)
        b = np.asarray(self.b_vector, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a_matrix must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("a_matrix must be exactly symmetric")
        if b.shape != (a.shape[0],):
            raise ValueError("b_vector length must match a_matrix")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite quadratic terms")
        self.a_matrix = a
        self.b_vector = b
        self.n_per_class = np.asarray(self.n_per_class, dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return self.a_matrix.shape[0]


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    """Evaluate the kernel on a single pair of points (scalars or d-vectors)."""
    a = np.atleast_1d(np.asarray(x1, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"point shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite inputs")
    d = a - b
    return float(np.exp(-spec.gamma * np.dot(d, d)))


def _tile_sum(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """Sum of k(x_i, y_j) over the full cross product, tiled and deterministic."""
    total = 0.0
    if x.shape[1] == 1:
        xf = x[:, 0]
        yf = y[:, 0]
        for i0 in range(0, xf.size, _TILE):
            xb = xf[i0 : i0 + _TILE]
            for j0 in range(0, yf.size, _TILE):
                blk = np.subtract(xb[:, None], yf[None, j0 : j0 + _TILE])
                np.multiply(blk, blk, out=blk)
                np.multiply(blk, -gamma, out=blk)
                np.exp(blk, out=blk)
                total += float(blk.sum())
        return total
    x2 = np.einsum("ij,ij->i", x, x)
    y2 = np.einsum("ij,ij->i", y, y)
    for i0 in range(0, x.shape[0], _TILE):
        xb = x[i0 : i0 + _TILE]
        for j0 in range(0, y.shape[0], _TILE):
            yb = y[j0 : j0 + _TILE]
            blk = np.add.outer(x2[i0 : i0 + _TILE], y2[j0 : j0 + _TILE])
            blk -= 2.0 * (xb @ yb.T)
            np.multiply(blk, -gamma, out=blk)
            np.exp(blk, out=blk)
            total += float(blk.sum())
    return total


def _cross_sum(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """_tile_sum with a canonical argument orientation.

    Tile order is row-major in the first argument, so _tile_sum(x, y) and
    _tile_sum(y, x) can differ in the last ulp. Ordering the arguments by a
    deterministic key makes cross-class sums bit-identical under relabeling.
    """
    kx = (x.shape[0], x.tobytes())
    ky = (y.shape[0], y.tobytes())
    if ky < kx:
        x, y = y, x
    return _tile_sum(x, y, gamma)


def _self_offdiag_sum(x: np.ndarray, gamma: float) -> float:
    """Sum of k(x_i, x_j) over i != j, exploiting symmetry tile by tile."""
    n = x.shape[0]
    total = 0.0
    for i0 in range(0, n, _TILE):
        xi = x[i0 : i0 + _TILE]
        # diagonal tile: full sum minus the unit diagonal
        diag = _tile_sum(xi, xi, gamma) - xi.shape[0]
        total += diag
        for j0 in range(i0 + _TILE, n, _TILE):
            total += 2.0 * _tile_sum(xi, x[j0 : j0 + _TILE], gamma)
    return total


def fit_mmd_terms(
    source: LabeledDataset, target: UnlabeledDataset, spec: KernelSpec
) -> MmdQuadratic:
    """Build the unbiased quadratic terms (A, b) for one source against the target."""
    if source.dim != target.dim:
        raise ValueError(
            f"source dim {source.dim} does not match target dim {target.dim}"
        )
    counts = source.class_counts
    for k, count in enumerate(counts, start=1):
        if count < 2:
            raise DegenerateSourceError(
                f"class {k} has {count} sample(s); the diagonal U-statistic "
                f"needs at least 2 per class"
            )
    k_classes = source.n_classes
    gamma = spec.gamma
    groups = [source.covariates[idx] for idx in source.class_index]

    a = np.zeros((k_classes, k_classes))
    b = np.zeros(k_classes)
    for i in range(k_classes):
        n_i = counts[i]
        a[i, i] = _self_offdiag_sum(groups[i], gamma) / (n_i * (n_i - 1))
        for j in range(i + 1, k_classes):
            val = _cross_sum(groups[i], groups[j], gamma) / (n_i * counts[j])
            a[i, j] = val
            a[j, i] = val
        b[i] = _tile_sum(groups[i], target.covariates, gamma) / (n_i * target.n_rows)
    return MmdQuadratic(a, b, counts)


def _check_q(quad: MmdQuadratic, q) -> np.ndarray:
    v = np.asarray(q, dtype=np.float64)
    if v.shape != (quad.n_classes,):
        raise ValueError(f"q has shape {v.shape}, expected ({quad.n_classes},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("q contains non-finite entries")
    return v


def mmd_loss(quad: MmdQuadratic, q) -> float:
    """q' A q - 2 q' b. May be negative: it estimates MMD^2 up to a constant."""
    v = _check_q(quad, q)
    return float(v @ quad.a_matrix @ v - 2.0 * (v @ quad.b_vector))


def mmd_gradient(quad: MmdQuadratic, q) -> np.ndarray:
    """Gradient 2 A q - 2 b of mmd_loss at q."""
    v = _check_q(quad, q)
    return 2.0 * (quad.a_matrix @ v) - 2.0 * quad.b_vector


def median_heuristic_bandwidth(arrays, cap: int = 4096) -> float:
    """Median-heuristic bandwidth: sigma^2 = median pairwise squared distance.

    Rows from all arrays are pooled; if the pool exceeds `cap` rows, an
    evenly spaced subsample of `cap` rows is used (deterministic, no RNG).
    """
    mats = [np.asarray(a, dtype=np.float64) for a in arrays]
    if not mats:
        raise ValueError("no arrays given")
    d = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != d for m in mats):
        raise ValueError("all arrays must be 2-D with a common dimension")
    pool = np.vstack(mats)
    if pool.shape[0] > cap:
        keep = np.unique(np.linspace(0, pool.shape[0] - 1, cap).astype(np.int64))
        pool = pool[keep]
    n = pool.shape[0]
    if n < 2:
        raise ValueError("need at least 2 pooled rows")
    sq = np.einsum("ij,ij->i", pool, pool)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * (pool @ pool.T)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.maximum(dist2[iu], 0.0)))
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero; bandwidth undefined")
    return float(np.sqrt(med))

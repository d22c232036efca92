"""Simplex projection, the alternating weighted solver, and the estimators.

The solver minimizes a robustly weighted sum of per-source quadratic
losses L_j(q) = q' A_j q - 2 q' b_j over the probability simplex by
alternating two steps each iteration:

  1. re-weight:  w = RW(z) where z_j = L_j(q) (divergence mode) or
                 z_j = L_j(q) - L_j(q') (excess mode, fixed reference q')
  2. descend:    q <- proj_simplex(q - gamma * sum_j w_j grad L_j(q))

The robust objective at q is the weighted mean of the same values the
weights were computed from: sum_j w_j z_j. In divergence mode that is the
weighted loss; in excess mode it is the robust estimate of the excess
risk at q against q'. The returned iterate is the one with the lowest
robust objective seen, not necessarily the last: weight switches can bump
the objective, and comparing weighted raw losses across different
selections would favour mid-descent subsets over converged ones. The
default step gamma = gamma0 / (2 max_j ||A_j||) keeps each fixed-weight
descent monotone (descent lemma, L <= 2 max_j ||A_j||).

Estimators built on the solver:
  rod_estimate    weights on the losses themselves
  roe_estimate    weights on excess losses against q' (default: ROD's answer)
  roe_multistep   re-anchors q' on the previous answer for refine_steps rounds
  baseline_estimate  single / average / trim / oracle comparison baselines
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .weighting import RobustWeights, WeightingConfig, robust_weights

_STEP_RULES = ("inverse_lipschitz", "sqrt_decay")
_INITS = ("uniform", "seeded_random")


def check_simplex(q, name: str = "q") -> np.ndarray:
    """Validate membership in the probability simplex; returns a float64 copy."""
    v = np.asarray(q, dtype=np.float64).copy()
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a 1-D probability vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(v < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > 1e-10:
        raise ValueError(f"{name} must sum to 1 (got {v.sum()!r})")
    return v


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("input must be a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite entries")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    counts = np.arange(1, x.size + 1)
    valid = np.flatnonzero(u * counts > css)
    if valid.size == 0:
        # Index 0 always qualifies in exact arithmetic; an empty set means the
        # entries are so large that subtracting 1 is lost to rounding.
        raise ValueError("entries too large for a representable projection")
    rho = int(np.max(valid))
    theta = css[rho] / (rho + 1)
    return np.maximum(x - theta, 0.0)


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the projected-gradient alternation."""

    max_iters: int = 500
    step_rule: str = "inverse_lipschitz"
    step_scale: float = 1.0
    tol: float = 1e-8
    refine_steps: int = 2
    init: str = "uniform"
    restarts: int = 1
    seed: int = 0
    keep_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.step_rule not in _STEP_RULES:
            raise ValueError(f"step_rule must be one of {_STEP_RULES}")
        if not (self.step_scale > 0):
            raise ValueError("step_scale must be positive")
        if self.refine_steps < 1:
            raise ValueError("refine_steps must be >= 1")
        if self.init not in _INITS:
            raise ValueError(f"init must be one of {_INITS}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    selected: tuple


@dataclass
class EstimationResult:
    """Estimate plus the weights active at it (feeds the selection metric)."""

    q_hat: np.ndarray
    weights: RobustWeights
    iterations_used: int
    objective: float
    trace: list = field(default_factory=list)


def _spectral_norm(a: np.ndarray, iters: int = 50) -> float:
    """Power-method estimate of the spectral norm of a symmetric matrix."""
    k = a.shape[0]
    # slight ramp keeps the start vector off exact eigen-orthogonality
    v = np.ones(k) + np.arange(k) * 1e-3
    v /= np.linalg.norm(v)
    norm = 0.0
    for _ in range(iters):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
    return norm


def _stack(quads):
    if not quads:
        raise ValueError("need at least one quadratic")
    k = quads[0].a_matrix.shape[0]
    for quad in quads:
        if quad.a_matrix.shape[0] != k:
            raise ValueError("all quadratics must share the same number of classes")
    a = np.stack([quad.a_matrix for quad in quads])
    b = np.stack([quad.b_vector for quad in quads])
    return a, b, k


def _weights_for(z: np.ndarray, wcfg: WeightingConfig) -> RobustWeights:
    if z.size == 1:
        # single source: every rule must keep it (floor(eps_h * 1) = 0)
        return RobustWeights(np.array([1.0]), np.array([0]))
    return robust_weights(z, wcfg)


def _initial_points(k: int, cfg: OptimizerConfig):
    points = []
    for r in range(cfg.restarts):
        if cfg.init == "uniform" and r == 0:
            points.append(np.full(k, 1.0 / k))
        else:
            stream = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(r,)))
            )
            points.append(stream.dirichlet(np.ones(k)))
    return points


def solve_weighted(quads, mode: str, cfg: OptimizerConfig, wcfg: WeightingConfig,
                   q_prime=None) -> EstimationResult:
    """Run the re-weight / descend alternation; see the module docstring."""
    if mode not in ("divergence", "excess"):
        raise ValueError(f"mode must be 'divergence' or 'excess', got {mode!r}")
    a, b, k = _stack(quads)
    if mode == "excess":
        if q_prime is None:
            raise ValueError("excess mode needs the reference point q_prime")
        q_prime = check_simplex(q_prime, name="q_prime")
        if q_prime.size != k:
            raise ValueError("q_prime dimension does not match the quadratics")

    def losses_at(q):
        return np.einsum("mij,i,j->m", a, q, q) - 2.0 * (b @ q)

    loss_ref = losses_at(q_prime) if mode == "excess" else None

    def evaluate(q):
        losses = losses_at(q)
        z = losses if loss_ref is None else losses - loss_ref
        w = _weights_for(z, wcfg)
        return losses, w, float(w.weights @ z)

    if k == 1:
        q = np.array([1.0])
        _, w, obj = evaluate(q)
        return EstimationResult(q, w, 0, obj)

    if cfg.step_rule == "inverse_lipschitz":
        rho = max(_spectral_norm(quad.a_matrix) for quad in quads)
        base_step = cfg.step_scale / (2.0 * max(rho, 1e-12))
    else:
        base_step = None

    best = None  # (objective, restart, q, weights, iterations, trace)
    for restart, q0 in enumerate(_initial_points(k, cfg)):
        q = q0
        trace = []
        iterations = 0
        local_best = None
        for t in range(1, cfg.max_iters + 1):
            losses, w, obj = evaluate(q)
            if not np.isfinite(obj):
                raise NumericalError("weighted loss is not finite", t)
            if cfg.keep_trace:
                trace.append(TraceEntry(t - 1, obj, tuple(w.selected.tolist())))
            if local_best is None or obj < local_best[0]:
                local_best = (obj, q, w)
            aw = np.tensordot(w.weights, a, axes=1)
            bw = w.weights @ b
            grad = 2.0 * (aw @ q - bw)
            gamma = base_step if base_step is not None else cfg.step_scale / np.sqrt(t)
            step = q - gamma * grad
            if not np.all(np.isfinite(step)):
                raise NumericalError("gradient step is not finite", t)
            try:
                q_next = project_simplex(step)
            except ValueError as exc:
                raise NumericalError(f"projection failed: {exc}", t) from exc
            iterations = t
            moved = float(np.linalg.norm(q_next - q))
            q = q_next
            if moved < cfg.tol:
                break
        losses, w, obj = evaluate(q)
        if not np.isfinite(obj):
            raise NumericalError("weighted loss is not finite", iterations)
        if cfg.keep_trace:
            trace.append(TraceEntry(iterations, obj, tuple(w.selected.tolist())))
        if local_best is None or obj < local_best[0]:
            local_best = (obj, q, w)
        candidate = (local_best[0], restart, local_best[1], local_best[2], iterations, trace)
        if best is None or candidate[0] < best[0]:
            best = candidate
    return EstimationResult(best[2], best[3], best[4], best[0], best[5])


def rod_estimate(quads, cfg: OptimizerConfig, wcfg: WeightingConfig) -> EstimationResult:
    """Robust estimate with weights computed on the loss values themselves."""
    return solve_weighted(quads, "divergence", cfg, wcfg)


def roe_estimate(quads, cfg: OptimizerConfig, wcfg: WeightingConfig,
                 q_prime=None) -> EstimationResult:
    """Robust estimate with weights on excess losses against q_prime.

    q_prime defaults to the divergence-weighted answer, which in practice
    is a good enough anchor for the excess risks to sharpen selection.
    """
    if q_prime is None:
        q_prime = rod_estimate(quads, cfg, wcfg).q_hat
    return solve_weighted(quads, "excess", cfg, wcfg, q_prime=q_prime)


def roe_multistep(quads, cfg: OptimizerConfig, wcfg: WeightingConfig,
                  q0=None) -> EstimationResult:
    """Iterate roe_estimate, re-anchoring q' on the previous answer."""
    anchor = rod_estimate(quads, cfg, wcfg).q_hat if q0 is None else check_simplex(q0)
    result = None
    for _ in range(cfg.refine_steps):
        result = solve_weighted(quads, "excess", cfg, wcfg, q_prime=anchor)
        anchor = result.q_hat
    return result


def _remap_weights(inner: RobustWeights, indices: np.ndarray, m: int) -> RobustWeights:
    w = np.zeros(m)
    w[indices] = inner.weights
    return RobustWeights(w, indices[inner.weights > 0])


def baseline_estimate(quads, kind: str, cfg: OptimizerConfig, *,
                      source_index: int | None = None,
                      inlier_set=None,
                      eps_h: float = 0.0) -> EstimationResult:
    """Comparison baselines: single / average / trim / oracle.

    single minimizes one source's loss alone; average the uniform mean;
    trim re-selects the smallest losses each iteration; oracle averages
    over a supplied true inlier set (benchmark use only).
    """
    m = len(quads)
    uniform = WeightingConfig(rule="mwv", eps_h=0.0)
    if kind == "average":
        return solve_weighted(quads, "divergence", cfg, uniform)
    if kind == "trim":
        wcfg = WeightingConfig(rule="trimmed", eps_h=eps_h)
        return solve_weighted(quads, "divergence", cfg, wcfg)
    if kind == "single":
        if source_index is None or not (0 <= source_index < m):
            raise ValueError("single needs a valid source_index")
        res = solve_weighted([quads[source_index]], "divergence", cfg, uniform)
        res.weights = _remap_weights(res.weights, np.array([source_index]), m)
        return res
    if kind == "oracle":
        given = [] if inlier_set is None else inlier_set
        idx = np.asarray(sorted(set(int(i) for i in given)), dtype=np.int64)
        if idx.size == 0:
            raise ValueError("oracle needs a non-empty inlier_set")
        if idx.min() < 0 or idx.max() >= m:
            raise ValueError("inlier_set indices out of range")
        res = solve_weighted([quads[i] for i in idx], "divergence", cfg, uniform)
        res.weights = _remap_weights(res.weights, idx, m)
        return res
    raise ValueError(f"unknown baseline kind {kind!r}")

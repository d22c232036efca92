"""Label-shift-calibrated multinomial classifier over weighted sources.

Pipeline: estimate each source's label proportions p_hat_j, reweight every
sample by q_hat_y / p_hat_{j,y} so each source risk targets the estimated
label mix q_hat, then minimize the robustly weighted sum of per-source
importance-weighted multinomial log-losses by full-batch projected... plain
gradient descent (the parameter space is unconstrained; only the class-1
score row is pinned to zero for identifiability).

Robust source weights are refreshed every gradient step from the excess
risks R_j(theta) - R_j(theta'), where theta' defaults to a preliminary fit
with uniform source weights. A small L2 penalty (configurable, default
1e-4) keeps the problem strongly convex on separable data.

Scores are affine: row k of the parameter matrix is (bias, coefficients)
for class k. Matrices are stored in canonical form with the first row all
zero; subtracting the first row from every row changes no score gap, so
predictions are unaffected by the normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset, atomic_writer, _format_float
from .errors import (
    DegenerateSourceError,
    DivisionGuardError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .simplex import OptimizerConfig, _spectral_norm, _weights_for, check_simplex
from .weighting import WeightingConfig


@dataclass
class ClassifierParams:
    """K x (d+1) affine score matrix, first row pinned to zero."""

    weight_matrix: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight_matrix, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 2:
            raise ValueError("weight matrix must be K x (d+1) with d >= 1")
        if not np.all(np.isfinite(w)):
            raise ValueError("weight matrix contains non-finite entries")
        self.weight_matrix = w - w[0]

    @property
    def n_classes(self) -> int:
        return self.weight_matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.weight_matrix.shape[1] - 1


def source_label_proportions(source: LabeledDataset) -> np.ndarray:
    """Empirical class shares n_k / n; every class must be present."""
    counts = source.class_counts
    for k, count in enumerate(counts):
        if count == 0:
            raise DegenerateSourceError(f"class {k + 1} has no samples")
    return counts / float(source.n_rows)


def importance_weights(q_hat, p_hat, labels) -> np.ndarray:
    """Per-sample ratios q_hat[y] / p_hat[y] calibrating source to target."""
    q = check_simplex(q_hat, name="q_hat")
    p = check_simplex(p_hat, name="p_hat")
    if q.shape != p.shape:
        raise ValueError("q_hat and p_hat must have the same length")
    if np.any(p <= 0.0):
        k = int(np.flatnonzero(p <= 0.0)[0])
        raise DivisionGuardError(f"source proportion for class {k + 1} is zero")
    y = np.asarray(labels)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("labels must be a non-empty 1-D array")
    if y.min() < 1 or y.max() > q.size:
        raise ValueError("labels out of range for the given proportions")
    return (q / p)[y.astype(np.int64) - 1]


def _augment(covariates: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((covariates.shape[0], 1)), covariates])


def _scores(params: ClassifierParams, covariates) -> np.ndarray:
    x = np.asarray(covariates, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("covariates must be a 2-D array")
    if x.shape[1] != params.dim:
        raise ValueError(
            f"covariates have {x.shape[1]} columns, classifier expects {params.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates contain non-finite entries")
    return _augment(x) @ params.weight_matrix.T


def predict_labels(params: ClassifierParams, covariates) -> np.ndarray:
    """Argmax class per row; ties go to the smaller class index."""
    return np.argmax(_scores(params, covariates), axis=1).astype(np.int64) + 1


def _risk_and_gradient(theta, xt, y0, u):
    """Weighted mean log-loss over one source and its gradient in theta.

    xt is the augmented n x (d+1) matrix, y0 the zero-based labels, u the
    per-sample importance weights. The gradient is for the raw mean; the
    caller pins the first row and adds any regularizer.
    """
    n = xt.shape[0]
    # overflow here is caught by the callers' finiteness checks, not warned
    with np.errstate(over="ignore", invalid="ignore"):
        scores = xt @ theta.T
        peak = scores.max(axis=1, keepdims=True)
        shifted = np.exp(scores - peak)
        norm = shifted.sum(axis=1, keepdims=True)
        log_loss = (np.log(norm[:, 0]) + peak[:, 0]) - scores[np.arange(n), y0]
        risk = float(u @ log_loss) / n
        residual = shifted / norm
        residual[np.arange(n), y0] -= 1.0
        grad = (residual * u[:, None]).T @ xt / n
    return risk, grad


def source_risk(params: ClassifierParams, source: LabeledDataset, q_hat) -> float:
    """Importance-weighted mean log-loss of one source against q_hat."""
    p_hat = source_label_proportions(source)
    u = importance_weights(q_hat, p_hat, source.labels)
    if source.dim != params.dim:
        raise ValueError("source dimension does not match the classifier")
    risk, _ = _risk_and_gradient(params.weight_matrix, _augment(source.covariates),
                                 source.labels - 1, u)
    return risk


def _descend(parts, weight_fn, cfg: OptimizerConfig, l2: float, gamma_const,
             ref_risks=None):
    """Full-batch descent with per-step re-weighting; returns the best iterate.

    parts is a list of (xt, y0, u) triples. weight_fn maps the vector of
    per-source excess risks (risks minus ref_risks, or the raw risks when
    ref_risks is None) to RobustWeights. Mirrors the step, stop, and return
    rules of the simplex solver: constant inverse-Lipschitz step or
    scale/sqrt(t), stop when an update moves less than tol, return the
    iterate whose robust objective (the weighted mean of the same values
    the weights came from, plus the penalty) is the lowest seen.
    """
    k = int(max(part[1].max() for part in parts)) + 1
    theta = np.zeros((k, parts[0][0].shape[1]))

    def evaluate(theta):
        risks = np.empty(len(parts))
        grads = []
        for j, (xt, y0, u) in enumerate(parts):
            risks[j], grad = _risk_and_gradient(theta, xt, y0, u)
            grads.append(grad)
        z = risks if ref_risks is None else risks - ref_risks
        w = weight_fn(z)
        with np.errstate(over="ignore", invalid="ignore"):
            obj = float(w.weights @ z) + l2 * float((theta * theta).sum())
        return risks, grads, w, obj

    best = None
    iterations = 0
    for t in range(1, cfg.max_iters + 1):
        risks, grads, w, obj = evaluate(theta)
        if not np.isfinite(obj):
            raise NumericalError("weighted risk is not finite", t)
        if best is None or obj < best[0]:
            best = (obj, theta.copy())
        grad = 2.0 * l2 * theta
        for j in w.selected:
            grad = grad + w.weights[j] * grads[j]
        grad[0, :] = 0.0
        gamma = gamma_const if gamma_const is not None else cfg.step_scale / np.sqrt(t)
        step = theta - gamma * grad
        if not np.all(np.isfinite(step)):
            raise NumericalError("gradient step is not finite", t)
        iterations = t
        moved = float(np.linalg.norm(step - theta))
        theta = step
        if moved < cfg.tol:
            break
    _, _, _, obj = evaluate(theta)
    if not np.isfinite(obj):
        raise NumericalError("weighted risk is not finite", iterations)
    if best is None or obj < best[0]:
        best = (obj, theta.copy())
    return best[1]


def train_calibrated_classifier(sources, q_hat, cfg: OptimizerConfig,
                                wcfg: WeightingConfig, theta_prime=None,
                                l2: float = 1e-4) -> ClassifierParams:
    """Fit the robustly weighted importance-calibrated multinomial classifier.

    theta_prime anchors the excess risks R_j(theta) - R_j(theta_prime) that
    the weighting rule sees; when omitted it is a preliminary fit with
    uniform source weights. l2 scales an L2 penalty on the score matrix
    (set 0.0 to disable).
    """
    if not sources:
        raise ValueError("need at least one source")
    q = check_simplex(q_hat, name="q_hat")
    k = q.size
    dim = sources[0].dim
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    parts = []
    for source in sources:
        if source.dim != dim:
            raise ValueError("all sources must share the covariate dimension")
        if source.n_classes != k:
            raise ValueError("source class count does not match q_hat")
        p_hat = source_label_proportions(source)
        u = importance_weights(q, p_hat, source.labels)
        parts.append((_augment(source.covariates), source.labels - 1, u))

    if cfg.step_rule == "inverse_lipschitz":
        rho = max(_spectral_norm(xt.T @ (xt * u[:, None]) / xt.shape[0])
                  for xt, _, u in parts)
        gamma_const = cfg.step_scale / (2.0 * max(rho, 1e-12))
    else:
        gamma_const = None

    def uniform_fn(risks):
        return _weights_for(np.zeros_like(risks),
                            WeightingConfig(rule="mwv", eps_h=0.0))

    if theta_prime is None:
        reference = _descend(parts, uniform_fn, cfg, l2, gamma_const)
    else:
        if theta_prime.weight_matrix.shape != (k, dim + 1):
            raise ValueError("theta_prime shape does not match the sources")
        reference = theta_prime.weight_matrix
    ref_risks = np.array([_risk_and_gradient(reference, xt, y0, u)[0]
                          for xt, y0, u in parts])

    def excess_fn(excess):
        return _weights_for(excess, wcfg)

    return ClassifierParams(_descend(parts, excess_fn, cfg, l2, gamma_const,
                                     ref_risks=ref_risks))


def save_classifier(params: ClassifierParams, path: str) -> None:
    """Write the score matrix as a 'K d' header plus K rows of d+1 reals."""
    with atomic_writer(path) as handle:
        handle.write(f"{params.n_classes} {params.dim}\n")
        for row in params.weight_matrix:
            handle.write(" ".join(_format_float(v) for v in row) + "\n")


def load_classifier(path: str) -> ClassifierParams:
    with open(path, "r") as handle:
        lines = [line.strip() for line in handle]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise SchemaError("model file is empty")
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError("expected 'K d' header", 1)
    try:
        k, dim = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header entries must be integers", 1) from None
    if k < 1 or dim < 1:
        raise SchemaError(f"invalid model shape {k} x {dim}")
    if len(lines) - 1 != k:
        raise SchemaError(f"expected {k} rows, found {len(lines) - 1}")
    matrix = np.empty((k, dim + 1))
    for i, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if len(tokens) != dim + 1:
            raise ParseError(f"expected {dim + 1} values, got {len(tokens)}", i)
        try:
            matrix[i - 2] = [float(tok) for tok in tokens]
        except ValueError:
            raise ParseError("non-numeric value in model row", i) from None
    return ClassifierParams(matrix)

"""Synthetic label-shift data and label-contamination schemes.

The generator draws a shared family of K isotropic Gaussian class
conditionals. Target covariates mix them under the target proportions;
each source draws its own label proportions from a configurable law and
then samples under the same conditionals, so the label-shift identity
holds for every clean source by construction.

Randomness is counter-based and splittable: every consumer derives its
own Philox stream from a seed-sequence spawn key, so results are
bit-identical for any execution order or worker count. A seed argument
may be an integer or an existing SeedSequence (the experiment runner
passes pre-keyed sequences).

Contamination selects floor(eps * m) outlier sources uniformly and
rewrites only their labels, never covariates:

  flip_largest   ceil(rate * count) labels of the largest class move to
                 the next class (rate defaults to 0.5/sqrt(n)); ties on
                 the largest class go to the smaller index
  cyclic_shift   every label k becomes (k mod K) + 1
  partial_shift  a fraction (rounded half up) of each listed class moves
                 one class to the right, wrapping K back to 1
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset, UnlabeledDataset
from .errors import DegenerateSourceError

_LAWS = ("uniform_binary", "fixed", "dirichlet")
_SCHEMES = ("flip_largest", "cyclic_shift", "partial_shift")

REGENERATION_ATTEMPTS = 100


@dataclass(frozen=True)
class SourceProportionLaw:
    """How each source's label proportions are drawn."""

    kind: str
    proportions: tuple = None  # fixed: one simplex vector per source
    alpha: tuple = None  # dirichlet concentration

    def __post_init__(self):
        if self.kind not in _LAWS:
            raise ValueError(f"unknown law {self.kind!r}")
        if self.kind == "fixed":
            if not self.proportions:
                raise ValueError("fixed law needs per-source proportions")
            cleaned = []
            for p in self.proportions:
                p = tuple(float(v) for v in p)
                if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-10:
                    raise ValueError("fixed proportions must lie on the simplex")
                cleaned.append(p)
            object.__setattr__(self, "proportions", tuple(cleaned))
        if self.kind == "dirichlet":
            if not self.alpha or any(a <= 0 for a in self.alpha):
                raise ValueError("dirichlet law needs positive alpha entries")
            object.__setattr__(self, "alpha",
                               tuple(float(a) for a in self.alpha))


@dataclass
class MixtureSpec:
    """K Gaussian class conditionals plus the target label proportions."""

    class_means: np.ndarray  # K x d
    class_scales: np.ndarray  # K positive isotropic standard deviations
    target_proportions: np.ndarray  # simplex vector q*
    source_law: SourceProportionLaw

    def __post_init__(self):
        means = np.asarray(self.class_means, dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        scales = np.asarray(self.class_scales, dtype=np.float64)
        q = np.asarray(self.target_proportions, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise ValueError("need a d-dim mean per class, at least 2 classes")
        if scales.shape != (means.shape[0],) or np.any(scales <= 0):
            raise ValueError("need one positive scale per class")
        if q.shape != (means.shape[0],) or np.any(q < 0) or abs(q.sum() - 1) > 1e-10:
            raise ValueError("target proportions must lie on the simplex")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(scales))):
            raise ValueError("means and scales must be finite")
        self.class_means = means
        self.class_scales = scales
        self.target_proportions = q

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


def default_mixture() -> MixtureSpec:
    """1-D pair N(0,1) / N(4,1), target mix (0.6, 0.4), uniform source law."""
    return MixtureSpec(np.array([[0.0], [4.0]]), np.array([1.0, 1.0]),
                       np.array([0.6, 0.4]), SourceProportionLaw("uniform_binary"))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _stream(child: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(child))


def _draw_conditionals(spec: MixtureSpec, labels0: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((labels0.size, spec.dim))
    return spec.class_means[labels0] + spec.class_scales[labels0, None] * noise


def _draw_proportions(spec: MixtureSpec, j: int, rng: np.random.Generator):
    law = spec.source_law
    if law.kind == "uniform_binary":
        share = float(rng.random())
        return np.array([share, 1.0 - share])
    if law.kind == "fixed":
        return np.asarray(law.proportions[j], dtype=np.float64)
    return rng.dirichlet(np.asarray(law.alpha))


def generate_sources(spec: MixtureSpec, m: int, n: int, big_n: int, seed):
    """Draw m labeled sources of size n plus an unlabeled target of size big_n.

    Returns (sources, target, target_labels); the target labels are the
    held-out truth for scoring only. A source whose draw leaves any class
    with fewer than two samples (too few for second moments) is redrawn,
    proportions included, up to REGENERATION_ATTEMPTS times.
    """
    if m < 1 or n < 1 or big_n < 1:
        raise ValueError("m, n and N must all be positive")
    k = spec.n_classes
    law = spec.source_law
    if law.kind == "uniform_binary" and k != 2:
        raise ValueError("uniform_binary law is only defined for 2 classes")
    if law.kind == "fixed" and len(law.proportions) != m:
        raise ValueError(f"fixed law carries {len(law.proportions)} "
                         f"proportion vectors for m={m} sources")
    if law.kind == "dirichlet" and len(law.alpha) != k:
        raise ValueError("dirichlet alpha length must equal the class count")
    children = _seed_sequence(seed).spawn(m + 1)

    rng = _stream(children[0])
    target_labels0 = rng.choice(k, size=big_n, p=spec.target_proportions)
    target = UnlabeledDataset(_draw_conditionals(spec, target_labels0, rng))

    sources = []
    for j in range(m):
        rng = _stream(children[j + 1])
        for _ in range(REGENERATION_ATTEMPTS):
            p = _draw_proportions(spec, j, rng)
            labels0 = rng.choice(k, size=n, p=p)
            if np.bincount(labels0, minlength=k).min() >= 2:
                break
        else:
            raise DegenerateSourceError(
                f"source {j + 1} kept a class below 2 samples after "
                f"{REGENERATION_ATTEMPTS} draws")
        covariates = _draw_conditionals(spec, labels0, rng)
        sources.append(LabeledDataset(covariates, labels0 + 1, n_classes=k))
    return sources, target, np.asarray(target_labels0 + 1, dtype=np.int64)


@dataclass(frozen=True)
class ContaminationPlan:
    """Which scheme corrupts how many sources."""

    eps: float
    scheme: str
    flip_rate: float = None  # flip_largest; None means 0.5/sqrt(n)
    shift_classes: tuple = None  # partial_shift: 1-based classes to move
    shift_fraction: float = None  # partial_shift: fraction per class

    def __post_init__(self):
        if not 0.0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5)")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.flip_rate is not None and not 0.0 < self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in (0, 1]")
        if self.scheme == "partial_shift":
            if not self.shift_classes or self.shift_fraction is None:
                raise ValueError("partial_shift needs classes and a fraction")
            if not 0.0 <= self.shift_fraction <= 1.0:
                raise ValueError("shift_fraction must lie in [0, 1]")
            if any(int(c) < 1 for c in self.shift_classes):
                raise ValueError("shift classes are 1-based")
            object.__setattr__(self, "shift_classes",
                               tuple(int(c) for c in self.shift_classes))


def _next_class(label: int, k: int) -> int:
    return label % k + 1


def _flip_largest(source: LabeledDataset, plan: ContaminationPlan,
                  rng: np.random.Generator) -> np.ndarray:
    counts = source.class_counts
    largest = int(np.argmax(counts))  # argmax keeps the smaller index on ties
    rate = plan.flip_rate if plan.flip_rate is not None \
        else 0.5 / math.sqrt(source.n_rows)
    flip_count = math.ceil(rate * counts[largest])
    labels = source.labels.copy()
    picked = rng.choice(source.class_index[largest], size=flip_count,
                        replace=False)
    labels[picked] = _next_class(largest + 1, source.n_classes)
    return labels


def _cyclic_shift(source: LabeledDataset) -> np.ndarray:
    return source.labels % source.n_classes + 1


def _partial_shift(source: LabeledDataset, plan: ContaminationPlan,
                   rng: np.random.Generator) -> np.ndarray:
    labels = source.labels.copy()
    for klass in plan.shift_classes:
        if klass > source.n_classes:
            raise ValueError(f"class {klass} outside 1..{source.n_classes}")
        idx = source.class_index[klass - 1]
        moved = math.floor(plan.shift_fraction * idx.size + 0.5)  # half up
        picked = rng.choice(idx, size=moved, replace=False)
        labels[picked] = _next_class(klass, source.n_classes)
    return labels


def contaminate(sources, plan: ContaminationPlan, seed):
    """Corrupt floor(eps * m) uniformly chosen sources; labels only.

    Returns (sources, outlier_indices); non-outlier entries are the input
    objects themselves.
    """
    m = len(sources)
    if m < 1:
        raise ValueError("need at least one source")
    count = math.floor(plan.eps * m)
    children = _seed_sequence(seed).spawn(m + 1)
    if count == 0:
        return list(sources), np.empty(0, dtype=np.int64)
    outliers = np.sort(_stream(children[0]).choice(m, size=count,
                                                   replace=False))
    out = list(sources)
    for j in outliers:
        source = sources[j]
        rng = _stream(children[j + 1])
        if plan.scheme == "flip_largest":
            labels = _flip_largest(source, plan, rng)
        elif plan.scheme == "cyclic_shift":
            labels = _cyclic_shift(source)
        else:
            labels = _partial_shift(source, plan, rng)
        out[j] = LabeledDataset(source.covariates, labels,
                                n_classes=source.n_classes)
    return out, outliers.astype(np.int64)

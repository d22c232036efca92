"""Dataset containers and delimited-file input/output.

Labeled data is an n x d covariate matrix plus integer labels in {1..K}
(1-based, matching the file format). Unlabeled data is covariates only.

File formats:
  labeled CSV    header ``y,x1,...,xd``; y a 1-based integer class
  unlabeled CSV  header ``x1,...,xd``

Floats are written with ``repr`` so a write/read round-trip is bit-exact.
All writers go through a write-to-temp + atomic-rename helper so no
partial file is ever left behind on failure.
"""

from __future__ import annotations

import csv
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError


@dataclass
class UnlabeledDataset:
    """Covariates of the unlabeled target domain (N x d)."""

    covariates: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("covariates must be a non-empty 2-D array")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates contain non-finite entries")
        self.covariates = x

    @property
    def n_rows(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]


@dataclass
class LabeledDataset:
    """Labeled source sample: covariates (n x d) and labels in {1..K}.

    class_index[k-1] holds the row indices whose label is k; the index
    arrays partition range(n). A class may be empty at this level;
    operations that need every class populated raise their own errors.
    """

    covariates: np.ndarray
    labels: np.ndarray
    n_classes: int | None = None
    class_index: tuple = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("covariates must be a non-empty 2-D array")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates contain non-finite entries")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must be 1-D with one entry per row")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(y == np.floor(y)):
                raise ValueError("labels must be integers")
            y = y.astype(np.int64)
        else:
            y = y.astype(np.int64)
        if y.min() < 1:
            raise ValueError("labels must be >= 1")
        k = int(y.max()) if self.n_classes is None else int(self.n_classes)
        if k < 1 or y.max() > k:
            raise ValueError(f"labels exceed n_classes={k}")
        self.covariates = x
        self.labels = y
        self.n_classes = k
        self.class_index = tuple(np.flatnonzero(y == c + 1) for c in range(k))

    @property
    def n_rows(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.array([idx.size for idx in self.class_index], dtype=np.int64)


@contextmanager
def atomic_writer(path: str):
    """Yield a text handle on a temp file; atomically rename into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _format_float(v) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(v))


def write_labeled_csv(dataset: LabeledDataset, path: str) -> None:
    with atomic_writer(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["y"] + [f"x{i + 1}" for i in range(dataset.dim)])
        for label, row in zip(dataset.labels, dataset.covariates):
            writer.writerow([int(label)] + [_format_float(v) for v in row])


def write_unlabeled_csv(dataset: UnlabeledDataset, path: str) -> None:
    with atomic_writer(path) as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(dataset.dim)])
        for row in dataset.covariates:
            writer.writerow([_format_float(v) for v in row])


def _read_rows(path: str, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != expected_header:
            raise SchemaError(
                f"{path}: bad header {header!r}, expected {expected_header!r}"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows after header")
    return rows


def _header_for(path: str, labeled: bool) -> list[str]:
    # Peek at the first line to learn d, then validate the exact header.
    with open(path, newline="") as handle:
        first = handle.readline()
    if not first.strip():
        raise SchemaError(f"{path}: empty file")
    names = next(csv.reader([first]))
    d = len(names) - 1 if labeled else len(names)
    if d < 1:
        raise SchemaError(f"{path}: header {names!r} has no covariate columns")
    expected = [f"x{i + 1}" for i in range(d)]
    return (["y"] + expected) if labeled else expected


def load_csv_labeled(path: str, n_classes: int | None = None) -> LabeledDataset:
    """Read a labeled CSV; labels validated as integers in {1..K}.

    K defaults to the maximum label seen; pass n_classes to pin it.
    """
    header = _header_for(path, labeled=True)
    rows = _read_rows(path, header)
    d = len(header) - 1
    labels = np.empty(len(rows), dtype=np.int64)
    covariates = np.empty((len(rows), d), dtype=np.float64)
    for i, row in enumerate(rows):
        line = i + 2  # 1-based, after the header line
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(row)}", line)
        try:
            label = int(row[0])
        except ValueError:
            raise ParseError(f"label {row[0]!r} is not an integer", line) from None
        if label < 1 or (n_classes is not None and label > n_classes):
            hi = n_classes if n_classes is not None else "K"
            raise SchemaError(f"{path}: line {line}: label {label} outside {{1..{hi}}}")
        labels[i] = label
        for j, cell in enumerate(row[1:]):
            try:
                covariates[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"value {cell!r} is not a float", line) from None
        if not np.all(np.isfinite(covariates[i])):
            raise SchemaError(f"{path}: line {line}: non-finite covariate")
    return LabeledDataset(covariates, labels, n_classes=n_classes)


def load_csv_unlabeled(path: str) -> UnlabeledDataset:
    header = _header_for(path, labeled=False)
    rows = _read_rows(path, header)
    d = len(header)
    covariates = np.empty((len(rows), d), dtype=np.float64)
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != d:
            raise ParseError(f"expected {d} fields, got {len(row)}", line)
        for j, cell in enumerate(row):
            try:
                covariates[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"value {cell!r} is not a float", line) from None
        if not np.all(np.isfinite(covariates[i])):
            raise SchemaError(f"{path}: line {line}: non-finite covariate")
    return UnlabeledDataset(covariates)

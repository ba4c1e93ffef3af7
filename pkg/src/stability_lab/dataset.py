"""Labeled datasets, the Hastie generator, CSV I/O and resampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _rng

HASTIE_DIM = 10
HASTIE_THRESHOLD = 9.34


class DatasetError(ValueError):
    """Malformed input or an invalid dataset operation."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyEvaluationSetError(DatasetError):
    """The requested evaluation set has no examples (typically OOB with large B)."""


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise DatasetError("features must be finite")
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")
        x.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label", int(self.label))

    def __eq__(self, other):
        if not isinstance(other, Example):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.features.tobytes(), self.label))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered examples stored as a read-only ``(m, d)`` matrix and label vector."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise DatasetError(f"feature matrix must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DatasetError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise DatasetError("labels must be 0 or 1")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_examples(cls, examples: Sequence[Example], d: int | None = None) -> "Dataset":
        if not examples:
            if d is None:
                raise DatasetError("dimension is required for an empty dataset")
            return cls(np.empty((0, d)), np.empty(0, dtype=np.int64))
        dims = {len(e.features) for e in examples}
        if len(dims) != 1:
            raise DatasetError(f"examples have mixed dimensions {sorted(dims)}")
        return cls(np.stack([e.features for e in examples]), [e.label for e in examples])

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def examples(self) -> list[Example]:
        return list(self)

    def __len__(self) -> int:
        return self.m

    def __iter__(self) -> Iterator[Example]:
        for i in range(self.m):
            yield Example(self.X[i], int(self.y[i]))

    def __getitem__(self, i: int) -> Example:
        return Example(self.X[i], int(self.y[i]))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx])


@dataclass(frozen=True, eq=False)
class BootstrapSample:
    data: Dataset
    source_indices: np.ndarray

    def __post_init__(self):
        idx = np.array(self.source_indices, dtype=np.int64)
        idx.flags.writeable = False
        object.__setattr__(self, "source_indices", idx)

    def counts(self, m: int) -> np.ndarray:
        """Multiplicity of each origin index in this sample."""
        return np.bincount(self.source_indices, minlength=m)


class EvalKind(str, Enum):
    OOB = "OOB"
    OOS = "OOS"
    ALL = "ALL"


@dataclass(frozen=True)
class EvalStrategy:
    kind: EvalKind = EvalKind.ALL
    oos_fraction: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "kind", EvalKind(self.kind))
        if not 0.0 < self.oos_fraction < 1.0:
            raise DatasetError(f"oos_fraction must lie in (0, 1), got {self.oos_fraction}")


def hastie_label(features) -> int:
    x = np.asarray(features, dtype=np.float64)
    return int(np.dot(x, x) > HASTIE_THRESHOLD)


def generate_hastie(
    m: int,
    seed: int,
    normal_source: Callable[[int, int], np.ndarray] | None = None,
) -> Dataset:
    """Hastie et al. 10-D problem: label 1 iff the squared norm exceeds 9.34.

    ``normal_source(seed, n)`` replaces the default Box-Muller stream; it
    must return ``n`` values, consumed row-major into an ``(m, 10)`` matrix.
    """
    if m < 1:
        raise DatasetError(f"m must be >= 1, got {m}")
    source = normal_source or _rng.normals
    X = np.asarray(source(seed, m * HASTIE_DIM), dtype=np.float64).reshape(m, HASTIE_DIM)
    y = (np.einsum("ij,ij->i", X, X) > HASTIE_THRESHOLD).astype(np.int64)
    return Dataset(X, y)


def write_csv(D: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(D.d)] + ["label"])
        for x, y in zip(D.X, D.y):
            w.writerow([format(float(v), ".17g") for v in x] + [str(int(y))])


def load_csv(path) -> Dataset:
    """Read ``f0,...,f{d-1},label`` CSV. Rows in errors are 1-based data rows."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: missing header row")
    ncol = len(rows[0])
    if ncol < 2:
        raise DatasetError(f"{path}: need at least one feature column and a label column")
    X, y = [], []
    for r, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != ncol:
            raise DatasetError(
                f"{path}: row {r} has {len(row)} columns, expected {ncol}", row=r
            )
        feats = []
        for c, cell in enumerate(row[:-1], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}: row {r}, column {c}: non-numeric value {cell!r}", row=r, column=c
                ) from None
            if not math.isfinite(v):
                raise DatasetError(
                    f"{path}: row {r}, column {c}: non-finite value {cell!r}", row=r, column=c
                )
            feats.append(v)
        label = row[-1].strip()
        if label not in ("0", "1"):
            raise DatasetError(
                f"{path}: row {r}, column {ncol}: label must be 0 or 1, got {label!r}",
                row=r,
                column=ncol,
            )
        X.append(feats)
        y.append(int(label))
    d = ncol - 1
    return Dataset(np.array(X, dtype=np.float64).reshape(len(X), d), np.array(y, dtype=np.int64))


def _check_index(D: Dataset, i: int) -> None:
    if not 0 <= i < D.m:
        raise DatasetError(f"index {i} out of range for dataset of size {D.m}")


def remove_example(D: Dataset, i: int) -> Dataset:
    _check_index(D, i)
    keep = np.arange(D.m) != i
    return Dataset(D.X[keep], D.y[keep])


def replace_example(D: Dataset, i: int, z: Example) -> Dataset:
    _check_index(D, i)
    if len(z.features) != D.d:
        raise DatasetError(f"example has dimension {len(z.features)}, dataset has {D.d}")
    X = D.X.copy()
    y = D.y.copy()
    X[i] = z.features
    y[i] = z.label
    return Dataset(X, y)


def bootstrap_indices(m: int, seed: int) -> np.ndarray:
    if m < 1:
        raise DatasetError("cannot bootstrap an empty dataset")
    return _rng.integers(seed, m, m)


def bootstrap_sample(D: Dataset, seed: int) -> BootstrapSample:
    idx = bootstrap_indices(D.m, seed)
    return BootstrapSample(D.subset(idx), idx)


def oos_split(m: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split into (held-out, training) origin indices, both sorted."""
    n_eval = int(round(fraction * m))
    if n_eval < 1 or n_eval >= m:
        raise DatasetError(f"OOS fraction {fraction} leaves an empty side for m={m}")
    perm = _rng.permutation(seed, m)
    return np.sort(perm[:n_eval]), np.sort(perm[n_eval:])


def eval_indices(
    D: Dataset,
    samples: Sequence[BootstrapSample],
    strategy: EvalStrategy,
    seed: int,
) -> np.ndarray:
    """Origin indices of the evaluation set for ``strategy``."""
    if strategy.kind is EvalKind.ALL:
        return np.arange(D.m)
    if strategy.kind is EvalKind.OOB:
        if not samples:
            raise DatasetError("OOB evaluation needs at least one bootstrap sample")
        used = np.zeros(D.m, dtype=bool)
        for s in samples:
            used[s.source_indices] = True
        idx = np.flatnonzero(~used)
        if idx.size == 0:
            raise EmptyEvaluationSetError(
                f"out-of-bag set is empty: {len(samples)} bootstrap samples cover all {D.m} examples"
            )
        return idx
    held_out, _ = oos_split(D.m, strategy.oos_fraction, seed)
    if samples:
        mask = np.zeros(D.m, dtype=bool)
        mask[held_out] = True
        for s in samples:
            if mask[s.source_indices].any():
                raise DatasetError("bootstrap sample overlaps the out-of-sample split")
    return held_out


def build_eval_set(
    D: Dataset,
    samples: Sequence[BootstrapSample],
    strategy: EvalStrategy,
    seed: int,
) -> Dataset:
    if strategy.kind is EvalKind.ALL:
        return D
    return D.subset(eval_indices(D, samples, strategy, seed))

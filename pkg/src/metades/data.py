"""Dataset ingestion, synthetic generators, stratified 4-way splits and
feature standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable datasets."""


@dataclass(frozen=True)
class Dataset:
    """A labelled dataset held as a feature matrix plus integer labels.

    Labels are dense class indices in ``[0, num_classes)``. Partitions may
    hold a single sample of a class, so per-class minimums are checked by the
    operations that need them (:func:`stratified_split` requires four).
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"{self.name}: feature matrix must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{self.name}: {y.shape[0]} labels for {X.shape[0]} samples")
        if self.num_classes < 2:
            raise DataError(f"{self.name}: need at least 2 classes")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"{self.name}: labels outside [0, {self.num_classes})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes, name or self.name)


@dataclass(frozen=True)
class SplitQuartet:
    """The four disjoint partitions used by one replication.

    ``train`` builds the pool, ``meta_train`` produces meta-data, ``dsel`` is
    the reference set at inference time and ``test`` is held out.
    ``indices`` maps each part back to rows of the source dataset.
    """

    train: Dataset
    meta_train: Dataset
    dsel: Dataset
    test: Dataset
    indices: tuple

    def parts(self):
        return (self.train, self.meta_train, self.dsel, self.test)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds: Dataset) -> Dataset:
        return Dataset((ds.X - self.mean) / self.std, ds.y, ds.num_classes, ds.name)

    def invert(self, ds: Dataset) -> Dataset:
        return Dataset(ds.X * self.std + self.mean, ds.y, ds.num_classes, ds.name)


def load_csv(path, label_column: int = -1, header: bool = False, name: str | None = None) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    The label column may hold any strings; they are re-encoded to
    ``0..num_classes-1`` in order of first appearance. All other cells must
    parse as floats.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if header:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")

    arity = len(rows[0])
    if arity < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    col = label_column if label_column >= 0 else arity + label_column
    if not 0 <= col < arity:
        raise DataError(f"{path}: label column {label_column} out of range for {arity} columns")

    codes: dict[str, int] = {}
    features, labels = [], []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != arity:
            raise DataError(f"{path}:{lineno}: ragged row, expected {arity} cells got {len(row)}")
        raw_label = row[col].strip()
        labels.append(codes.setdefault(raw_label, len(codes)))
        try:
            features.append([float(c) for j, c in enumerate(row) if j != col])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric feature cell ({exc})") from None

    if len(codes) < 2:
        raise DataError(f"{path}: only one class present")
    X = np.array(features, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    return Dataset(X, np.array(labels), len(codes), name or path.stem)


def _class_sizes(n: int) -> tuple[int, int]:
    if n < 4:
        raise DataError(f"need n >= 4 samples, got {n}")
    return n - n // 2, n // 2


def gen_banana(n: int = 1000, noise: float = 0.15, seed: int = 0, radius: float = 1.0) -> Dataset:
    """Two interleaved banana-shaped classes in 2-D.

    Class 0 lies on the upper half of a circle of ``radius``; class 1 on the
    lower half of the same circle shifted by ``(-0.375, 0.5) * radius``.
    Both get isotropic Gaussian noise with standard deviation ``noise``.
    """
    if noise <= 0:
        raise DataError("noise must be positive")
    n0, n1 = _class_sizes(n)
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(np.pi, 2 * np.pi, n1)
    a = radius * np.column_stack([np.cos(t0), np.sin(t0)])
    b = radius * np.column_stack([np.cos(t1), np.sin(t1)]) + radius * np.array([-0.375, 0.5])
    X = np.vstack([a, b]) + rng.normal(0.0, noise, (n, 2))
    y = np.repeat([0, 1], [n0, n1])
    return Dataset(X, y, 2, "banana")


def gen_lithuanian(n: int = 1000, seed: int = 0, noise: float = 0.15, arc_span: float = np.pi / 2) -> Dataset:
    """Two overlapping crescents in 2-D.

    Class 0 follows an arc of radius 1 over angles ``[0, arc_span]``, class 1
    an arc of radius 1.3 over the same span rotated by ``pi / 4``. Noise is
    Gaussian and radial.
    """
    if noise <= 0 or arc_span <= 0:
        raise DataError("noise and arc_span must be positive")
    n0, n1 = _class_sizes(n)
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, arc_span, n0)
    t1 = rng.uniform(np.pi / 4, np.pi / 4 + arc_span, n1)
    r0 = 1.0 + rng.normal(0.0, noise, n0)
    r1 = 1.3 + rng.normal(0.0, noise, n1)
    X = np.vstack([
        np.column_stack([r0 * np.cos(t0), r0 * np.sin(t0)]),
        np.column_stack([r1 * np.cos(t1), r1 * np.sin(t1)]),
    ])
    y = np.repeat([0, 1], [n0, n1])
    return Dataset(X, y, 2, "lithuanian")


def _largest_remainder(exact: np.ndarray) -> np.ndarray:
    sizes = np.floor(exact).astype(int)
    extra = int(round(exact.sum())) - sizes.sum()
    order = sorted(range(len(exact)), key=lambda p: (-(exact[p] - sizes[p]), p))
    sizes[order[:extra]] += 1
    return sizes


def stratified_split(ds: Dataset, seed: int, fractions=(0.25, 0.25, 0.25, 0.25)) -> SplitQuartet:
    """Shuffle each class and deal it across four parts in fixed proportions.

    Part sizes are fixed first (largest remainder of ``fraction * n``). Per
    class, each part gets ``floor(fraction * n_c)`` samples and the leftover
    samples go to the parts with the most room left, so every part keeps the
    class proportions of the whole to within one sample. Classes are dealt
    largest first.
    """
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (4,) or np.any(fractions <= 0) or not np.isclose(fractions.sum(), 1.0):
        raise DataError("fractions must be four positive numbers summing to 1")
    counts = ds.class_counts()
    if np.any(counts < 4):
        bad = [c for c in range(ds.num_classes) if counts[c] < 4]
        raise DataError(f"{ds.name}: classes {bad} have fewer than 4 samples")

    rng = np.random.default_rng(seed)
    members = [rng.permutation(np.flatnonzero(ds.y == c)) for c in range(ds.num_classes)]
    target = _largest_remainder(fractions * len(ds))
    fill = np.zeros(4, dtype=int)
    parts: list[list[np.ndarray]] = [[] for _ in range(4)]
    for c in sorted(range(ds.num_classes), key=lambda c: -counts[c]):
        exact = fractions * counts[c]
        sizes = np.floor(exact).astype(int)
        room = target - fill - sizes
        leftover = counts[c] - sizes.sum()
        order = sorted(range(4), key=lambda p: (-room[p], -(exact[p] - sizes[p]), p))
        sizes[order[:leftover]] += 1
        fill += sizes
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        for p in range(4):
            parts[p].append(members[c][bounds[p]:bounds[p + 1]])

    idx = tuple(np.sort(np.concatenate(p)) for p in parts)
    names = ("train", "meta_train", "dsel", "test")
    subsets = [ds.subset(i, f"{ds.name}/{nm}") for i, nm in zip(idx, names)]
    return SplitQuartet(*subsets, indices=idx)


def fit_standardizer(ds: Dataset) -> Standardizer:
    if len(ds) == 0:
        raise DataError(f"{ds.name}: cannot standardize an empty dataset")
    constant = np.ptp(ds.X, axis=0) == 0
    # exact centre and unit scale for constant columns, so they map to 0 exactly
    mean = np.where(constant, ds.X[0], ds.X.mean(axis=0))
    std = np.where(constant, 1.0, ds.X.std(axis=0))
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, ds: Dataset) -> Dataset:
    return s.apply(ds)


def standardize_split(split: SplitQuartet) -> SplitQuartet:
    """Fit on the training part and apply the same transform to all four."""
    s = fit_standardizer(split.train)
    return SplitQuartet(*(s.apply(p) for p in split.parts()), indices=split.indices)

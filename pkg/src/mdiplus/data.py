"""Datasets, CSV ingestion, seeded random streams and bootstrap bookkeeping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mdiplus.exceptions import DataError

TASKS = ("regression", "binary-classification")
_TASK_ALIASES = {"binary": "binary-classification", "classification": "binary-classification"}
_MASK64 = (1 << 64) - 1


def normalize_task(task: str) -> str:
    task = _TASK_ALIASES.get(task, task)
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}; expected one of {TASKS}")
    return task


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable covariate matrix plus response.

    Arrays are copied and flagged read-only so a dataset can be shared across
    threads.
    """

    features: np.ndarray
    response: np.ndarray
    task: str = "regression"
    column_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C", copy=True)
        y = np.array(self.response, dtype=np.float64, copy=True).ravel()
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DataError(f"response has {y.shape[0]} rows, features have {n}")
        if not np.isfinite(X).all():
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite value at row {i + 1}, column {j + 1}")
        if not np.isfinite(y).all():
            i = int(np.flatnonzero(~np.isfinite(y))[0])
            raise DataError(f"non-finite response at row {i + 1}")
        task = normalize_task(self.task)
        if task == "binary-classification":
            bad = np.flatnonzero((y != 0) & (y != 1))
            if bad.size:
                raise DataError(
                    f"binary-classification response must be 0/1; row {bad[0] + 1} has {y[bad[0]]!r}"
                )
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} column names for {p} features")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self.features

    @property
    def y(self) -> np.ndarray:
        return self.response

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.features[rows], self.response[rows], self.task, self.column_names)

    def drop_columns(self, columns) -> "Dataset":
        keep = [j for j in range(self.p) if j not in set(columns)]
        return Dataset(
            self.features[:, keep], self.response, self.task,
            tuple(self.column_names[j] for j in keep),
        )


def _parse_cell(text, row, col_name):
    try:
        value = float(text)
    except ValueError:
        if text.strip() == "":
            raise DataError(f"missing value at row {row}, column {col_name!r}") from None
        raise DataError(f"cannot parse {text!r} as a number at row {row}, column {col_name!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r} at row {row}, column {col_name!r}")
    return value


def load_csv(path, response_column: str, task: str = "regression") -> Dataset:
    """Read a headed, comma-separated numeric file into a :class:`Dataset`.

    Row numbers in error messages count data rows from 1 (the header is
    not counted).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    task = normalize_task(task)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not found in header")
        y_col = header.index(response_column)
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {r} has {len(record)} cells, header has {len(header)}")
            rows.append([_parse_cell(cell, r, header[c]) for c, cell in enumerate(record)])
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    y = table[:, y_col]
    if task == "binary-classification":
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DataError(
                f"{path}: binary-classification response must be 0/1; "
                f"row {bad[0] + 1} has {y[bad[0]]:g}"
            )
    X = np.delete(table, y_col, axis=1)
    names = tuple(h for c, h in enumerate(header) if c != y_col)
    return Dataset(X, y, task, names)


def write_csv(data: Dataset, path, response_column: str = "y") -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it bit for bit."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(data.column_names) + [response_column])
        for row, yi in zip(data.features, data.response):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


@dataclass(frozen=True)
class SeededRng:
    """Value-like handle on a reproducible random stream.

    A stream is identified by ``(seed, stream_id)``; :meth:`child` derives
    independent sub-streams, so work can be handed to any number of threads
    without sharing a mutable generator.
    """

    seed: int
    stream_id: int = 0

    def child(self, *keys: int) -> "SeededRng":
        ss = np.random.SeedSequence(entropy=[self.stream_id & _MASK64, *[int(k) & _MASK64 for k in keys]])
        lo, hi = ss.generate_state(2, dtype=np.uint32)
        return SeededRng(self.seed, (int(hi) << 32) | int(lo))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=[self.seed & _MASK64, self.stream_id & _MASK64])
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class BootstrapIndex:
    in_bag: np.ndarray
    oob: np.ndarray
    counts: np.ndarray = field(repr=False)

    @classmethod
    def from_in_bag(cls, in_bag, n):
        in_bag = np.asarray(in_bag, dtype=np.intp)
        counts = np.bincount(in_bag, minlength=n).astype(np.float64)
        oob = np.flatnonzero(counts == 0)
        for a in (in_bag, counts, oob):
            a.setflags(write=False)
        return cls(in_bag, oob, counts)

    @classmethod
    def full(cls, n):
        """Every row once; used when trees are grown without resampling."""
        return cls.from_in_bag(np.arange(n), n)

    @property
    def n(self):
        return self.counts.shape[0]

    @property
    def support(self):
        return np.flatnonzero(self.counts > 0)

    def __eq__(self, other):
        return isinstance(other, BootstrapIndex) and np.array_equal(self.in_bag, other.in_bag)


def bootstrap_sample(n: int, rng: SeededRng) -> BootstrapIndex:
    if n < 1:
        raise DataError("bootstrap needs n >= 1")
    draws = rng.generator().integers(0, n, size=n)
    return BootstrapIndex.from_in_bag(draws, n)


def split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if n < 2:
        raise DataError(f"cannot split {n} rows into two non-empty parts")
    n_test = max(1, int(math.floor(n * test_fraction + 0.5)))
    n_test = min(n_test, n - 1)
    return n - n_test, n_test


def train_test_split(data: Dataset, test_fraction: float, rng: SeededRng) -> tuple[Dataset, Dataset]:
    n_train, n_test = split_sizes(data.n, test_fraction)
    perm = rng.generator().permutation(data.n)
    return data.take(np.sort(perm[:n_train])), data.take(np.sort(perm[n_train:]))

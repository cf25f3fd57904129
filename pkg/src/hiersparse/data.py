"""Sparse labeled datasets: loading, splitting, cohort filtering, synthesis.

Dataset file format, one row per line::

    <label> <feature>:<value> <feature>:<value> ...

``label`` is 0 or 1. Feature indices are the same 0-based feature columns a
hierarchy file assigns to its leaves, strictly increasing within a line. On
load an intercept column is injected at design column 0, so feature ``j``
lands in design column ``j + 1``.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hierarchy import HierarchyTree


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix (intercept in column 0) with binary labels.

    Attributes
    ----------
    X : scipy.sparse.csr_matrix, shape (n_rows, n_cols)
        Column 0 is all ones. Explicit zeros are never stored.
    y : ndarray of int8, shape (n_rows,)
        Labels in {0, 1}.
    row_ids : ndarray of int64
        Position of each row in the originally loaded file; preserved by
        :func:`split`, :meth:`subset` and :func:`filter_cohort`.
    column_names : tuple of str, optional
        Names for design columns, intercept included.
    """

    X: sp.csr_matrix
    y: np.ndarray
    row_ids: np.ndarray = None
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = sp.csr_matrix(self.X, dtype=np.float64)
        X.eliminate_zeros()
        X.sort_indices()
        y = np.asarray(self.y, dtype=np.int8).ravel()
        if y.shape[0] != X.shape[0]:
            raise DatasetError(f"{y.shape[0]} labels for {X.shape[0]} rows")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DatasetError("non-binary label")
        if X.shape[1] < 1:
            raise DatasetError("design matrix needs an intercept column")
        if X.shape[0] and not (X[:, 0].toarray().ravel() == 1.0).all():
            raise DatasetError("column 0 must be the all-ones intercept")
        rid = np.arange(X.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, np.int64)
        if rid.shape[0] != X.shape[0]:
            raise DatasetError("row_ids length mismatch")
        if self.column_names is not None and len(self.column_names) != X.shape[1]:
            raise DatasetError("column_names length mismatch")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "row_ids", rid)

    @classmethod
    def from_features(cls, features, y, column_names=None, row_ids=None) -> Dataset:
        """Build from a feature matrix without the intercept column."""
        F = sp.csr_matrix(features, dtype=np.float64)
        ones = sp.csr_matrix(np.ones((F.shape[0], 1)))
        return cls(sp.hstack([ones, F], format="csr"), y, row_ids, column_names)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    @property
    def n_features(self) -> int:
        return self.X.shape[1] - 1

    def row(self, i: int) -> list[tuple[int, float]]:
        """Row ``i`` as sorted (design column, value) pairs."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return list(zip(self.X.indices[lo:hi].tolist(), self.X.data[lo:hi].tolist()))

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.row_ids[idx], self.column_names)

    def positive_rate(self) -> float:
        return float(self.y.mean()) if self.n_rows else float("nan")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.X.shape == other.X.shape
            and (self.X != other.X).nnz == 0
            and np.array_equal(self.y, other.y)
        )


# -- text format ---------------------------------------------------------


def load_dataset(text: str, n_cols: int, column_names: Sequence[str] | None = None) -> Dataset:
    """Parse dataset-file content.

    Parameters
    ----------
    text : str
        File content.
    n_cols : int
        Total design columns including the intercept (features + 1).
    """
    if n_cols < 1:
        raise DatasetError("n_cols must be >= 1")
    labels: list[int] = []
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] not in ("0", "1"):
            raise DatasetError(f"line {lineno}: non-binary label {tokens[0]!r}")
        labels.append(int(tokens[0]))
        indices.append(0)
        data.append(1.0)
        prev = -1
        for tok in tokens[1:]:
            try:
                col_s, val_s = tok.split(":", 1)
                col, val = int(col_s), float(val_s)
            except ValueError:
                raise DatasetError(f"line {lineno}: malformed entry {tok!r}") from None
            if col < 0:
                raise DatasetError(f"line {lineno}: negative column {col}")
            if col <= prev:
                raise DatasetError(f"line {lineno}: unsorted or duplicate column {col}")
            if col + 1 >= n_cols:
                raise DatasetError(f"line {lineno}: column index {col} >= n_features {n_cols - 1}")
            if not np.isfinite(val):
                raise DatasetError(f"line {lineno}: non-finite value")
            prev = col
            if val != 0.0:
                indices.append(col + 1)
                data.append(val)
        indptr.append(len(indices))
    X = sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(labels), n_cols),
    )
    names = tuple(column_names) if column_names is not None else None
    return Dataset(X, np.array(labels, dtype=np.int8), None, names)


def _format_value(v: float) -> str:
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def serialize_dataset(ds: Dataset) -> str:
    lines = []
    X = ds.X
    for i in range(ds.n_rows):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        parts = [str(int(ds.y[i]))]
        for c, v in zip(X.indices[lo:hi], X.data[lo:hi]):
            if c == 0:
                continue
            parts.append(f"{c - 1}:{_format_value(v)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def read_dataset(path, n_cols: int) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return load_dataset(fh.read(), n_cols)


def infer_n_cols(text: str) -> int:
    """Smallest ``n_cols`` that fits every feature index in ``text``."""
    top = -1
    for line in text.splitlines():
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        for tok in tokens[1:]:
            head = tok.split(":", 1)[0]
            if head.lstrip("-").isdigit():
                top = max(top, int(head))
    return top + 2


# -- splitting -----------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def split_indices(y: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row positions (sorted) of a random train/test partition."""
    n = len(y)
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        y = np.asarray(y)
        if len(np.unique(y)) < 2:
            raise ValueError("stratified split needs both classes")
        train = []
        for cls in (0, 1):
            members = np.flatnonzero(y == cls)
            perm = rng.permutation(members)
            train.append(perm[: round(len(members) * spec.train_fraction)])
        train_idx = np.sort(np.concatenate(train))
    else:
        n_train = round(n * spec.train_fraction)
        train_idx = np.sort(rng.permutation(n)[:n_train])
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True
    test_idx = np.flatnonzero(~mask)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError(f"train_fraction {spec.train_fraction} leaves one side empty for N={n}")
    return train_idx, test_idx


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds.y, spec)
    return ds.subset(train_idx), ds.subset(test_idx)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled, near-equal folds of ``range(n)``; each fold sorted."""
    if not 2 <= k <= n:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


# -- cohorts -------------------------------------------------------------


def filter_cohort(ds: Dataset, code_columns: Iterable[int]) -> Dataset:
    """Rows having a nonzero in any of ``code_columns`` (feature indices).

    An empty result is returned as an empty Dataset.
    """
    cols = sorted(set(int(c) for c in code_columns))
    for c in cols:
        if not 0 <= c < ds.n_features:
            raise DatasetError(f"cohort column {c} outside [0, {ds.n_features})")
    if not cols:
        return ds.subset(np.array([], dtype=np.int64))
    hits = ds.X[:, [c + 1 for c in cols]].getnnz(axis=1) > 0
    return ds.subset(np.flatnonzero(hits))


# -- synthetic data ------------------------------------------------------


def _sigmoid(t):
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class SynthConfig:
    """Parameters for tree-aligned synthetic data.

    Coefficients are nonzero exactly on the leaves under ``active_subtrees``;
    their sign alternates with column parity (even +, odd -).
    """

    tree: HierarchyTree
    active_subtrees: tuple[str, ...] = ()
    coef_magnitude: float = 1.0
    row_density: float = 8.0
    n_rows: int = 1000
    intercept_true: float = 0.0
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "active_subtrees", tuple(self.active_subtrees))
        for nid in self.active_subtrees:
            self.tree.node(nid)
        if not self.coef_magnitude > 0:
            raise ValueError("coef_magnitude must be > 0")
        if not 0 <= self.row_density <= self.tree.n_leaves:
            raise ValueError("row_density must lie in [0, n_leaves]")
        if not 0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")


def true_coefficients(cfg: SynthConfig) -> np.ndarray:
    d = cfg.tree.n_leaves
    beta = np.zeros(d + 1)
    beta[0] = cfg.intercept_true
    active = sorted({c for nid in cfg.active_subtrees for c in cfg.tree.descendant_columns(nid)})
    for c in active:
        beta[c + 1] = cfg.coef_magnitude if c % 2 == 0 else -cfg.coef_magnitude
    return beta


def synth_generate(cfg: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Sample a dataset whose true coefficients follow the tree.

    Each leaf is present in a row independently with probability
    ``row_density / n_leaves`` (so a row's leaves are drawn without
    replacement with the requested expected count). Labels are Bernoulli
    under the logistic model, then flipped with probability ``label_noise``.
    """
    rng = np.random.default_rng(cfg.seed)
    d = cfg.tree.n_leaves
    beta = true_coefficients(cfg)
    present = rng.random((cfg.n_rows, d)) < (cfg.row_density / d)
    F = sp.csr_matrix(present.astype(np.float64))
    margin = beta[0] + F @ beta[1:]
    y = (rng.random(cfg.n_rows) < _sigmoid(margin)).astype(np.int8)
    flip = rng.random(cfg.n_rows) < cfg.label_noise
    y = np.where(flip, 1 - y, y).astype(np.int8)
    return Dataset.from_features(F, y), beta

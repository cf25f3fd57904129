"""Logistic loss in the summed (not averaged) form.

Labels are stored as {0, 1}; inside the loss they map to s = 2y - 1 in
{-1, +1}, so the loss of one row is log(1 + exp(-s * beta.x)).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def sigmoid(t):
    """Overflow-safe logistic function (elementwise)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _as_matrix(rows, n: int):
    """Accept a sparse/dense matrix, a single dense row, or (col, val) pairs."""
    if sp.issparse(rows):
        return rows
    if isinstance(rows, (list, tuple)) and rows and isinstance(rows[0], tuple):
        cols = [c for c, _ in rows]
        vals = [v for _, v in rows]
        return sp.csr_matrix((vals, ([0] * len(cols), cols)), shape=(1, n))
    arr = np.asarray(rows, dtype=np.float64)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


def margins(beta: np.ndarray, X) -> np.ndarray:
    return np.asarray(X @ beta, dtype=np.float64).ravel()


def predict_proba(beta: np.ndarray, rows) -> np.ndarray | float:
    """p(y = 1 | x) for each row of ``rows``.

    A single row given as a 1-d array or list of (column, value) pairs
    returns a float.
    """
    beta = np.asarray(beta, dtype=np.float64)
    single = not sp.issparse(rows) and (
        (isinstance(rows, (list, tuple)) and rows and isinstance(rows[0], tuple))
        or np.ndim(rows) == 1
    )
    p = sigmoid(margins(beta, _as_matrix(rows, beta.shape[0])))
    return float(p[0]) if single else p


def _signed(y) -> np.ndarray:
    return 2.0 * np.asarray(y, dtype=np.float64) - 1.0


def loss_from_margins(t: np.ndarray, y) -> float:
    z = _signed(y) * t
    # log(1 + exp(-z)) = log1p(exp(-|z|)) + max(0, -z)
    return float(np.sum(np.log1p(np.exp(-np.abs(z))) + np.maximum(0.0, -z)))


def loss_value(beta: np.ndarray, ds) -> float:
    return loss_from_margins(margins(beta, ds.X), ds.y)


def gradient_from_margins(t: np.ndarray, X, y) -> np.ndarray:
    s = _signed(y)
    r = -s * sigmoid(-s * t)
    return np.asarray(X.T @ r, dtype=np.float64).ravel()


def loss_gradient(beta: np.ndarray, ds) -> np.ndarray:
    return gradient_from_margins(margins(beta, ds.X), ds.X, ds.y)

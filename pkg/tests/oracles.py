"""Independent reference implementations used only by the tests.

None of these call into the package's prox, loss or solver code paths.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# -- logistic loss, dense and straightforward ----------------------------


def dense_loss(beta, X, y):
    """Sum of log(1 + exp(-s x.beta)) with math.log1p/exp per row."""
    X = np.asarray(X.todense() if hasattr(X, "todense") else X)
    total = 0.0
    for xi, yi in zip(X, y):
        z = (2 * yi - 1) * float(xi @ beta)
        total += math.log1p(math.exp(-abs(z))) + max(0.0, -z)
    return total


def central_differences(f, beta, h=1e-5):
    g = np.zeros_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


# -- prox objectives -----------------------------------------------------


def ternary_min(f, lo, hi, iters=200):
    """Ternary search; ``f`` is compared exactly (it should return Fractions)."""
    for _ in range(iters):
        a = lo + (hi - lo) / 3
        b = hi - (hi - lo) / 3
        if f(Fraction(a)) < f(Fraction(b)):
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


def prox_l1_by_search(v, t):
    """Coordinate-wise argmin of 0.5 (x - v)^2 + t |x| by ternary search.

    Probe points are floats but the objective is evaluated in exact rational
    arithmetic, so comparisons stay correct down to float resolution.
    """
    out = np.empty_like(v)
    tf = Fraction(float(t))
    for j, vj in enumerate(v):
        vf = Fraction(float(vj))
        span = abs(float(vj)) + float(t) + 1.0
        out[j] = ternary_min(lambda x: (x - vf) ** 2 / 2 + tf * abs(x), -span, span)
    return out


def group_terms(groups, lam, alpha=None):
    """Expand a penalty into (index array, coefficient, norm order) terms.

    ``groups`` holds (feature columns, weight). For sgl pass ``alpha``; every
    feature then also gets an l1 singleton term.
    """
    terms = []
    if alpha is None:
        for cols, w in groups:
            terms.append((np.asarray(cols) + 1, lam * w))
    else:
        cols_all = sorted({c for cols, _ in groups for c in cols})
        for c in cols_all:
            terms.append((np.array([c + 1]), lam * alpha))
        for cols, w in groups:
            terms.append((np.asarray(cols) + 1, lam * (1 - alpha) * w))
    return terms


def penalty_from_terms(x, terms):
    return sum(c * float(np.linalg.norm(x[idx])) for idx, c in terms)


def prox_objective(x, v, t, terms):
    return 0.5 * float(np.sum((x - v) ** 2)) + t * penalty_from_terms(x, terms)


def dual_prox(v, t, terms, tol=1e-9, max_iter=200000):
    """Minimize 0.5||x - v||^2 + t sum_G c_G ||x_G||_2 through its dual.

    The dual variables xi_G live in balls of radius t c_G and x = v - sum xi_G.
    Accelerated projected gradient on the dual; stops when the duality gap
    drops below ``tol``. Returns (x, primal value, gap).
    """
    radii = [t * c for _, c in terms]
    xis = [np.zeros(len(idx)) for idx, _ in terms]
    zs = [z.copy() for z in xis]
    mult = np.zeros_like(v)
    for idx, _ in terms:
        mult[idx] += 1
    step = 1.0 / max(1.0, mult.max())
    s = 1.0

    def primal_point(xs):
        x = v.copy()
        for (idx, _), xi in zip(terms, xs):
            x[idx] -= xi
        return x

    def project(z, r):
        n = np.linalg.norm(z)
        return z if n <= r else z * (r / n)

    x = primal_point(xis)
    gap = math.inf
    for it in range(max_iter):
        xz = primal_point(zs)
        new = [project(z + step * xz[idx], r) for (idx, _), z, r in zip(terms, zs, radii)]
        s_next = 0.5 * (1 + math.sqrt(1 + 4 * s * s))
        zs = [n + ((s - 1) / s_next) * (n - o) for n, o in zip(new, xis)]
        xis, s = new, s_next
        if it % 10 == 0:
            x = primal_point(xis)
            primal = prox_objective(x, v, t, terms)
            dual = 0.5 * float(v @ v) - 0.5 * float(x @ x)
            gap = primal - dual
            if gap <= tol:
                break
    x = primal_point(xis)
    return x, prox_objective(x, v, t, terms), gap


def subgradient_prox(v, t, terms, iters=200000, eta0=1.0):
    """Plain subgradient descent with a diminishing step; keeps the best point."""
    x = v.copy()
    best, best_val = x.copy(), prox_objective(x, v, t, terms)
    for k in range(1, iters + 1):
        g = x - v
        for idx, c in terms:
            n = np.linalg.norm(x[idx])
            if n > 0:
                g[idx] += t * c * x[idx] / n
        x = x - (eta0 / k) * g
        val = prox_objective(x, v, t, terms)
        if val < best_val:
            best, best_val = x.copy(), val
    return best, best_val


# -- l1 logistic regression by proximal coordinate descent ---------------


def cd_l1_logistic(X, y, lam, tol=1e-10, max_sweeps=100000):
    """Cyclic proximal coordinate descent with per-coordinate curvature bounds.

    Intercept (column 0) unpenalized. Stops when the relative objective change
    over a sweep is below ``tol``.
    """
    X = np.asarray(X.todense() if hasattr(X, "todense") else X, dtype=np.float64)
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    n, p = X.shape
    beta = np.zeros(p)
    margin = np.zeros(n)
    lip = 0.25 * np.sum(X * X, axis=0)

    def obj():
        z = s * margin
        return float(np.sum(np.logaddexp(0.0, -z))) + lam * float(np.abs(beta[1:]).sum())

    prev = obj()
    for _ in range(max_sweeps):
        for j in range(p):
            if lip[j] == 0:
                continue
            z = s * margin
            r = -s / (1.0 + np.exp(z))
            g = float(X[:, j] @ r)
            u = beta[j] - g / lip[j]
            if j == 0:
                new = u
            else:
                new = math.copysign(max(abs(u) - lam / lip[j], 0.0), u)
            if new != beta[j]:
                margin += (new - beta[j]) * X[:, j]
                beta[j] = new
        cur = obj()
        if abs(prev - cur) <= tol * abs(prev):
            break
        prev = cur
    return beta, obj()


# -- AUC by pair enumeration ---------------------------------------------


def auc_pairs(scores, labels) -> Fraction:
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = Fraction(0)
    for a, b in itertools.product(pos, neg):
        if a > b:
            wins += 1
        elif a == b:
            wins += Fraction(1, 2)
    return wins / (len(pos) * len(neg))


# -- random trees --------------------------------------------------------


def random_tree_nodes(rng, n_nodes):
    """Random rooted tree as NodeRecord-ready tuples (id, parent or None)."""
    ids = [f"v{i:03d}" for i in range(n_nodes)]
    rows = [(ids[0], None)]
    for i in range(1, n_nodes):
        rows.append((ids[i], ids[int(rng.integers(0, i))]))
    return rows

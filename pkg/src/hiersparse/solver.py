"""Accelerated proximal gradient (FISTA) for penalized logistic regression.

Minimizes ``sum_i log(1 + exp(-s_i beta.x_i)) + lam * Omega(beta)``. The
smooth part is the logistic loss, plus the ridge term when ``kind == "l2"``;
every other penalty enters through its prox. The step size comes from a
backtracking line search on the quadratic upper model of the smooth part,
and momentum is reset whenever the objective would increase, which keeps the
objective trace monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loss import loss_from_margins, loss_gradient, loss_value, sigmoid
from .regularizer import RegularizerSpec, null_model, penalty_value, prox


class SolverError(RuntimeError):
    """Numerical failure during fitting (non-finite objective or failed line search)."""

    def __init__(self, message: str, iteration: int, step: float):
        super().__init__(f"{message} at iteration {iteration} (step size {step:.3e})")
        self.iteration = iteration
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    tol: float = 1e-7
    backtrack_eta: float = 0.5
    init_step: float = 1.0
    restart: bool = True
    # Unused; the solver is deterministic. Kept so configs round-trip through manifests.
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.backtrack_eta < 1.0:
            raise ValueError("backtrack_eta must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.init_step > 0:
            raise ValueError("init_step must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class FitResult:
    beta: np.ndarray
    objective_trace: list[float] = field(repr=False)
    iterations: int
    converged: bool
    nonzero_count: int
    step: float = 1.0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def objective(ds, spec: RegularizerSpec, beta: np.ndarray) -> float:
    """Training loss plus penalty (the ridge term counts as the penalty for l2)."""
    return loss_value(beta, ds) + penalty_value(spec, beta)


class _Smooth:
    """Loss (+ ridge) value and gradient with the transpose precomputed."""

    def __init__(self, ds, spec: RegularizerSpec):
        self.X = ds.X
        self.Xt = ds.X.T.tocsr()
        self.y = ds.y
        self.s = 2.0 * ds.y.astype(np.float64) - 1.0
        self.ridge = spec.lam if spec.kind == "l2" else 0.0

    def value(self, beta: np.ndarray) -> float:
        val = loss_from_margins(self.X @ beta, self.y)
        if self.ridge:
            w = beta[1:]
            val += self.ridge * float(w @ w)
        return val

    def value_grad(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        t = self.X @ beta
        val = loss_from_margins(t, self.y)
        s = self.s
        grad = np.asarray(self.Xt @ (-s * sigmoid(-s * t)), dtype=np.float64).ravel()
        if self.ridge:
            w = beta[1:]
            val += self.ridge * float(w @ w)
            grad[1:] += 2.0 * self.ridge * w
        return val, grad


def _nonsmooth(spec: RegularizerSpec, beta: np.ndarray) -> float:
    return 0.0 if spec.kind in ("none", "l2") else penalty_value(spec, beta)


def _optimal_null(ds, spec: RegularizerSpec):
    """The intercept-only model when it already satisfies the optimality conditions, else None.

    With ``g`` the loss gradient there, zero is optimal for the remaining
    coefficients iff ``prox(-g)`` vanishes, so the check is exact and cheap.
    """
    if spec.kind not in ("l1", "sgl", "tsgl") or not 0.0 < ds.positive_rate() < 1.0:
        return None
    beta = null_model(ds)
    g = loss_gradient(beta, ds)
    g[0] = 0.0
    return beta if not np.any(prox(-g, spec, 1.0)[1:]) else None


def fit(ds, spec: RegularizerSpec, cfg: SolverConfig | None = None, beta0=None) -> FitResult:
    """Fit coefficients by FISTA with backtracking and adaptive restart.

    Parameters
    ----------
    ds : Dataset
    spec : RegularizerSpec
    cfg : SolverConfig, optional
    beta0 : ndarray, optional
        Starting point (warm start); zeros when omitted.

    Returns
    -------
    FitResult
        ``converged`` is True when the relative objective decrease of an
        iteration fell below ``cfg.tol`` before ``cfg.max_iters``. When the
        intercept-only model is already optimal for ``spec`` it is returned
        directly, with exact zeros, after one iteration.

    Raises
    ------
    SolverError
        If the objective becomes non-finite or the line search cannot find
        a step.
    """
    cfg = cfg or SolverConfig()
    if ds.n_rows == 0:
        raise ValueError("cannot fit an empty dataset")
    if spec.kind in ("sgl", "tsgl") and spec.max_column >= ds.n_features:
        raise ValueError(
            f"penalty groups reference feature {spec.max_column} but data has {ds.n_features}"
        )
    smooth = _Smooth(ds, spec)
    x = np.zeros(ds.n_cols) if beta0 is None else np.array(beta0, dtype=np.float64)
    if x.shape != (ds.n_cols,):
        raise ValueError(f"beta0 has shape {x.shape}, expected ({ds.n_cols},)")

    step = cfg.init_step
    eta = cfg.backtrack_eta
    F_0 = smooth.value(x) + _nonsmooth(spec, x)
    null = _optimal_null(ds, spec) if math.isfinite(F_0) else None
    if null is not None:
        # The penalty zeroes everything: return the exact minimizer.
        F_null = smooth.value(null)
        return FitResult(null, [F_0, F_null], 1, True, 0, step)

    def prox_step(point, f_point, g_point, step, it):
        # Shrink until the quadratic model majorizes the smooth part at the new point.
        slack = 1e-13 * max(1.0, abs(f_point))
        for _ in range(200):
            cand = prox(point - step * g_point, spec, step)
            diff = cand - point
            f_cand = smooth.value(cand)
            if not math.isfinite(f_cand):
                if step < 1e-300:
                    break
                step *= eta
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                model = f_point + float(g_point @ diff) + float(diff @ diff) / (2.0 * step)
            if f_cand <= model + slack:
                return cand, f_cand, step
            step *= eta
        raise SolverError("line search failed", it, step)

    F_x = F_0
    if not math.isfinite(F_x):
        raise SolverError("non-finite objective", 0, step)
    trace = [F_x]
    y = x
    t_mom = 1.0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        f_y, g_y = smooth.value_grad(y)
        if not math.isfinite(f_y):
            raise SolverError("non-finite objective", it, step)
        x_new, f_new, step = prox_step(y, f_y, g_y, step, it)
        F_new = f_new + _nonsmooth(spec, x_new)
        if cfg.restart and F_new > F_x and not np.array_equal(y, x):
            # Drop the momentum and take a plain proximal step from x instead.
            t_mom = 1.0
            f_x, g_x = smooth.value_grad(x)
            x_new, f_new, step = prox_step(x, f_x, g_x, step, it)
            F_new = f_new + _nonsmooth(spec, x_new)
        if not math.isfinite(F_new):
            raise SolverError("non-finite objective", it, step)
        trace.append(F_new)
        decrease = F_x - F_new
        prev = F_x
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = x_new + ((t_mom - 1.0) / t_next) * (x_new - x)
        x, F_x, t_mom = x_new, F_new, t_next
        if decrease <= cfg.tol * abs(prev):
            converged = True
            break

    return FitResult(
        beta=x,
        objective_trace=trace,
        iterations=it,
        converged=converged,
        nonzero_count=int(np.count_nonzero(x[1:])),
        step=step,
    )

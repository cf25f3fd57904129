"""Repeated train/test splits with cross-validated regularization strength.

Per repeat ``r``: split with seed ``base_seed + r``; pick lambda (and alpha
for sgl) by k-fold CV on the training side, maximizing mean validation F1;
refit on the whole training side; score the test side.
"""

from __future__ import annotations

import statistics
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitSpec, kfold_indices, split_indices
from .hierarchy import Group
from .loss import predict_proba
from .metrics import MetricsReport, classify_metrics, evaluate
from .regularizer import RegularizerSpec, lambda_max
from .solver import FitResult, SolverConfig, fit


@dataclass(frozen=True)
class PenaltyFactory:
    """Builds a :class:`RegularizerSpec` for a given (lambda, alpha).

    A plain picklable object so experiment repeats can run in worker
    processes.
    """

    kind: str
    groups: tuple[Group, ...] = ()
    tree_norm: str = "group_l2"
    weight_mode: str = "unit"

    def __call__(self, lam: float, alpha: float = 0.5) -> RegularizerSpec:
        base = self.__dict__.get("_base")
        if base is None:
            base = RegularizerSpec(self.kind, 0.0, alpha, tuple(self.groups), self.tree_norm, self.weight_mode)
            self.__dict__["_base"] = base
        spec = base.with_lambda(lam)
        return spec if alpha == spec.alpha else spec.with_alpha(alpha)

    def __getstate__(self):
        return {k: v for k, v in self.__dict__.items() if k != "_base"}

    def __setstate__(self, state):
        self.__dict__.update(state)


def lambda_grid(ds: Dataset, factory: PenaltyFactory, alpha: float = 0.5,
                n: int = 20, ratio: float = 1e-3) -> list[float]:
    """``n`` log-spaced values from lambda_max down to ``ratio * lambda_max``."""
    if factory.kind == "none":
        return [0.0]
    top = lambda_max(ds, factory(1.0, alpha))
    if top <= 0:
        return [0.0]
    return [float(v) for v in np.geomspace(top, top * ratio, n)]


def fit_path(ds: Dataset, factory: PenaltyFactory, lambdas: Sequence[float], alpha: float,
             cfg: SolverConfig) -> list[FitResult]:
    """Fits along ``lambdas`` in the given order, each warm-started from the last."""
    out = []
    beta = None
    for lam in lambdas:
        res = fit(ds, factory(lam, alpha), cfg, beta0=beta)
        out.append(res)
        beta = res.beta
    return out


@dataclass
class CVResult:
    lam: float
    alpha: float
    # (alpha, lambda, mean validation F1) for every grid point, grid order.
    table: list[tuple[float, float, float]]


def cross_validate(train: Dataset, factory: PenaltyFactory, grids: dict[float, list[float]],
                   cfg: SolverConfig, n_folds: int = 5, seed: int = 0,
                   threshold: float = 0.5) -> CVResult:
    """Choose (alpha, lambda) maximizing mean validation F1; ties keep the first."""
    folds = kfold_indices(train.n_rows, n_folds, seed)
    table = []
    for alpha, lambdas in grids.items():
        f1 = np.zeros(len(lambdas))
        for k, val_idx in enumerate(folds):
            fit_idx = np.concatenate([f for j, f in enumerate(folds) if j != k])
            fit_ds, val_ds = train.subset(np.sort(fit_idx)), train.subset(val_idx)
            for i, res in enumerate(fit_path(fit_ds, factory, lambdas, alpha, cfg)):
                scores = predict_proba(res.beta, val_ds.X)
                f1[i] += classify_metrics(scores, val_ds.y, threshold).f1
        table.extend((alpha, lam, score / n_folds) for lam, score in zip(lambdas, f1))
    best = max(range(len(table)), key=lambda i: (table[i][2], -i))
    return CVResult(lam=table[best][1], alpha=table[best][0], table=table)


@dataclass
class RunResult:
    repeat: int
    seed: int
    metrics: MetricsReport
    chosen_lambda: float
    chosen_alpha: float
    beta: np.ndarray = field(repr=False)
    nonzero_count: int = 0
    train_rows: np.ndarray = field(default=None, repr=False)
    test_rows: np.ndarray = field(default=None, repr=False)
    cv_table: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {
            "repeat": self.repeat,
            "seed": self.seed,
            "chosen_lambda": self.chosen_lambda,
            "chosen_alpha": self.chosen_alpha,
            "nonzero_count": self.nonzero_count,
        }
        d.update(self.metrics.to_dict())
        d["roc_points"] = [list(p) for p in self.metrics.roc_points]
        return d


@dataclass
class ExperimentSummary:
    kind: str
    per_run: list[RunResult]
    f1_mean: float
    f1_std: float
    auc_mean: float | None
    chosen_lambda: float
    chosen_alpha: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "auc_mean": self.auc_mean,
            "chosen_lambda": self.chosen_lambda,
            "chosen_alpha": self.chosen_alpha,
            "per_run": [r.to_dict() for r in self.per_run],
        }


def run_once(ds: Dataset, factory: PenaltyFactory, cfg: SolverConfig, split_spec: SplitSpec,
             repeat: int, lambdas: Sequence[float] | None = None,
             alphas: Sequence[float] = (0.5,), n_folds: int = 5, threshold: float = 0.5,
             n_lambdas: int = 20, lambda_ratio: float = 1e-3) -> RunResult:
    """One repeat: split, cross-validate on the training side, refit, test."""
    seed = split_spec.seed + repeat
    spec_r = SplitSpec(split_spec.train_fraction, seed, split_spec.stratified)
    train_idx, test_idx = split_indices(ds.y, spec_r)
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    if np.intersect1d(train.row_ids, test.row_ids).size:
        raise RuntimeError("train and test rows overlap")

    if factory.kind != "sgl":
        alphas = (0.5,)
    if lambdas is not None:
        grids = {float(a): sorted((float(v) for v in lambdas), reverse=True) for a in alphas}
    else:
        grids = {float(a): lambda_grid(train, factory, a, n_lambdas, lambda_ratio) for a in alphas}

    if sum(len(g) for g in grids.values()) == 1:
        ((alpha, (lam,)),) = grids.items()
        cv = CVResult(lam, alpha, [(alpha, lam, float("nan"))])
    else:
        cv = cross_validate(train, factory, grids, cfg, n_folds, seed, threshold)

    # Refit along the path down to the chosen lambda (same warm starts as CV).
    path = [v for v in grids[cv.alpha] if v >= cv.lam]
    res = fit_path(train, factory, path, cv.alpha, cfg)[-1]
    scores = predict_proba(res.beta, test.X)
    return RunResult(
        repeat=repeat,
        seed=seed,
        metrics=evaluate(scores, test.y, threshold),
        chosen_lambda=cv.lam,
        chosen_alpha=cv.alpha,
        beta=res.beta,
        nonzero_count=res.nonzero_count,
        train_rows=train.row_ids,
        test_rows=test.row_ids,
        cv_table=cv.table,
    )


def summarize(kind: str, runs: list[RunResult]) -> ExperimentSummary:
    f1s = [r.metrics.f1 for r in runs]
    aucs = [r.metrics.auc for r in runs if r.metrics.auc is not None]
    return ExperimentSummary(
        kind=kind,
        per_run=runs,
        f1_mean=float(np.mean(f1s)),
        f1_std=float(statistics.stdev(f1s)) if len(f1s) > 1 else 0.0,
        auc_mean=float(np.mean(aucs)) if aucs else None,
        chosen_lambda=float(np.median([r.chosen_lambda for r in runs])),
        chosen_alpha=float(np.median([r.chosen_alpha for r in runs])),
    )


def repeated_splits(ds: Dataset, factory: PenaltyFactory, cfg: SolverConfig | None = None,
                    repeats: int = 10, split: SplitSpec | None = None,
                    lambdas: Sequence[float] | None = None, alphas: Sequence[float] = (0.5,),
                    n_folds: int = 5, threshold: float = 0.5, n_lambdas: int = 20,
                    lambda_ratio: float = 1e-3, jobs: int = 1) -> ExperimentSummary:
    """Aggregate ``repeats`` independent runs; see :func:`run_once`.

    ``chosen_lambda`` / ``chosen_alpha`` on the summary are medians over runs.
    With ``jobs > 1`` repeats run in worker processes; results are collected
    in repeat order, so the summary does not depend on ``jobs``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if lambdas is not None and len(lambdas) == 0:
        raise ValueError("lambda grid is empty")
    cfg = cfg or SolverConfig()
    split = split or SplitSpec()
    kwargs = dict(lambdas=lambdas, alphas=tuple(alphas), n_folds=n_folds, threshold=threshold,
                  n_lambdas=n_lambdas, lambda_ratio=lambda_ratio)
    if jobs > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_once, ds, factory, cfg, split, r, **kwargs) for r in range(repeats)]
            runs = [f.result() for f in futures]
    else:
        runs = [run_once(ds, factory, cfg, split, r, **kwargs) for r in range(repeats)]
    return summarize(factory.kind, runs)

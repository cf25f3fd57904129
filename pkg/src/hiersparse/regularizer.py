"""Penalties and their proximal operators.

All operators act on a full coefficient vector ``v`` whose entry 0 is the
intercept. The intercept is never penalized and passes through every prox
unchanged; group member columns are feature indices, so feature ``j`` is
``v[j + 1]``.

Kinds
-----
none
    No penalty.
l2
    Smooth ridge ``lam * sum(w**2)``; handled by the solver's gradient step,
    its prox is the identity.
l1
    ``lam * ||w||_1``.
sgl
    Sparse group lasso, ``lam * (alpha ||w||_1 + (1 - alpha) sum_k c_k ||w_Gk||_2)``
    over a disjoint partition.
tsgl
    Tree-structured group lasso, ``lam * sum_G c_G ||w_G||`` over every node
    of the tree. ``tree_norm="group_l2"`` (default) uses the Euclidean norm per
    group, which yields nested zero patterns; ``"group_l1"`` uses the l1 norm
    per group and reduces to a weighted lasso.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .hierarchy import Group

KINDS = ("none", "l2", "l1", "sgl", "tsgl")
TREE_NORMS = ("group_l2", "group_l1")
WEIGHT_MODES = ("unit", "sqrt_size", "given")


class RegularizerError(ValueError):
    pass


def _reweight(groups: Sequence[Group], mode: str) -> tuple[Group, ...]:
    if mode == "given":
        return tuple(groups)
    if mode == "unit":
        return tuple(replace(g, weight=1.0) for g in groups)
    return tuple(replace(g, weight=math.sqrt(g.size)) for g in groups)


def check_prox_order(groups: Sequence[Group]) -> None:
    """Raise unless ``groups`` is a laminar family listed subsets-first.

    For each column, the groups containing it must form an inclusion chain in
    list order. Checking consecutive links of every chain is enough, and each
    distinct link is tested once.
    """
    last: dict[int, int] = {}
    links: set[tuple[int, int]] = set()
    for gi, g in enumerate(groups):
        for c in g.member_columns:
            prev = last.get(c)
            if prev is not None:
                links.add((prev, gi))
            last[c] = gi
    sets = {}
    for p, q in sorted(links):
        sp_ = sets.setdefault(p, frozenset(groups[p].member_columns))
        sq = sets.setdefault(q, frozenset(groups[q].member_columns))
        if sp_ <= sq:
            continue
        if sq < sp_:
            raise RegularizerError(
                f"order violation: group {groups[q].node_id!r} is a subset of "
                f"{groups[p].node_id!r} but comes after it"
            )
        raise RegularizerError(
            f"groups {groups[p].node_id!r} and {groups[q].node_id!r} overlap without nesting"
        )


@dataclass(frozen=True)
class _Batch:
    """Disjoint groups processed together."""

    index: np.ndarray  # coefficient indices, groups concatenated
    starts: np.ndarray  # segment offsets into ``index``
    weights: np.ndarray  # one per group
    owner: np.ndarray  # group position within the batch for each element of ``index``


def _make_batch(groups: Sequence[Group]) -> _Batch:
    sizes = np.array([g.size for g in groups], dtype=np.int64)
    index = np.concatenate([np.asarray(g.member_columns, dtype=np.int64) + 1 for g in groups])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    owner = np.repeat(np.arange(len(groups)), sizes)
    return _Batch(index, starts, np.array([g.weight for g in groups], dtype=np.float64), owner)


def _batches(groups: Sequence[Group]) -> list[_Batch]:
    """Split an ordered group list into runs of mutually disjoint groups.

    Proxes of disjoint groups commute, so evaluating a run at once gives the
    same result as the sequential composition.
    """
    out, current, used = [], [], set()
    for g in groups:
        cols = set(g.member_columns)
        if used & cols:
            out.append(_make_batch(current))
            current, used = [], set()
        current.append(g)
        used |= cols
    if current:
        out.append(_make_batch(current))
    return out


@dataclass(frozen=True)
class RegularizerSpec:
    """Which penalty, how strong, over which groups.

    ``weight_mode`` rewrites group weights: ``"unit"`` sets every weight to 1,
    ``"sqrt_size"`` to sqrt(|G|), ``"given"`` keeps the weights on the groups.
    """

    kind: str = "none"
    lam: float = 0.0
    alpha: float = 0.5
    groups: tuple[Group, ...] = field(default=(), repr=False)
    tree_norm: str = "group_l2"
    weight_mode: str = "unit"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RegularizerError(f"unknown penalty kind {self.kind!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise RegularizerError(f"lambda must be finite and >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise RegularizerError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.tree_norm not in TREE_NORMS:
            raise RegularizerError(f"unknown tree norm {self.tree_norm!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise RegularizerError(f"unknown weight mode {self.weight_mode!r}")
        groups = _reweight(self.groups, self.weight_mode)
        object.__setattr__(self, "groups", groups)
        if self.kind in ("sgl", "tsgl") and not groups:
            raise RegularizerError(f"{self.kind} needs at least one group")
        if any(min(g.member_columns) < 0 for g in groups):
            raise RegularizerError("group columns must be feature indices >= 0")
        if self.kind == "sgl":
            seen: set[int] = set()
            for g in groups:
                cols = set(g.member_columns)
                if seen & cols:
                    raise RegularizerError(f"sgl groups must be disjoint; {g.node_id!r} overlaps")
                seen |= cols
        elif self.kind == "tsgl":
            check_prox_order(groups)

    def with_lambda(self, lam: float) -> RegularizerSpec:
        return self._carry(replace(self, lam=float(lam), weight_mode="given"))

    def with_alpha(self, alpha: float) -> RegularizerSpec:
        return self._carry(replace(self, alpha=float(alpha), weight_mode="given"))

    def _carry(self, new: RegularizerSpec) -> RegularizerSpec:
        # Same groups, so compiled index structures can be shared.
        for key in ("_batches", "_column_weight_index", "max_column"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    @cached_property
    def max_column(self) -> int:
        return max((max(g.member_columns) for g in self.groups), default=-1)

    # Compiled index structures; cached per (immutable) spec.

    @cached_property
    def _batches(self) -> list[_Batch]:
        return _batches(self.groups)

    @cached_property
    def _column_weight_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Summed group weight per penalized coefficient index (group_l1 variant)."""
        acc: dict[int, float] = {}
        for g in self.groups:
            for c in g.member_columns:
                acc[c + 1] = acc.get(c + 1, 0.0) + g.weight
        idx = np.array(sorted(acc), dtype=np.int64)
        return idx, np.array([acc[i] for i in idx], dtype=np.float64)


def _check_dim(spec: RegularizerSpec, v: np.ndarray) -> None:
    if spec.max_column + 1 >= v.shape[0]:
        raise RegularizerError(
            f"group column {spec.max_column} out of range for {v.shape[0] - 1} features"
        )


# -- penalty values ------------------------------------------------------


def _group_norms(w_full: np.ndarray, batch: _Batch, ord_: int = 2) -> np.ndarray:
    vals = w_full[batch.index]
    if ord_ == 2:
        return np.sqrt(np.add.reduceat(vals * vals, batch.starts))
    return np.add.reduceat(np.abs(vals), batch.starts)


def penalty_value(spec: RegularizerSpec, beta: np.ndarray) -> float:
    """``lam * Omega(beta)``, intercept excluded."""
    beta = np.asarray(beta, dtype=np.float64)
    _check_dim(spec, beta)
    w = beta[1:]
    if spec.kind == "none" or spec.lam == 0.0:
        return 0.0
    if spec.kind == "l2":
        return spec.lam * float(w @ w)
    if spec.kind == "l1":
        return spec.lam * float(np.abs(w).sum())
    ord_ = 1 if (spec.kind == "tsgl" and spec.tree_norm == "group_l1") else 2
    total = sum(float(b.weights @ _group_norms(beta, b, ord_)) for b in spec._batches)
    if spec.kind == "sgl":
        return spec.lam * (spec.alpha * float(np.abs(w).sum()) + (1.0 - spec.alpha) * total)
    return spec.lam * total


# -- proximal operators --------------------------------------------------


def soft_threshold(x: np.ndarray, t) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def prox_l1(v: np.ndarray, t: float) -> np.ndarray:
    """Soft-threshold every coefficient except the intercept by ``t``."""
    if t < 0:
        raise RegularizerError("prox step must be >= 0")
    out = np.array(v, dtype=np.float64)
    out[1:] = soft_threshold(out[1:], t)
    return out


def _block_shrink(out: np.ndarray, batch: _Batch, thresh: float) -> None:
    norms = _group_norms(out, batch)
    limit = thresh * batch.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > limit, 1.0 - limit / norms, 0.0)
    out[batch.index] *= scale[batch.owner]


def prox_group(v: np.ndarray, group: Group, t: float) -> np.ndarray:
    """Block soft-thresholding of one group at ``t * group.weight``."""
    if t < 0:
        raise RegularizerError("prox step must be >= 0")
    out = np.array(v, dtype=np.float64)
    idx = np.asarray(group.member_columns, dtype=np.int64) + 1
    r = math.sqrt(float(out[idx] @ out[idx]))
    limit = t * group.weight
    out[idx] = 0.0 if r <= limit else out[idx] * (1.0 - limit / r)
    return out


def prox_sgl(v: np.ndarray, spec: RegularizerSpec, t: float) -> np.ndarray:
    """Soft-threshold at ``t lam alpha``, then block-threshold each group at
    ``t lam (1 - alpha) c_k``. The composition is exact for disjoint groups."""
    if spec.kind != "sgl":
        raise RegularizerError("prox_sgl needs an sgl spec")
    if t < 0:
        raise RegularizerError("prox step must be >= 0")
    out = np.array(v, dtype=np.float64)
    _check_dim(spec, out)
    out[1:] = soft_threshold(out[1:], t * spec.lam * spec.alpha)
    for b in spec._batches:
        _block_shrink(out, b, t * spec.lam * (1.0 - spec.alpha))
    return out


def prox_tsgl(v: np.ndarray, spec: RegularizerSpec, t: float) -> np.ndarray:
    """Tree-structured prox: block shrinkage group by group, subsets first.

    For ``group_l1`` the penalty is a weighted lasso, with the weight of a
    column the summed weights of the groups containing it.
    """
    if spec.kind != "tsgl":
        raise RegularizerError("prox_tsgl needs a tsgl spec")
    if t < 0:
        raise RegularizerError("prox step must be >= 0")
    out = np.array(v, dtype=np.float64)
    _check_dim(spec, out)
    if spec.tree_norm == "group_l1":
        idx, cw = spec._column_weight_index
        out[idx] = soft_threshold(out[idx], t * spec.lam * cw)
        return out
    for b in spec._batches:
        _block_shrink(out, b, t * spec.lam)
    return out


def prox(v: np.ndarray, spec: RegularizerSpec, t: float) -> np.ndarray:
    """Prox of ``t * penalty`` for any kind (identity for none and l2)."""
    if spec.kind in ("none", "l2"):
        return np.array(v, dtype=np.float64)
    if spec.kind == "l1":
        return prox_l1(v, t * spec.lam)
    if spec.kind == "sgl":
        return prox_sgl(v, spec, t)
    return prox_tsgl(v, spec, t)


def penalized_mask(spec: RegularizerSpec, n_features: int) -> np.ndarray:
    """Boolean mask over the coefficient vector of entries the penalty touches."""
    mask = np.zeros(n_features + 1, dtype=bool)
    if spec.kind in ("l1", "l2"):
        mask[1:] = True
    elif spec.kind in ("sgl", "tsgl"):
        if spec.kind == "sgl" and spec.alpha > 0:
            mask[1:] = True
        for g in spec.groups:
            mask[np.asarray(g.member_columns) + 1] = True
    return mask


# -- lambda_max ----------------------------------------------------------


def null_model(ds) -> np.ndarray:
    """Intercept-only coefficients at the unpenalized optimum."""
    beta = np.zeros(ds.n_cols)
    p = ds.positive_rate()
    if 0.0 < p < 1.0:
        beta[0] = math.log(p / (1.0 - p))
    return beta


def lambda_max(ds, spec: RegularizerSpec, rel_tol: float = 1e-12) -> float:
    """Smallest lambda at which the intercept-only model is optimal.

    The null model is optimal iff the prox of ``lam * Omega`` maps ``-g`` to
    zero, where ``g`` is the loss gradient at the null model. That test is
    monotone in lambda and is bisected; l1 has the closed form
    ``max |g_j|``. For l2 (never sparse) the l1 value is returned as a scale
    for grids; for ``none`` the result is 0.
    """
    from .loss import loss_gradient

    g = loss_gradient(null_model(ds), ds)
    g[0] = 0.0
    if spec.kind == "none":
        return 0.0
    if spec.kind in ("l1", "l2"):
        return float(np.abs(g[1:]).max(initial=0.0))
    _check_dim(spec, g)
    mask = penalized_mask(spec, ds.n_features)
    mask[0] = False

    def zeroed(lam: float) -> bool:
        return not np.any(prox(-g, spec.with_lambda(lam), 1.0)[mask])

    if zeroed(0.0):
        return 0.0
    hi = float(np.abs(g).max()) or 1.0
    for _ in range(2000):
        if zeroed(hi):
            break
        hi *= 2.0
    else:
        raise RegularizerError("penalty cannot zero every penalized column (zero weights?)")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if zeroed(mid):
            hi = mid
        else:
            lo = mid
    return hi

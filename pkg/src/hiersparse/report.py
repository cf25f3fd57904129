"""Interpretation summaries for a fitted coefficient vector.

"Zero" always means exactly 0.0; proximal steps produce exact zeros, so no
threshold is applied.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .hierarchy import HierarchyError, HierarchyTree, ancestor_chain

UNGROUPED = "(outside hierarchy)"


@dataclass(frozen=True)
class LevelSparsity:
    level: int
    total_nodes: int
    all_zero_nodes: int


@dataclass(frozen=True)
class CoefEntry:
    column: int
    name: str
    coefficient: float
    group_label: str


def nonzero_count(beta: np.ndarray) -> int:
    """Nonzero coefficients, intercept excluded."""
    return int(np.count_nonzero(np.asarray(beta)[1:]))


def _features(beta, tree: HierarchyTree) -> np.ndarray:
    w = np.asarray(beta, dtype=np.float64)[1:]
    if w.shape[0] < tree.n_leaves:
        raise ValueError(
            f"coefficient vector has {w.shape[0]} features, hierarchy needs {tree.n_leaves}"
        )
    return w


def zero_nodes(beta, tree: HierarchyTree) -> dict[str, bool]:
    """Map node id -> whether every descendant-leaf coefficient is exactly 0."""
    w = _features(beta, tree)
    return {n.id: not np.any(w[list(tree.descendant_columns(n.id))]) for n in tree.nodes}


def sparsity_by_level(beta, tree: HierarchyTree) -> list[LevelSparsity]:
    zero = zero_nodes(beta, tree)
    total = [0] * (tree.depth + 1)
    zeros = [0] * (tree.depth + 1)
    for nid, is_zero in zero.items():
        lv = tree.level(nid)
        total[lv] += 1
        zeros[lv] += is_zero
    return [LevelSparsity(lv, total[lv], zeros[lv]) for lv in range(tree.depth + 1)]


def nesting_violations(beta, tree: HierarchyTree) -> list[str]:
    """Nodes that are all-zero while some descendant coefficient is not.

    By construction of :func:`zero_nodes` this is always empty; it checks
    the structural invariant from the other direction (a zero node's
    children must also be zero) and is used by tests and reports.
    """
    zero = zero_nodes(beta, tree)
    return [nid for nid, z in zero.items() if z and not all(zero[c] for c in tree.children(nid))]


def top_level_label(tree: HierarchyTree, column: int) -> str:
    try:
        chain = ancestor_chain(tree, column)
    except HierarchyError:
        return UNGROUPED
    node = tree.node(chain[1] if len(chain) > 1 else chain[0])
    return node.label or node.id


def column_name(tree: HierarchyTree | None, column: int, names: Sequence[str] | None = None) -> str:
    if names is not None and column < len(names):
        return names[column]
    if tree is not None and column < tree.n_leaves:
        node = tree.node(tree.leaf_for_column(column))
        return node.label or node.id
    return f"feature {column}"


def top_k(beta, tree: HierarchyTree | None, names: Sequence[str] | None = None, k: int = 40) -> list[CoefEntry]:
    """The ``k`` largest-magnitude nonzero feature coefficients.

    Sorted by |coefficient| descending, ties by column ascending. Each entry
    carries the label of its top-level ancestor (child of the root).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    w = np.asarray(beta, dtype=np.float64)[1:]
    nz = np.flatnonzero(w)
    order = sorted(nz.tolist(), key=lambda c: (-abs(w[c]), c))[:k]
    return [
        CoefEntry(
            c,
            column_name(tree, c, names),
            float(w[c]),
            top_level_label(tree, c) if tree is not None else UNGROUPED,
        )
        for c in order
    ]


# -- rendering -----------------------------------------------------------


def build_report(beta, tree: HierarchyTree | None, names=None, k: int = 40) -> dict:
    out = {
        "nonzero_count": nonzero_count(beta),
        "n_features": int(np.asarray(beta).shape[0] - 1),
        "intercept": float(np.asarray(beta)[0]),
        "top_coefficients": [
            {"column": e.column, "name": e.name, "coefficient": e.coefficient, "group": e.group_label}
            for e in top_k(beta, tree, names, k)
        ],
    }
    if tree is not None:
        out["sparsity_by_level"] = [
            {"level": s.level, "total_nodes": s.total_nodes, "all_zero_nodes": s.all_zero_nodes}
            for s in sparsity_by_level(beta, tree)
        ]
    return out


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    lines = [line, "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return lines


def render_text(report: dict) -> str:
    lines = [
        f"non-zero coefficients: {report['nonzero_count']} of {report['n_features']}",
        f"intercept: {report['intercept']:.6g}",
        "",
    ]
    if "sparsity_by_level" in report:
        lines.append("Nodes with all-zero coefficients (level 0 = leaves)")
        rows = [
            [str(s["level"]), str(s["total_nodes"]), str(s["all_zero_nodes"])]
            for s in report["sparsity_by_level"]
        ]
        lines += _table(["level", "nodes", "all_zero"], rows)
        lines.append("")
    lines.append(f"Top {len(report['top_coefficients'])} coefficients by magnitude")
    rows = [
        [str(e["column"]), f"{e['coefficient']:+.6f}", e["group"], e["name"]]
        for e in report["top_coefficients"]
    ]
    lines += _table(["column", "coef", "group", "name"], rows)
    return "\n".join(lines) + "\n"


def render_summary_table(summaries) -> str:
    """Plain-text comparison table: one row per penalty kind."""
    rows = []
    for s in summaries:
        auc_txt = "n/a" if s.auc_mean is None else f"{s.auc_mean:.4f}"
        rows.append([s.kind, f"{s.f1_mean:.4f}", f"{s.f1_std:.4f}", auc_txt, f"{s.chosen_lambda:.6g}"])
    return "\n".join(_table(["penalty", "F1 mean", "F1 std", "AUC", "lambda"], rows)) + "\n"

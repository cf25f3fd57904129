"""Command-line interface.

Subcommands: ``train``, ``experiment``, ``cohort``, ``synth`` and ``report``.
Exit status is 0 on success, 1 on usage or validation errors and 2 on
numerical failure inside the solver.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    SplitSpec,
    SynthConfig,
    filter_cohort,
    infer_n_cols,
    load_dataset,
    serialize_dataset,
    synth_generate,
)
from .experiment import PenaltyFactory, repeated_splits
from .hierarchy import (
    HierarchyTree,
    balanced_tree,
    read_hierarchy,
    serialize_hierarchy,
    top_level_groups,
    tree_groups,
)
from .regularizer import KINDS, RegularizerSpec
from .report import build_report, render_json, render_summary_table, render_text
from .solver import SolverConfig, SolverError, fit

MODEL_HEADER = "# hiersparse model v1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- model file ----------------------------------------------------------


def format_model(beta: np.ndarray, manifest: dict) -> str:
    lines = [
        MODEL_HEADER,
        "# manifest " + json.dumps(manifest, sort_keys=True),
        f"n_features {beta.shape[0] - 1}",
        f"intercept {float(beta[0])!r}",
    ]
    for j in np.flatnonzero(beta[1:]):
        lines.append(f"{int(j)} {float(beta[j + 1])!r}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> tuple[np.ndarray, dict]:
    manifest: dict = {}
    n_features = None
    intercept = 0.0
    entries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# manifest "):
            manifest = json.loads(line[len("# manifest "):])
            continue
        if line.startswith("#"):
            continue
        key, value = line.split()
        if key == "n_features":
            n_features = int(value)
        elif key == "intercept":
            intercept = float(value)
        else:
            entries.append((int(key), float(value)))
    if n_features is None:
        raise ValueError("model file lacks an n_features line")
    beta = np.zeros(n_features + 1)
    beta[0] = intercept
    for j, v in entries:
        if not 0 <= j < n_features:
            raise ValueError(f"model coefficient index {j} out of range")
        beta[j + 1] = v
    return beta, manifest


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- shared wiring -------------------------------------------------------


def _csv(text: str, cast=str) -> list:
    return [cast(t) for t in text.split(",") if t.strip()]


def _load_inputs(args) -> tuple[Dataset, HierarchyTree | None]:
    tree = read_hierarchy(args.hierarchy) if args.hierarchy else None
    with open(args.data, encoding="utf-8") as fh:
        text = fh.read()
    n_cols = infer_n_cols(text)
    if tree is not None:
        n_cols = max(n_cols, tree.n_leaves + 1)
    if args.n_features is not None:
        n_cols = args.n_features + 1
    return load_dataset(text, n_cols), tree


def _factory(kind: str, args, tree: HierarchyTree | None, n_features: int) -> PenaltyFactory:
    weights = "sqrt_size" if args.weights == "sqrt" else "unit"
    if kind in ("sgl", "tsgl"):
        if tree is None:
            raise UsageError(f"--hierarchy is required for --penalty {kind}")
        if n_features < tree.n_leaves:
            raise UsageError("data has fewer features than the hierarchy has leaves")
        extra = range(tree.n_leaves, n_features)
        groups = top_level_groups(tree, extra) if kind == "sgl" else tree_groups(tree, extra)
        return PenaltyFactory(kind, tuple(groups), args.tree_norm, weights)
    return PenaltyFactory(kind, (), args.tree_norm, weights)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(max_iters=args.max_iters, tol=args.tol, seed=args.seed)


def _manifest(args, command: str, **extra) -> dict:
    m = {
        "command": command,
        "version": __version__,
        "seed": args.seed,
        "inputs": {"data": args.data, "hierarchy": args.hierarchy},
        "solver": asdict(_solver_config(args)),
    }
    m.update(extra)
    return m


# -- commands ------------------------------------------------------------


def cmd_train(args) -> int:
    if args.penalty in ("sgl", "tsgl") and not args.hierarchy:
        raise UsageError(f"--hierarchy is required for --penalty {args.penalty}")
    ds, tree = _load_inputs(args)
    factory = _factory(args.penalty, args, tree, ds.n_features)
    spec: RegularizerSpec = factory(args.lam, args.alpha)
    cfg = _solver_config(args)
    res = fit(ds, spec, cfg)
    manifest = _manifest(
        args,
        "train",
        penalty={
            "kind": spec.kind,
            "lambda": spec.lam,
            "alpha": spec.alpha,
            "tree_norm": spec.tree_norm,
            "weights": args.weights,
        },
    )
    _write(args.out, format_model(res.beta, manifest))
    trace = res.objective_trace
    print(
        f"iterations={res.iterations} converged={res.converged} "
        f"objective_start={trace[0]:.6f} objective_final={trace[-1]:.6f} "
        f"nonzero_count={res.nonzero_count}",
        file=sys.stdout if args.out not in (None, "-") else sys.stderr,
    )
    return 0


def _experiment(args, ds: Dataset, tree, command: str, extra_manifest: dict | None = None) -> int:
    kinds = _csv(args.penalty)
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise UsageError(f"--penalty must list kinds from {KINDS}, got {args.penalty!r}")
    for k in kinds:
        if k in ("sgl", "tsgl") and tree is None:
            raise UsageError(f"--hierarchy is required for --penalty {k}")
    cfg = _solver_config(args)
    split = SplitSpec(args.train_frac, args.seed, args.stratified)
    lambdas = _csv(args.lambdas, float) if args.lambdas else None
    alphas = _csv(args.alphas, float)
    summaries = []
    for kind in kinds:
        factory = _factory(kind, args, tree, ds.n_features)
        summaries.append(
            repeated_splits(
                ds, factory, cfg, repeats=args.repeats, split=split, lambdas=lambdas,
                alphas=alphas, n_folds=args.folds, threshold=args.threshold,
                n_lambdas=args.n_lambdas, lambda_ratio=args.lambda_ratio, jobs=args.jobs,
            )
        )
    manifest = _manifest(
        args, command,
        protocol={
            "repeats": args.repeats, "train_fraction": args.train_frac,
            "stratified": args.stratified, "folds": args.folds, "threshold": args.threshold,
            "lambdas": lambdas, "n_lambdas": args.n_lambdas, "lambda_ratio": args.lambda_ratio,
            "alphas": alphas, "tree_norm": args.tree_norm, "weights": args.weights,
        },
        n_rows=ds.n_rows,
        **(extra_manifest or {}),
    )
    doc = {"manifest": manifest, "summaries": [s.to_dict() for s in summaries]}
    if args.out:
        _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(render_summary_table(summaries))
    return 0


def cmd_experiment(args) -> int:
    ds, tree = _load_inputs(args)
    return _experiment(args, ds, tree, "experiment")


def cmd_cohort(args) -> int:
    ds, tree = _load_inputs(args)
    if args.cohort_node:
        if tree is None:
            raise UsageError("--cohort-node needs --hierarchy")
        columns = list(tree.descendant_columns(args.cohort_node))
    elif args.cohort_columns:
        columns = _csv(args.cohort_columns, int)
    else:
        raise UsageError("give --cohort-columns or --cohort-node")
    cohort = filter_cohort(ds, columns)
    if cohort.n_rows == 0:
        raise UsageError("cohort is empty: 0 rows match")
    print(f"cohort rows: {cohort.n_rows} of {ds.n_rows}", file=sys.stderr)
    extra = {"cohort": {"columns": columns, "node": args.cohort_node, "rows": cohort.n_rows}}
    return _experiment(args, cohort, tree, "cohort", extra)


def cmd_synth(args) -> int:
    if args.hierarchy:
        tree = read_hierarchy(args.hierarchy)
    else:
        tree = balanced_tree(_csv(args.branching, int))
    if args.active:
        active = _csv(args.active)
    else:
        candidates = sorted(n.id for n in tree.nodes if tree.level(n.id) == args.active_level)
        if len(candidates) < args.n_active:
            raise UsageError(f"only {len(candidates)} nodes at level {args.active_level}")
        # Spread the picks evenly over the candidates.
        step = len(candidates) / args.n_active
        active = [candidates[int(i * step)] for i in range(args.n_active)]
    cfg = SynthConfig(
        tree, tuple(active), coef_magnitude=args.coef, row_density=args.density,
        n_rows=args.rows, intercept_true=args.intercept, label_noise=args.noise, seed=args.seed,
    )
    ds, beta = synth_generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": "synth", "version": __version__, "seed": args.seed,
        "active_subtrees": list(active), "coef_magnitude": args.coef, "row_density": args.density,
        "n_rows": args.rows, "intercept_true": args.intercept, "label_noise": args.noise,
    }
    _write(str(out / "data.txt"), serialize_dataset(ds))
    _write(str(out / "hierarchy.tsv"), serialize_hierarchy(tree))
    _write(str(out / "true_beta.txt"), format_model(beta, manifest))
    print(f"wrote {ds.n_rows} rows, {tree.n_leaves} features to {out}")
    return 0


def cmd_report(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        beta, _ = parse_model(fh.read())
    tree = read_hierarchy(args.hierarchy) if args.hierarchy else None
    report = build_report(beta, tree, None, args.top_k)
    text = render_json(report) if args.format == "json" else render_text(report)
    _write(args.out, text)
    return 0


# -- parser --------------------------------------------------------------


def _add_inputs(p) -> None:
    p.add_argument("--data", required=True, help="dataset file (label col:val ...)")
    p.add_argument("--hierarchy", help="hierarchy file (id<TAB>parent<TAB>label)")
    p.add_argument("--n-features", type=int, help="feature count (default: inferred)")


def _add_penalty(p, multi: bool) -> None:
    if multi:
        p.add_argument("--penalty", default="l1,sgl,tsgl",
                       help="comma-separated kinds from " + ",".join(KINDS))
    else:
        p.add_argument("--penalty", choices=KINDS, required=True)
    p.add_argument("--alpha", type=float, default=0.5, help="sgl l1/group mix")
    p.add_argument("--tree-norm", choices=("group_l2", "group_l1"), default="group_l2")
    p.add_argument("--weights", choices=("unit", "sqrt"), default="unit")


def _add_solver(p) -> None:
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)


def _add_protocol(p) -> None:
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--train-frac", type=float, default=0.6)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lambdas", help="comma-separated lambda grid (absolute values)")
    p.add_argument("--n-lambdas", type=int, default=20)
    p.add_argument("--lambda-ratio", type=float, default=1e-3)
    p.add_argument("--alphas", default="0.5", help="comma-separated alpha grid (sgl)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=int(os.environ.get("HIERSPARSE_JOBS", "1")))
    p.add_argument("--out", help="write the JSON summary here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiersparse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hiersparse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit one model")
    _add_inputs(p)
    _add_penalty(p, multi=False)
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="absolute regularization strength (the loss is a sum over rows)")
    _add_solver(p)
    p.add_argument("--out", required=True, help="model file path ('-' for stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="repeated random splits with CV over lambda")
    _add_inputs(p)
    _add_penalty(p, multi=True)
    _add_solver(p)
    _add_protocol(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("cohort", help="experiment on rows having any of the given codes")
    _add_inputs(p)
    _add_penalty(p, multi=True)
    _add_solver(p)
    _add_protocol(p)
    p.add_argument("--cohort-columns", help="comma-separated feature indices")
    p.add_argument("--cohort-node", help="hierarchy node id (expands to its leaves)")
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("synth", help="generate tree-aligned synthetic data")
    p.add_argument("--hierarchy", help="use this hierarchy instead of a balanced tree")
    p.add_argument("--branching", default="4,2,8", help="fan-out per depth for a balanced tree")
    p.add_argument("--active", help="comma-separated active subtree node ids")
    p.add_argument("--active-level", type=int, default=1)
    p.add_argument("--n-active", type=int, default=2)
    p.add_argument("--coef", type=float, default=1.0)
    p.add_argument("--density", type=float, default=8.0)
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--intercept", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="sparsity and top coefficients of a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--hierarchy")
    p.add_argument("--top-k", type=int, default=40)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"hiersparse: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"hiersparse: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

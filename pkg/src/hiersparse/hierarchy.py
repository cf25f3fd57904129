"""Feature taxonomy: parsing, validation and group construction.

A hierarchy file is a flat, tab-separated edge list::

    # id<TAB>parent_id<TAB>label[<TAB>code]
    R	-	All diagnoses
    A	R	Infectious and parasitic
    B	R	Neoplasms

The root carries ``-`` as its parent. Leaves are assigned consecutive feature
columns ``0, 1, ...`` in the order they appear in the file. Feature columns do
not include the intercept; the model's coefficient vector stores the intercept
at index 0 and feature ``j`` at index ``j + 1``.

Levels are computed from structure (height): leaves are level 0 and an
internal node sits one level above its highest child.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

ROOT_MARKER = "-"


class HierarchyError(ValueError):
    """Raised for a malformed or inconsistent hierarchy."""

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(message if node_id is None else f"{message}: {node_id!r}")
        self.node_id = node_id


@dataclass(frozen=True)
class NodeRecord:
    id: str
    parent_id: str | None
    label: str = ""
    code: str | None = None


@dataclass(frozen=True)
class Group:
    """A set of feature columns penalized together.

    ``member_columns`` is a sorted tuple of feature indices (intercept excluded).
    """

    member_columns: tuple[int, ...]
    weight: float = 1.0
    level: int = 0
    node_id: str = ""

    def __post_init__(self):
        if not self.member_columns:
            raise ValueError(f"group {self.node_id!r} has no member columns")
        if not self.weight >= 0:
            raise ValueError(f"group {self.node_id!r} has negative weight {self.weight}")

    @property
    def size(self) -> int:
        return len(self.member_columns)


class HierarchyTree:
    """Immutable, validated feature tree.

    Build one with :func:`parse_hierarchy` or :meth:`from_nodes`; the
    constructor does the validation.
    """

    def __init__(self, nodes: Iterable[NodeRecord]):
        self._nodes = tuple(nodes)
        self._validate()
        self._index()

    @classmethod
    def from_nodes(cls, nodes: Iterable[NodeRecord]) -> HierarchyTree:
        return cls(nodes)

    def _validate(self) -> None:
        by_id: dict[str, NodeRecord] = {}
        for node in self._nodes:
            if node.id in by_id:
                raise HierarchyError("duplicate id", node.id)
            if not node.id or node.id == ROOT_MARKER:
                raise HierarchyError("invalid node id", node.id)
            by_id[node.id] = node
        for node in self._nodes:
            if node.parent_id is not None and node.parent_id not in by_id:
                raise HierarchyError("missing parent", node.id)
        # Walk each node up to a root; revisiting a node on the way is a cycle.
        resolved: set[str] = set()
        for node in self._nodes:
            path: list[str] = []
            on_path: set[str] = set()
            cur: str | None = node.id
            while cur is not None and cur not in resolved:
                if cur in on_path:
                    raise HierarchyError("cycle detected", cur)
                on_path.add(cur)
                path.append(cur)
                cur = by_id[cur].parent_id
            resolved.update(path)
        roots = [n.id for n in self._nodes if n.parent_id is None]
        if not roots:
            raise HierarchyError("no root node")
        if len(roots) > 1:
            raise HierarchyError("multiple roots", roots[1])
        self._by_id = by_id
        self._root = roots[0]

    def _index(self) -> None:
        children: dict[str, list[str]] = {n.id: [] for n in self._nodes}
        for node in self._nodes:
            if node.parent_id is not None:
                children[node.parent_id].append(node.id)
        self._children = {k: tuple(v) for k, v in children.items()}

        leaf_map: dict[str, int] = {}
        for node in self._nodes:
            if not self._children[node.id]:
                leaf_map[node.id] = len(leaf_map)
        self._leaf_map = leaf_map
        self._column_leaf = {col: nid for nid, col in leaf_map.items()}

        # Post-order over an explicit stack; trees can be deep enough to hit
        # the recursion limit.
        level: dict[str, int] = {}
        cols: dict[str, tuple[int, ...]] = {}
        stack = [(self._root, False)]
        while stack:
            nid, expanded = stack.pop()
            kids = self._children[nid]
            if not kids:
                level[nid] = 0
                cols[nid] = (leaf_map[nid],)
            elif expanded:
                level[nid] = max(level[k] for k in kids) + 1
                cols[nid] = tuple(sorted(c for k in kids for c in cols[k]))
            else:
                stack.append((nid, True))
                stack.extend((k, False) for k in kids)
        self._level = level
        self._cols = cols

        depth_from_root = {self._root: 0}
        order = [self._root]
        for nid in order:
            for k in self._children[nid]:
                depth_from_root[k] = depth_from_root[nid] + 1
                order.append(k)
        self._depth_from_root = depth_from_root

    # -- basic accessors -------------------------------------------------

    @property
    def nodes(self) -> tuple[NodeRecord, ...]:
        return self._nodes

    @property
    def root(self) -> str:
        return self._root

    @property
    def depth(self) -> int:
        """Level of the root (a single-leaf tree has depth 0)."""
        return self._level[self._root]

    @property
    def leaf_feature_map(self) -> dict[str, int]:
        return dict(self._leaf_map)

    @property
    def n_leaves(self) -> int:
        return len(self._leaf_map)

    def node(self, node_id: str) -> NodeRecord:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise HierarchyError("unknown node", node_id) from None

    def children(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._children[node_id]

    def level(self, node_id: str) -> int:
        self.node(node_id)
        return self._level[node_id]

    def distance_from_root(self, node_id: str) -> int:
        self.node(node_id)
        return self._depth_from_root[node_id]

    def descendant_columns(self, node_id: str) -> tuple[int, ...]:
        """Feature columns of all leaves under ``node_id`` (sorted)."""
        self.node(node_id)
        return self._cols[node_id]

    def is_leaf(self, node_id: str) -> bool:
        return not self.children(node_id)

    def leaf_for_column(self, column: int) -> str:
        try:
            return self._column_leaf[column]
        except KeyError:
            raise HierarchyError("unmapped column", str(column)) from None

    def group(self, node_id: str, weight: float = 1.0) -> Group:
        return Group(self.descendant_columns(node_id), weight, self.level(node_id), node_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HierarchyTree):
            return NotImplemented
        return self._nodes == other._nodes

    def __hash__(self) -> int:
        return hash(self._nodes)

    def __repr__(self) -> str:
        return (
            f"HierarchyTree(root={self._root!r}, nodes={len(self._nodes)}, "
            f"leaves={self.n_leaves}, depth={self.depth})"
        )


# -- file format ---------------------------------------------------------


def parse_hierarchy(text: str) -> HierarchyTree:
    """Parse hierarchy-file content into a validated tree.

    Raises
    ------
    HierarchyError
        On malformed lines, duplicate ids, missing parents, cycles or a
        root count other than one. The offending node id is attached.
    """
    nodes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2 or len(fields) > 4:
            raise HierarchyError(f"line {lineno}: expected id<TAB>parent<TAB>label")
        node_id, parent = fields[0], fields[1]
        label = fields[2] if len(fields) > 2 else ""
        code = fields[3] if len(fields) > 3 and fields[3] else None
        nodes.append(NodeRecord(node_id, None if parent == ROOT_MARKER else parent, label, code))
    if not nodes:
        raise HierarchyError("empty hierarchy")
    return HierarchyTree(nodes)


def serialize_hierarchy(tree: HierarchyTree) -> str:
    lines = []
    for n in tree.nodes:
        fields = [n.id, ROOT_MARKER if n.parent_id is None else n.parent_id, n.label]
        if n.code is not None:
            fields.append(n.code)
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def read_hierarchy(path) -> HierarchyTree:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


def balanced_tree(branching: Sequence[int], prefix: str = "n", root_label: str = "root") -> HierarchyTree:
    """Build a complete tree with the given fan-out per depth.

    ``balanced_tree([4, 2, 8])`` has 4 children under the root, 2 under each
    of those and 8 leaves under each of the 8 level-1 nodes (64 leaves).
    """
    if any(b < 1 for b in branching):
        raise ValueError("branching factors must be >= 1")
    nodes = [NodeRecord(prefix, None, root_label)]
    frontier = [prefix]
    for d, fan in enumerate(branching, start=1):
        nxt = []
        for parent in frontier:
            for i in range(fan):
                nid = f"{parent}.{i}"
                nodes.append(NodeRecord(nid, parent, f"depth{d} {nid}"))
                nxt.append(nid)
        frontier = nxt
    return HierarchyTree(nodes)


# -- group structures ----------------------------------------------------


def _weight(size: int, weight_mode: str) -> float:
    if weight_mode == "unit":
        return 1.0
    if weight_mode in ("sqrt", "sqrt_size"):
        return math.sqrt(size)
    raise ValueError(f"unknown weight mode {weight_mode!r}")


def _make_group(tree: HierarchyTree, node_id: str, weight_mode: str) -> Group:
    cols = tree.descendant_columns(node_id)
    return Group(cols, _weight(len(cols), weight_mode), tree.level(node_id), node_id)


def groups_at_level(tree: HierarchyTree, level: int, weight_mode: str = "unit") -> list[Group]:
    """One group per node at ``level`` (height), ordered by node id."""
    if not 0 <= level <= tree.depth:
        raise ValueError(f"level {level} out of range [0, {tree.depth}]")
    ids = sorted(n.id for n in tree.nodes if tree.level(n.id) == level)
    return [_make_group(tree, nid, weight_mode) for nid in ids]


def _check_extra(tree: HierarchyTree, extra_columns: Iterable[int]) -> tuple[int, ...]:
    extra = tuple(sorted(set(extra_columns)))
    overlap = [c for c in extra if 0 <= c < tree.n_leaves]
    if overlap:
        raise ValueError(f"extra columns overlap tree leaf columns: {overlap}")
    if any(c < 0 for c in extra):
        raise ValueError("extra columns must be non-negative feature indices")
    return extra


def top_level_groups(
    tree: HierarchyTree, extra_columns: Iterable[int] = (), weight_mode: str = "unit"
) -> list[Group]:
    """Disjoint partition used by the sparse group lasso.

    One group per child of the root (the broad categories), in file order,
    plus a single group holding ``extra_columns`` when non-empty (e.g.
    demographics and insurance plan). A root without children yields the
    root itself.
    """
    extra = _check_extra(tree, extra_columns)
    top = tree.children(tree.root) or (tree.root,)
    groups = [_make_group(tree, nid, weight_mode) for nid in top]
    if extra:
        groups.append(Group(extra, _weight(len(extra), weight_mode), 1, "__extra__"))
    return groups


def prox_order(tree: HierarchyTree, weight_mode: str = "unit") -> list[Group]:
    """Every node's group, children strictly before parents.

    Sorted by (level, node id). In a tree two groups are either disjoint or
    nested, and a strict descendant always has a lower level, so subsets
    always precede their supersets.
    """
    ids = sorted((tree.level(n.id), n.id) for n in tree.nodes)
    return [_make_group(tree, nid, weight_mode) for _, nid in ids]


def tree_groups(
    tree: HierarchyTree, extra_columns: Iterable[int] = (), weight_mode: str = "unit"
) -> list[Group]:
    """Full tree-structured group set, including columns outside the tree.

    Extra columns get a singleton group each plus one shared group, i.e. they
    behave like a two-level subtree hanging off the taxonomy.
    """
    extra = _check_extra(tree, extra_columns)
    groups = prox_order(tree, weight_mode)
    if extra:
        singles = [Group((c,), _weight(1, weight_mode), 0, f"__extra__.{c}") for c in extra]
        shared = Group(extra, _weight(len(extra), weight_mode), 1, "__extra__")
        groups = singles + groups + [shared]
    return groups


def ancestor_chain(tree: HierarchyTree, column: int) -> list[str]:
    """Node ids from the root down to the leaf owning ``column``."""
    leaf = tree.leaf_for_column(column)
    chain = [leaf]
    parent = tree.node(leaf).parent_id
    while parent is not None:
        chain.append(parent)
        parent = tree.node(parent).parent_id
    return chain[::-1]

"""Explicit finite horocyclic products of two leveled trees.

A product vertex pairs a left-factor vertex at own level ``-l`` with a
right-factor vertex at level ``l``; ``l`` is the product level.  Two product
vertices are adjacent iff both coordinates are adjacent in their factors, so
every edge joins levels ``l`` and ``l + 1``: going up moves the right
coordinate to a child and the left coordinate to its parent.
"""

from __future__ import annotations

import csv
import random
import io
import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .errors import EmptyOverlapError, ParameterError, ResourceLimitError, UnknownVertexError
from .leveled_tree import (
    DEFAULT_VERTEX_CAP,
    Address,
    BitSource,
    LeveledTree,
    TreeParams,
    sample_window_tree,
)


@dataclass(frozen=True)
class HoroVertex:
    left: Address
    right: Address
    level: int


def format_address(addr: Address) -> str:
    return "/" + "/".join(map(str, addr))


class HoroGraph:
    """Immutable product graph with integer vertex ids.

    Ids are assigned level by level (ascending), and within a level in
    lexicographic order of (left address, right address).
    """

    def __init__(self, left: LeveledTree, right: LeveledTree, vertices, adjacency, remanent, root):
        self.left = left
        self.right = right
        self.vertices: tuple[HoroVertex, ...] = tuple(vertices)
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(tuple(a) for a in adjacency)
        self.remanent: dict[tuple[int, int], bool] = remanent
        self.root: int = root
        self.index = {(v.left, v.right): i for i, v in enumerate(self.vertices)}

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"HoroGraph(vertices={len(self)}, edges={self.edge_count}, levels={self.level_range})"

    @property
    def edge_count(self) -> int:
        return len(self.remanent)

    @property
    def level_range(self) -> tuple[int, int]:
        return self.vertices[0].level, self.vertices[-1].level

    def id_of(self, v: HoroVertex | tuple | int) -> int:
        if isinstance(v, int):
            if not 0 <= v < len(self.vertices):
                raise UnknownVertexError(v)
            return v
        key = (tuple(v.left), tuple(v.right)) if isinstance(v, HoroVertex) else tuple(map(tuple, v))
        try:
            return self.index[key]
        except KeyError:
            raise UnknownVertexError(v) from None

    def level(self, v: int) -> int:
        return self.vertices[v].level

    def neighbors(self, v) -> tuple[int, ...]:
        return self.adjacency[self.id_of(v)]

    def is_remanent(self, u: int, v: int) -> bool:
        return self.remanent[(min(u, v), max(u, v))]

    def edges(self) -> Iterable[tuple[int, int]]:
        return iter(sorted(self.remanent))

    @cached_property
    def _by_level(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, v in enumerate(self.vertices):
            out.setdefault(v.level, []).append(i)
        return out

    def ids_at(self, level: int) -> list[int]:
        return list(self._by_level.get(level, ()))

    def without_percolative(self) -> "HoroGraph":
        """Same vertex set, keeping only remanent edges."""
        keep = {e: True for e, r in self.remanent.items() if r}
        adj = [[w for w in nbrs if keep.get((min(v, w), max(v, w)))] for v, nbrs in enumerate(self.adjacency)]
        g = HoroGraph.__new__(HoroGraph)
        g.left, g.right, g.vertices, g.root, g.index = self.left, self.right, self.vertices, self.root, self.index
        g.adjacency = tuple(tuple(a) for a in adj)
        g.remanent = keep
        return g

    # export ----------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "left_path", "right_path", "neighbor_left_path", "neighbor_right_path", "edge_kind"])
        for a, b in self.edges():
            va, vb = self.vertices[a], self.vertices[b]
            kind = "remanent" if self.remanent[(a, b)] else "percolative"
            w.writerow([va.level, format_address(va.left), format_address(va.right),
                        format_address(vb.left), format_address(vb.right), kind])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "vertices": [
                {"id": i, "level": v.level, "left": format_address(v.left), "right": format_address(v.right)}
                for i, v in enumerate(self.vertices)
            ],
            "adjacency": [list(a) for a in self.adjacency],
            "edges": [[a, b, "remanent" if r else "percolative"] for (a, b), r in sorted(self.remanent.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)


def build_product(left: LeveledTree, right: LeveledTree, cap: int = DEFAULT_VERTEX_CAP) -> HoroGraph:
    """Horocyclic product of two leveled trees (or forests)."""
    lo = max(right.root_level, -left.top_level)
    hi = min(right.top_level, -left.root_level)
    vertices: list[HoroVertex] = []
    for lvl in range(lo, hi + 1):
        ls, rs = left.vertices_at(-lvl), right.vertices_at(lvl)
        if len(vertices) + len(ls) * len(rs) > cap:
            raise ResourceLimitError("vertex cap", cap, len(vertices) + len(ls) * len(rs))
        vertices.extend(HoroVertex(a, b, lvl) for a in ls for b in rs)
    if not vertices:
        raise EmptyOverlapError(
            f"no product level: right spans [{right.root_level}, {right.top_level}], "
            f"left spans [{left.root_level}, {left.top_level}]"
        )
    index = {(v.left, v.right): i for i, v in enumerate(vertices)}
    adjacency: list[list[int]] = [[] for _ in vertices]
    remanent: dict[tuple[int, int], bool] = {}
    for i, v in enumerate(vertices):
        lp = left.parent(v.left)
        if lp is None:
            continue
        left_marked = left.is_marked(v.left)
        for c in right.children(v.right):
            j = index.get((lp, c))
            if j is None:
                continue
            adjacency[i].append(j)
            adjacency[j].append(i)
            remanent[(i, j)] = not (left_marked or right.is_marked(c))

    zero = [i for i, v in enumerate(vertices) if v.level == 0]
    root = zero[0] if zero else 0
    return HoroGraph(left, right, vertices, [sorted(a) for a in adjacency], remanent, root)


def build_dl_window(alpha_left: int, alpha_right: int, h: int, cap: int = DEFAULT_VERTEX_CAP) -> HoroGraph:
    """Deterministic window with ``|level| <= h`` in both factors."""
    if h < 0 or alpha_left < 1 or alpha_right < 1:
        raise ParameterError("need h >= 0 and alphas >= 1")
    bits = BitSource(0)
    left = sample_window_tree(TreeParams.regular(alpha_left), -h, 2 * h, bits, cap)
    right = sample_window_tree(TreeParams.regular(alpha_right), -h, 2 * h, bits, cap)
    return build_product(left, right, cap)


def degree(graph: HoroGraph, v) -> int:
    return len(graph.neighbors(v))


def connected_component(graph: HoroGraph, start) -> frozenset[int]:
    start = graph.id_of(start)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in graph.adjacency[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return frozenset(seen)


def components(graph: HoroGraph) -> list[frozenset[int]]:
    """All connected components, ordered by smallest vertex id."""
    out = []
    unseen = set(range(len(graph)))
    for v in range(len(graph)):
        if v in unseen:
            c = connected_component(graph, v)
            unseen -= c
            out.append(c)
    return out


@dataclass(frozen=True)
class UnionReport:
    components_part1: int
    components_part2: int
    components_disjoint: int
    components_bridged: int | None

    @property
    def ok(self) -> bool:
        split = self.components_disjoint == self.components_part1 + self.components_part2
        joined = self.components_bridged in (None, 1)
        return split and joined

    def to_dict(self) -> dict:
        return {
            "components_part1": self.components_part1,
            "components_part2": self.components_part2,
            "components_disjoint": self.components_disjoint,
            "components_bridged": self.components_bridged,
            "ok": self.ok,
        }


def union_product_check(
    left: LeveledTree,
    part1: LeveledTree,
    part2: LeveledTree,
    bridge: tuple[Address, Address] | None = None,
) -> UnionReport:
    """Compare components of ``left o (part1 + part2)`` with those of the parts.

    With a bridging factor edge the product over the joined tree is also
    built; its component count is reported (expected 1 when each part's
    product is connected).
    """
    forest = LeveledTree.disjoint_union(part1, part2)

    def count(tree):
        try:
            return len(components(build_product(left, tree)))
        except EmptyOverlapError:
            return 0

    joined = None
    if bridge is not None:
        joined = count(LeveledTree.disjoint_union(part1, part2, bridge))
    return UnionReport(count(part1), count(part2), count(forest), joined)


def random_split_instance(rng: random.Random, seed: int, index: int):
    """Random (left, part1, part2, bridge) with each part's product connected.

    The right window is split at a vertex whose parent keeps another child;
    ``part2`` is the split-off subtree and ``bridge`` the removed factor edge.
    """
    choices = [(1, 2, 0.5), (2, 3, 0.5), (1, 3, 0.3), (2, 2, 1.0), (2, 4, 0.7)]
    lp = TreeParams(*rng.choice(choices))
    rp = TreeParams(*rng.choice([c for c in choices if c[0] >= 2]))
    height = rng.randint(1, 3)
    right = sample_window_tree(rp, 0, height, BitSource(seed, 1, index))
    left = sample_window_tree(lp, -height, height, BitSource(seed, 0, index))
    cuts = [v for v in right if v and len(right.children(v[:-1])) >= 2]
    c = rng.choice(cuts)
    return left, right.without(c), right.subtree(c), (c[:-1], c)

"""Finite windows of percolation subtrees of regular trees with a fixed end.

A vertex is identified by its address: the tuple of child indices
``(k_1, ..., k_l)`` leading to it from the sampling origin, each index in
``1..alpha_max``.  The origin sits at Busemann level ``origin_level``, so a
vertex's level is ``origin_level + len(address)``.  Parents lie one level
below their children (toward the fixed end).

Children ``1..alpha_min`` of every vertex are unmarked and always present.
A marked child is kept iff its edge is open, and openness is a pure function
of ``(seed, tag, stream, address)`` supplied by :class:`BitSource`.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import (
    EnumerationBudgetError,
    ParameterError,
    ResourceLimitError,
    UnknownVertexError,
)

Address = tuple[int, ...]

DEFAULT_VERTEX_CAP = 10**7
DEFAULT_ENUMERATION_CAP = 10**6
_U64 = 2**64


@dataclass(frozen=True)
class TreeParams:
    """Offspring parameters of one tree factor.

    ``alpha_min`` children are unmarked, the remaining
    ``alpha_max - alpha_min`` are each retained with probability ``retention``.
    """

    alpha_min: int
    alpha_max: int
    retention: float | Fraction

    def __post_init__(self):
        if not (isinstance(self.alpha_min, int) and isinstance(self.alpha_max, int)):
            raise ParameterError("alpha_min and alpha_max must be integers")
        if self.alpha_max < 1:
            raise ParameterError(f"alpha_max must be >= 1, got {self.alpha_max}")
        if not 0 <= self.alpha_min <= self.alpha_max:
            raise ParameterError(
                f"need 0 <= alpha_min <= alpha_max, got {self.alpha_min}, {self.alpha_max}"
            )
        if self.alpha_max > 0xFFFF:
            raise ParameterError("alpha_max must fit in 16 bits")
        if not 0 <= self.retention <= 1:
            raise ParameterError(f"retention must lie in [0, 1], got {self.retention}")

    @classmethod
    def parse(cls, text: str) -> "TreeParams":
        """Parse ``"alpha_min,alpha_max,p"`` (``p`` may be omitted when fixed)."""
        parts = [s.strip() for s in text.split(",")]
        if len(parts) == 2:
            parts.append("1")
        if len(parts) != 3:
            raise ParameterError(f"expected 'alpha_min,alpha_max,p', got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ParameterError(f"malformed tree parameters {text!r}: {exc}") from None

    @classmethod
    def regular(cls, beta: int) -> "TreeParams":
        """Deterministic ``beta``-ary tree (no marked children)."""
        return cls(beta, beta, 1.0)

    @property
    def deterministic(self) -> bool:
        return self.alpha_min == self.alpha_max or self.retention in (0, 1)

    def as_text(self) -> str:
        return f"{self.alpha_min},{self.alpha_max},{float(self.retention):g}"


def offspring_pmf(params: TreeParams, k: int) -> float:
    """Probability that a vertex has exactly ``k`` children."""
    a0, a, p = params.alpha_min, params.alpha_max, params.retention
    if not a0 <= k <= a:
        return 0.0
    n, m = a - a0, k - a0
    return float(math.comb(n, m) * p**m * (1 - p) ** (n - m))


def mean_offspring(params: TreeParams) -> float:
    return params.alpha_min + params.retention * (params.alpha_max - params.alpha_min)


@dataclass(frozen=True)
class BitSource:
    """Counter-based source of edge randomness.

    ``uniform(addr)`` hashes ``(master_seed, tree_tag, stream, addr)`` with
    BLAKE2b and maps the digest to a float in [0, 1).  Thresholding the same
    uniform at different retention values couples the percolations
    monotonically.  ``stream`` separates independent trials.
    """

    master_seed: int
    tree_tag: int = 0
    stream: int = 0
    _prefix: "hashlib._Hash" = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.master_seed < _U64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        h = hashlib.blake2b(digest_size=8, person=b"horolab.bits")
        h.update(struct.pack("<Qqq", self.master_seed, self.tree_tag, self.stream))
        object.__setattr__(self, "_prefix", h)

    def with_stream(self, stream: int) -> "BitSource":
        return BitSource(self.master_seed, self.tree_tag, stream)

    def uniform(self, addr: Sequence[int]) -> float:
        h = self._prefix.copy()
        h.update(struct.pack(f"<I{len(addr)}H", len(addr), *addr))
        return (int.from_bytes(h.digest(), "little") >> 11) * 2.0**-53

    def bit(self, addr: Sequence[int], p: float | Fraction) -> bool:
        """Bernoulli(``p``) bit attached to ``addr``."""
        return self.uniform(addr) < p


def edge_open(bits: BitSource, params: TreeParams, addr: Sequence[int]) -> bool:
    """Whether the edge above ``addr`` is present in the percolated tree."""
    if not addr:
        raise ParameterError("an edge address has length >= 1")
    k = addr[-1]
    if not 1 <= k <= params.alpha_max:
        raise ParameterError(f"child index {k} outside 1..{params.alpha_max}")
    if k <= params.alpha_min:
        return True
    return bits.bit(addr, params.retention)


@dataclass(frozen=True)
class LevelCounts:
    """Number of vertices per Busemann level, starting at ``base_level``."""

    base_level: int
    counts: tuple[int, ...]
    truncated: bool = False

    @property
    def top_level(self) -> int:
        return self.base_level + len(self.counts) - 1

    def __getitem__(self, level: int) -> int:
        i = level - self.base_level
        if not 0 <= i < len(self.counts):
            raise IndexError(f"level {level} outside [{self.base_level}, {self.top_level}]")
        return self.counts[i]

    def __len__(self):
        return len(self.counts)

    def levels(self) -> range:
        return range(self.base_level, self.top_level + 1)

    @property
    def extinct(self) -> bool:
        return self.counts[-1] == 0


class LeveledTree:
    """Immutable finite forest of addressed vertices, organised by level.

    Usually a single window rooted at one apex.  Forests (several apexes)
    arise from :meth:`disjoint_union` and are accepted everywhere a tree is.
    """

    __slots__ = ("params", "origin_level", "roots", "levels", "_level0", "_members", "_children")

    def __init__(
        self,
        params: TreeParams,
        origin_level: int,
        vertices: Iterable[Address],
        roots: Iterable[Address] | None = None,
    ):
        members = set(map(tuple, vertices))
        if not members:
            raise ParameterError("a tree needs at least one vertex")
        for v in members:
            for k in v:
                if not 1 <= k <= params.alpha_max:
                    raise ParameterError(f"address {v} has index outside 1..{params.alpha_max}")
        if roots is None:
            roots = [v for v in members if not v or v[:-1] not in members]
        roots = frozenset(map(tuple, roots))
        if not roots <= members:
            raise ParameterError("roots must be vertices of the tree")
        for v in members - roots:
            if v[:-1] not in members:
                raise ParameterError(f"vertex {v} has no parent in the tree")

        lo = min(len(v) for v in members)
        hi = max(len(v) for v in members)
        by_depth: list[list[Address]] = [[] for _ in range(hi - lo + 1)]
        for v in members:
            by_depth[len(v) - lo].append(v)
        children: dict[Address, list[Address]] = {v: [] for v in members}
        for v in members - roots:
            children[v[:-1]].append(v)

        self.params = params
        self.origin_level = origin_level
        self.roots = tuple(sorted(roots, key=lambda r: (len(r), r)))
        self.levels = tuple(tuple(sorted(vs)) for vs in by_depth)
        self._level0 = origin_level + lo
        self._members = frozenset(members)
        self._children = {v: tuple(sorted(cs)) for v, cs in children.items()}

    @classmethod
    def _from_levels(cls, params, origin_level, levels, roots):
        # trusted fast path used by the sampler; levels are already sorted
        self = cls.__new__(cls)
        members = [v for lvl in levels for v in lvl]
        children: dict[Address, list[Address]] = {v: [] for v in members}
        rootset = frozenset(roots)
        for v in members:
            if v not in rootset:
                children[v[:-1]].append(v)
        self.params = params
        self.origin_level = origin_level
        self.roots = tuple(roots)
        self.levels = tuple(tuple(lvl) for lvl in levels)
        self._level0 = origin_level + len(roots[0])
        self._members = frozenset(members)
        self._children = {v: tuple(cs) for v, cs in children.items()}
        return self

    # basic structure -------------------------------------------------------

    @property
    def root(self) -> Address:
        """The apex (first root for forests)."""
        return self.roots[0]

    @property
    def root_level(self) -> int:
        return self._level0

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    @property
    def top_level(self) -> int:
        return self._level0 + self.height

    def __len__(self):
        return len(self._members)

    def __contains__(self, v) -> bool:
        return tuple(v) in self._members

    def __iter__(self) -> Iterator[Address]:
        for lvl in self.levels:
            yield from lvl

    def __eq__(self, other):
        if not isinstance(other, LeveledTree):
            return NotImplemented
        return (
            self.params == other.params
            and self.origin_level == other.origin_level
            and self.roots == other.roots
            and self.levels == other.levels
        )

    def __hash__(self):
        return hash((self.params, self.origin_level, self.roots, self.levels))

    def __repr__(self):
        return (
            f"LeveledTree(params={self.params.as_text()}, root_level={self.root_level}, "
            f"height={self.height}, vertices={len(self)}, roots={len(self.roots)})"
        )

    def _check(self, v) -> Address:
        v = tuple(v)
        if v not in self._members:
            raise UnknownVertexError(v)
        return v

    def level_of(self, v: Address) -> int:
        return self.origin_level + len(self._check(v))

    def vertices_at(self, level: int) -> tuple[Address, ...]:
        i = level - self._level0
        if 0 <= i < len(self.levels):
            return self.levels[i]
        return ()

    def children(self, v: Address) -> tuple[Address, ...]:
        return self._children[self._check(v)]

    def parent(self, v: Address) -> Address | None:
        v = self._check(v)
        if v in self.roots:
            return None
        return v[:-1]

    def is_marked(self, v: Address) -> bool:
        """Whether the factor edge from ``v`` up to its parent is marked."""
        v = tuple(v)
        return bool(v) and v[-1] > self.params.alpha_min

    def offspring_counts(self) -> list[int]:
        """Offspring count of every vertex strictly below the bottom level."""
        return [len(self._children[v]) for lvl in self.levels[:-1] for v in lvl]

    # derived windows ---------------------------------------------------------

    def truncate(self, height: int) -> "LeveledTree":
        if height < 0:
            raise ParameterError("height must be >= 0")
        if height >= self.height:
            return self
        return LeveledTree._from_levels(
            self.params, self.origin_level, self.levels[: height + 1], self.roots
        )

    def subtree(self, v: Address, max_level: int | None = None) -> "LeveledTree":
        """Descendants of ``v`` (inclusive), optionally cut at ``max_level``."""
        v = self._check(v)
        keep = []
        stack = [v]
        while stack:
            u = stack.pop()
            if max_level is not None and self.origin_level + len(u) > max_level:
                continue
            keep.append(u)
            stack.extend(self._children[u])
        return LeveledTree(self.params, self.origin_level, keep, roots=[v])

    def without(self, v: Address) -> "LeveledTree":
        """The tree with the subtree of ``v`` removed."""
        v = self._check(v)
        drop = set(self.subtree(v))
        rest = self._members - drop
        return LeveledTree(self.params, self.origin_level, rest, roots=set(self.roots) - drop)

    @staticmethod
    def disjoint_union(
        first: "LeveledTree", second: "LeveledTree", bridge: tuple[Address, Address] | None = None
    ) -> "LeveledTree":
        """Forest ``first + second``; with ``bridge=(u, c)`` the factor edge u-c is added.

        ``c`` must be a root of one part and ``u`` its address-parent in the other.
        """
        if first.params != second.params or first.origin_level != second.origin_level:
            raise ParameterError("parts must come from the same tree")
        if first._members & second._members:
            raise ParameterError("parts are not vertex-disjoint")
        roots = set(first.roots) | set(second.roots)
        if bridge is not None:
            u, c = map(tuple, bridge)
            in_first = u in first._members and c in second._members
            in_second = u in second._members and c in first._members
            if not (in_first or in_second):
                raise ParameterError("bridge must join the two parts")
            if c[:-1] != u or c not in roots:
                raise ParameterError("bridge must be a factor edge from a parent to a part root")
            roots.discard(c)
        return LeveledTree(
            first.params, first.origin_level, first._members | second._members, roots=roots
        )

    # serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        index = [{v: i for i, v in enumerate(lvl)} for lvl in self.levels]
        levels = []
        for d, lvl in enumerate(self.levels):
            row = []
            for v in lvl:
                par = -1 if (v in self.roots or d == 0) else index[d - 1][v[:-1]]
                row.append([par, v[-1] if v else 0, int(self.is_marked(v))])
            levels.append(row)
        return {
            "root_level": self.root_level,
            "height": self.height,
            "origin_level": self.origin_level,
            "params": [self.params.alpha_min, self.params.alpha_max, float(self.params.retention)],
            "roots": [list(r) for r in self.roots],
            "levels": levels,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "LeveledTree":
        a0, a, p = data["params"]
        params = TreeParams(int(a0), int(a), p)
        roots = {tuple(r) for r in data["roots"]}
        root_depth = data["root_level"] - data["origin_level"]
        verts: list[Address] = []
        prev: list[Address] = []
        for d, row in enumerate(data["levels"]):
            cur = []
            depth_roots = sorted(r for r in roots if len(r) == root_depth + d)
            it = iter(depth_roots)
            for par, k, _marked in row:
                cur.append(next(it) if par < 0 else prev[par] + (k,))
            verts.extend(cur)
            prev = cur
        return cls(params, data["origin_level"], verts, roots=roots)

    @classmethod
    def from_json(cls, text: str) -> "LeveledTree":
        return cls.from_dict(json.loads(text))


def _grow(params, frontier, steps, bits, total, cap):
    levels = []
    a = params.alpha_max
    for _ in range(steps):
        nxt = []
        for v in frontier:
            for k in range(1, a + 1):
                addr = v + (k,)
                if edge_open(bits, params, addr):
                    nxt.append(addr)
        total += len(nxt)
        if total > cap:
            raise ResourceLimitError("vertex cap", cap, total)
        levels.append(nxt)
        frontier = nxt
    return levels


def sample_window_tree(
    params: TreeParams,
    root_level: int,
    height: int,
    bits: BitSource,
    cap: int = DEFAULT_VERTEX_CAP,
) -> LeveledTree:
    """Breadth-first sample of the percolated subtree below one apex."""
    if height < 0:
        raise ParameterError("height must be >= 0")
    levels = [[()]] + _grow(params, [()], height, bits, 1, cap)
    return LeveledTree._from_levels(params, root_level, levels, [()])


def extend_window(
    tree: LeveledTree, extra: int, bits: BitSource, cap: int = DEFAULT_VERTEX_CAP
) -> LeveledTree:
    """Grow ``tree`` by ``extra`` levels below its bottom, using the same bits."""
    if extra < 0:
        raise ParameterError("extra must be >= 0")
    if extra == 0:
        return tree
    new = _grow(tree.params, list(tree.levels[-1]), extra, bits, len(tree), cap)
    return LeveledTree._from_levels(
        tree.params, tree.origin_level, list(tree.levels) + new, tree.roots
    )


def level_counts(tree: LeveledTree) -> LevelCounts:
    return LevelCounts(tree.root_level, tuple(len(lvl) for lvl in tree.levels))


def leaf_count_formula(
    params: TreeParams,
    bits: BitSource,
    h: int,
    j: int,
    budget: int = DEFAULT_ENUMERATION_CAP,
) -> int:
    """Level-``j`` vertex count of the window rooted at ``-h``, by full enumeration.

    Sums, over every address ``(k_1..k_{h+j})`` of the complete
    ``alpha_max``-ary tree, the product of per-step indicators
    "unmarked, or marked and open".  Shares ``bits`` with the sampler but
    none of its code path.
    """
    n = h + j
    if n < 0:
        raise ParameterError(f"level {j} lies below the window root at {-h}")
    a0, a, p = params.alpha_min, params.alpha_max, params.retention
    if a**n > budget:
        raise EnumerationBudgetError("enumeration budget", budget, a**n)
    total = 0
    for ks in itertools.product(range(1, a + 1), repeat=n):
        term = 1
        for l in range(1, n + 1):
            k = ks[l - 1]
            term *= int(k <= a0) + int(k > a0) * int(bits.bit(ks[:l], p))
            if term == 0:
                break
        total += term
    return total


def is_ancestor(tree: LeveledTree, u: Address, v: Address) -> bool:
    """Strict ancestry ``u < v``: ``u`` lies on the parent path from ``v``."""
    u, v = tree._check(u), tree._check(v)
    if len(u) >= len(v):
        return False
    w = v
    while w != u:
        w = tree.parent(w)
        if w is None or len(w) < len(u):
            return False
    return True

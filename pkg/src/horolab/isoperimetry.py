"""Exact isoperimetric ratios on explicit product graphs and level counts.

Two boundary modes are supported:

``outer``
    vertices outside the set adjacent to some member.
``inner``
    members exposed to the outside, counted once per level direction: a
    member with a non-member neighbour one level up counts once, one with a
    non-member neighbour one level down counts once, and a member exposed
    both ways counts twice.  Away from single-level sets this is exactly
    the number of inner boundary vertices.

All ratios are :class:`fractions.Fraction`.
"""

from __future__ import annotations

import csv
import io
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Literal

from .errors import EmptyOverlapError, EnumerationBudgetError, ParameterError, ZeroVolumeError
from .horoproduct import HoroGraph, build_product, components, connected_component
from .leveled_tree import (
    Address,
    BitSource,
    LevelCounts,
    LeveledTree,
    TreeParams,
    level_counts,
    sample_window_tree,
)

Mode = Literal["outer", "inner"]

MAX_ENUMERATION_SIZE = 12
DEFAULT_SUBSET_BUDGET = 5 * 10**6


@dataclass(frozen=True)
class SubsetSelection:
    host: HoroGraph = field(repr=False)
    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(self.members)
        bad = [v for v in members if not 0 <= v < len(self.host)]
        if bad:
            raise ParameterError(f"vertices {bad[:5]} are not in the host")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)


def select(host: HoroGraph, members: Iterable[int]) -> SubsetSelection:
    return SubsetSelection(host, frozenset(members))


@dataclass(frozen=True)
class IsoReport:
    mode: str
    boundary_count: int
    volume: int
    witness: tuple[int, ...] | None = None

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.boundary_count, self.volume)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "boundary": self.boundary_count,
            "volume": self.volume,
            "ratio_num": self.ratio.numerator,
            "ratio_den": self.ratio.denominator,
        }
        if self.witness is not None:
            d["witness"] = list(self.witness)
        return d


def _members(host: HoroGraph, sel) -> frozenset[int]:
    if isinstance(sel, SubsetSelection):
        return sel.members
    return select(host, sel).members


def outer_boundary(host: HoroGraph, sel) -> frozenset[int]:
    members = _members(host, sel)
    adj = host.adjacency
    return frozenset(w for v in members for w in adj[v] if w not in members)


def inner_boundary(host: HoroGraph, sel) -> frozenset[int]:
    members = _members(host, sel)
    adj = host.adjacency
    return frozenset(v for v in members if any(w not in members for w in adj[v]))


def exposure_count(host: HoroGraph, sel) -> int:
    """Inner boundary counted per level direction (see module docstring)."""
    members = _members(host, sel)
    adj, verts = host.adjacency, host.vertices
    total = 0
    for v in members:
        lvl = verts[v].level
        up = down = False
        for w in adj[v]:
            if w not in members:
                if verts[w].level > lvl:
                    up = True
                else:
                    down = True
        total += up + down
    return total


def iso_ratio(host: HoroGraph, sel, mode: Mode = "outer") -> IsoReport:
    members = _members(host, sel)
    if not members:
        raise ZeroVolumeError("empty selection")
    if mode == "outer":
        b = len(outer_boundary(host, members))
    elif mode == "inner":
        b = exposure_count(host, members)
    else:
        raise ParameterError(f"unknown boundary mode {mode!r}")
    return IsoReport(mode, b, len(members))


# ratios from level counts ----------------------------------------------------


def window_ratio(left_counts: LevelCounts, right_counts: LevelCounts) -> Fraction:
    """Inner-mode ratio of the product of two single-apex windows from counts.

    ``right_counts`` spans product levels ``[n, n+N]`` from its apex; the left
    counts must span own levels ``[-(n+N), -n]``.  Exposed members sit on the
    top product level (``right_counts[n+N]`` of them) and on the bottom one
    (``left_counts[-n]``).
    """
    n, top = right_counts.base_level, right_counts.top_level
    if left_counts.base_level != -top or left_counts.top_level != -n:
        raise ParameterError(
            f"left counts span [{left_counts.base_level}, {left_counts.top_level}], "
            f"need [{-top}, {-n}]"
        )
    volume = 0
    for lvl in range(n, top + 1):
        term = left_counts[-lvl] * right_counts[lvl]
        if term == 0:
            raise ZeroVolumeError(f"paired count vanishes at product level {lvl}")
        volume += term
    return Fraction(right_counts[top] + left_counts[-n], volume)


def folner_ratio(left_counts: LevelCounts, right_counts: LevelCounts, h: int) -> Fraction:
    """``(X'_h + X_h) / sum_{j=-h..h} X'_{-j} X_j`` for windows rooted at ``-h``."""
    for name, c in (("left", left_counts), ("right", right_counts)):
        if c.base_level != -h or c.top_level < h:
            raise ParameterError(f"{name} counts must span levels [{-h}, {h}]")
    cut = lambda c: LevelCounts(-h, c.counts[: 2 * h + 1])  # noqa: E731
    return window_ratio(cut(left_counts), cut(right_counts))


FOLNER_TABLE_COLUMNS = ["h", "X_left_top", "X_right_top", "volume", "ratio_num", "ratio_den"]


def folner_table_csv(entries: Iterable[tuple[int, LevelCounts, LevelCounts]]) -> str:
    """One CSV row per ``(h, left_counts, right_counts)`` window."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FOLNER_TABLE_COLUMNS)
    for h, lc, rc in entries:
        volume = sum(lc[-j] * rc[j] for j in range(-h, h + 1))
        r = folner_ratio(lc, rc, h)
        w.writerow([h, lc[h], rc[h], volume, r.numerator, r.denominator])
    return buf.getvalue()


@dataclass(frozen=True)
class CrosscheckReport:
    h: int
    expected_boundary: int
    exposure: int
    inner_vertices: int
    expected_volume: int
    volume: int

    @property
    def ok(self) -> bool:
        inner_ok = self.h == 0 or self.inner_vertices == self.exposure
        return self.exposure == self.expected_boundary and self.volume == self.expected_volume and inner_ok

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def window_boundary_crosscheck(
    left_params: TreeParams,
    right_params: TreeParams,
    h: int,
    left_bits: BitSource,
    right_bits: BitSource,
) -> CrosscheckReport:
    """Count the exposed members of the ``h``-window inside a larger product.

    Both factors are sampled from apexes at ``-(h+1)`` down to ``h+1``; the
    ``h``-window is the product of the first-child subtrees cut at level
    ``h``.  In the larger product every window vertex has all its neighbours
    present, so the exposure count must equal ``X'_h + X_h`` and the volume
    must equal the level-count sum.
    """
    if h < 0:
        raise ParameterError("h must be >= 0")
    if min(left_params.alpha_min, right_params.alpha_min) < 1:
        raise ParameterError("crosscheck needs alpha_min >= 1 in both factors")
    big_left = sample_window_tree(left_params, -(h + 1), 2 * h + 2, left_bits)
    big_right = sample_window_tree(right_params, -(h + 1), 2 * h + 2, right_bits)
    small_left = big_left.subtree((1,), max_level=h)
    small_right = big_right.subtree((1,), max_level=h)
    xl, xr = level_counts(small_left), level_counts(small_right)
    expected_volume = sum(xl[-j] * xr[j] for j in range(-h, h + 1))

    host = build_product(big_left, big_right)
    lset, rset = set(small_left), set(small_right)
    members = frozenset(i for i, v in enumerate(host.vertices) if v.left in lset and v.right in rset)
    return CrosscheckReport(
        h=h,
        expected_boundary=xl[h] + xr[h],
        exposure=exposure_count(host, members),
        inner_vertices=len(inner_boundary(host, members)),
        expected_volume=expected_volume,
        volume=len(members),
    )


# tetraeder sets -----------------------------------------------------------


def tetraeder_subset(host: HoroGraph, apex_right: Address, apex_left: Address, N: int) -> SubsetSelection:
    """Pairs ``<u', u>`` in the root component with ``apex_right <= u`` and ``apex_left <= u'``.

    The apexes must satisfy ``level'(apex_left) = -(level(apex_right) + N)`` so
    the set spans the ``N + 1`` product levels above ``apex_right``.
    """
    if N < 0:
        raise ParameterError("N must be >= 0")
    apex_right, apex_left = tuple(apex_right), tuple(apex_left)
    if apex_right not in host.right or apex_left not in host.left:
        raise ParameterError("apexes must be vertices of the host factors")
    n = host.right.level_of(apex_right)
    if host.left.level_of(apex_left) != -(n + N):
        raise ParameterError(
            f"left apex at level {host.left.level_of(apex_left)} does not span N={N} "
            f"levels above right apex at level {n}"
        )
    below_right = set(host.right.subtree(apex_right))
    below_left = set(host.left.subtree(apex_left))
    comp = connected_component(host, host.root)
    members = [
        i
        for i, v in enumerate(host.vertices)
        if v.right in below_right and v.left in below_left and i in comp
    ]
    return select(host, members)


def tetraeder_ratio_closed_form(beta: int, N: int) -> Fraction:
    """Inner-mode tetraeder ratio in a ``beta``-regular region, from level counts."""
    right = LevelCounts(0, tuple(beta**d for d in range(N + 1)))
    left = LevelCounts(-N, tuple(beta**d for d in range(N + 1)))
    return window_ratio(left, right)


# anchored constant ---------------------------------------------------------


def connected_subsets(host: HoroGraph, root: int, n_max: int) -> Iterator[frozenset[int]]:
    """Every connected vertex set of size <= ``n_max`` containing ``root``, once each.

    Grows from the root; a candidate popped from the extension list is never
    re-offered to later siblings, and new candidates are limited to
    neighbours not already in or next to the current set.
    """
    adj = host.adjacency

    def grow(current, extension, blocked):
        yield current
        if len(current) == n_max:
            return
        extension = list(extension)
        while extension:
            v = extension.pop()
            fresh = [w for w in adj[v] if w not in blocked]
            yield from grow(current | {v}, extension + fresh, blocked | set(fresh))

    start = frozenset([root])
    yield from grow(start, list(adj[root]), set(adj[root]) | {root})


@dataclass(frozen=True)
class AnchoredResult:
    ratio: Fraction
    witness: tuple[int, ...]
    boundary: int
    enumerated: int

    def to_dict(self) -> dict:
        return {
            "mode": "outer",
            "boundary": self.boundary,
            "volume": len(self.witness),
            "ratio_num": self.ratio.numerator,
            "ratio_den": self.ratio.denominator,
            "witness": list(self.witness),
            "enumerated": self.enumerated,
        }


def anchored_constant_exact(
    host: HoroGraph,
    root: int | None = None,
    n_max: int = 8,
    budget: int = DEFAULT_SUBSET_BUDGET,
    max_size: int = MAX_ENUMERATION_SIZE,
) -> AnchoredResult:
    """Minimum outer ratio over connected sets of size <= ``n_max`` containing ``root``.

    Ties are broken by the lexicographically least sorted member tuple.  The
    host must contain the radius-``n_max`` ball around ``root`` for the
    result to reflect the infinite graph.
    """
    if n_max < 1:
        raise ParameterError("n_max must be >= 1")
    if n_max > max_size:
        raise EnumerationBudgetError("subset size cap", max_size, n_max)
    root = host.root if root is None else host.id_of(root)
    adj = host.adjacency
    best: tuple[Fraction, tuple[int, ...], int] | None = None
    count = 0
    for s in connected_subsets(host, root, n_max):
        count += 1
        if count > budget:
            raise EnumerationBudgetError("enumeration budget", budget, count)
        b = len({w for v in s for w in adj[v] if w not in s})
        r = Fraction(b, len(s))
        if best is None or r < best[0] or (r == best[0] and tuple(sorted(s)) < best[1]):
            best = (r, tuple(sorted(s)), b)
    return AnchoredResult(best[0], best[1], best[2], count)


# edge-removal comparison ---------------------------------------------------


@dataclass(frozen=True)
class SampleCut:
    volume: int
    boundary_full: int
    boundary_reduced: int
    component_sizes: tuple[int, ...]
    component_boundaries: tuple[int, ...]

    @property
    def ratio_full(self) -> Fraction:
        return Fraction(self.boundary_full, self.volume)

    @property
    def ratio_reduced(self) -> Fraction:
        return Fraction(self.boundary_reduced, self.volume)

    @property
    def component_ratios(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(b, s) for b, s in zip(self.component_boundaries, self.component_sizes))

    @property
    def pooled_ratio(self) -> Fraction:
        return Fraction(sum(self.component_boundaries), sum(self.component_sizes))

    @property
    def ok(self) -> bool:
        return (
            self.ratio_full >= self.ratio_reduced
            and sum(self.component_boundaries) >= self.boundary_reduced
            and self.pooled_ratio >= min(self.component_ratios)
        )


@dataclass
class CutReport:
    samples: list[SampleCut]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.samples)

    @property
    def min_component_ratio(self) -> Fraction | None:
        ratios = [r for s in self.samples for r in s.component_ratios]
        return min(ratios) if ratios else None

    def to_dict(self) -> dict:
        m = self.min_component_ratio
        return {
            "samples": len(self.samples),
            "ok": self.ok,
            "min_component_ratio": None if m is None else [m.numerator, m.denominator],
            "failures": sum(not s.ok for s in self.samples),
        }


def _components_within(adj, members) -> list[frozenset[int]]:
    out, unseen = [], set(members)
    while unseen:
        s = min(unseen)
        comp, queue = {s}, deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w in unseen and w not in comp:
                    comp.add(w)
                    queue.append(w)
        unseen -= comp
        out.append(frozenset(comp))
    return out


def cut_lower_bound_check(host: HoroGraph, samples: Iterable) -> CutReport:
    """Compare each sample's ratio in ``H`` with its ratio after deleting percolative edges."""
    reduced = host.without_percolative()
    out = []
    for sel in samples:
        w = _members(host, sel)
        if not w:
            raise ZeroVolumeError("empty sample")
        parts = _components_within(reduced.adjacency, w)
        out.append(
            SampleCut(
                volume=len(w),
                boundary_full=len(outer_boundary(host, w)),
                boundary_reduced=len(outer_boundary(reduced, w)),
                component_sizes=tuple(len(p) for p in parts),
                component_boundaries=tuple(len(outer_boundary(reduced, p)) for p in parts),
            )
        )
    return CutReport(out)


def _remanent_apex(tree: LeveledTree, v: Address) -> Address:
    while not tree.is_marked(v) and tree.parent(v) is not None:
        v = tree.parent(v)
    return v


def _remanent_piece(tree: LeveledTree, apex: Address) -> LeveledTree:
    keep, stack = [], [apex]
    while stack:
        u = stack.pop()
        keep.append(u)
        stack.extend(c for c in tree.children(u) if not tree.is_marked(c))
    return LeveledTree(tree.params, tree.origin_level, keep, roots=[apex])


@lru_cache(maxsize=4096)
def _reference_product(a0_left: int, left_level: int, left_height: int,
                       a0_right: int, right_level: int, right_height: int) -> HoroGraph | None:
    def tree(a0, level, height):
        params = TreeParams.regular(a0) if a0 else TreeParams(0, 1, 0.0)
        return sample_window_tree(params, level, height, BitSource(0))

    try:
        return build_product(tree(a0_left, left_level, left_height), tree(a0_right, right_level, right_height))
    except EmptyOverlapError:
        return None


@dataclass(frozen=True)
class RemanentReport:
    components: int
    isomorphic: int
    sizes: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return self.components == self.isomorphic

    def to_dict(self) -> dict:
        return {"components": self.components, "isomorphic": self.isomorphic, "ok": self.ok}


def check_remanent_components(host: HoroGraph) -> RemanentReport:
    """Certify that every component of ``H`` minus percolative edges is a regular product piece.

    For each component the single remanent apex of each factor is located,
    and an explicit map (relative addresses below the apexes) is checked to
    be an edge-preserving bijection onto the deterministic product of an
    ``alpha_min'``-ary and an ``alpha_min``-ary tree over the same levels.
    """
    reduced = host.without_percolative()
    left, right = host.left, host.right
    a0l, a0r = left.params.alpha_min, right.params.alpha_min
    good = 0
    sizes = []
    for comp in components(reduced):
        sizes.append(len(comp))
        verts = [host.vertices[i] for i in comp]
        lap = {_remanent_apex(left, v.left) for v in verts}
        rap = {_remanent_apex(right, v.right) for v in verts}
        if len(lap) != 1 or len(rap) != 1:
            continue
        la, ra = lap.pop(), rap.pop()
        lpiece, rpiece = _remanent_piece(left, la), _remanent_piece(right, ra)
        ref = _reference_product(a0l, lpiece.root_level, lpiece.height, a0r, rpiece.root_level, rpiece.height)
        if ref is None:
            continue
        phi = {i: (host.vertices[i].left[len(la):], host.vertices[i].right[len(ra):]) for i in comp}
        if sorted(phi.values()) != sorted(ref.index):
            continue
        if len(set(phi.values())) != len(phi):
            continue
        edges = {(min(a, b), max(a, b)) for a in comp for b in reduced.adjacency[a]}
        mapped = {tuple(sorted((ref.index[phi[a]], ref.index[phi[b]]))) for a, b in edges}
        if len(edges) == ref.edge_count and mapped == set(ref.remanent):
            good += 1
    return RemanentReport(len(sizes), good, tuple(sizes))


# random subsets ----------------------------------------------------------


def random_connected_subset(
    host: HoroGraph, size: int, rng: random.Random, allowed: set[int] | None = None, start: int | None = None
) -> frozenset[int]:
    """Grow a connected set by repeatedly adding a uniform frontier vertex."""
    pool = allowed if allowed is not None else set(range(len(host)))
    if start is None:
        start = rng.choice(sorted(pool))
    current = {start}
    frontier = sorted(w for w in host.adjacency[start] if w in pool)
    while len(current) < size and frontier:
        v = frontier.pop(rng.randrange(len(frontier)))
        if v in current:
            continue
        current.add(v)
        frontier.extend(w for w in host.adjacency[v] if w in pool and w not in current)
    return frozenset(current)


def bfs_ball(host: HoroGraph, center: int, radius: int, allowed: set[int] | None = None) -> frozenset[int]:
    dist = {center: 0}
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for w in host.adjacency[u]:
            if w not in dist and (allowed is None or w in allowed):
                dist[w] = dist[u] + 1
                queue.append(w)
    return frozenset(dist)


# cut experiment -------------------------------------------------------------


@dataclass
class CutExperiment:
    clusters: int
    cut: CutReport
    remanent: list[RemanentReport]

    @property
    def ok(self) -> bool:
        return self.cut.ok and all(r.ok for r in self.remanent)

    def to_dict(self) -> dict:
        return {
            "clusters": self.clusters,
            "cut": self.cut.to_dict(),
            "remanent_components": sum(r.components for r in self.remanent),
            "remanent_isomorphic": sum(r.isomorphic for r in self.remanent),
            "ok": self.ok,
        }


def sample_cluster(left: TreeParams, right: TreeParams, h: int, seed: int, index: int) -> tuple[HoroGraph, set[int]]:
    """Product of two windows spanning ``[-(h+1), h+1]`` and its interior.

    Interior vertices (product levels ``-h..h``) have every neighbour of the
    infinite product inside the host.
    """
    lt = sample_window_tree(left, -(h + 1), 2 * h + 2, BitSource(seed, 0, index))
    rt = sample_window_tree(right, -(h + 1), 2 * h + 2, BitSource(seed, 1, index))
    host = build_product(lt, rt)
    interior = {i for i, v in enumerate(host.vertices) if -h <= v.level <= h}
    return host, interior


def run_cut_experiment(
    left: TreeParams,
    right: TreeParams,
    h: int,
    clusters: int,
    subsets: int,
    seed: int,
    max_size: int = 40,
) -> CutExperiment:
    """Edge-removal comparison on random clusters and random connected subsets."""
    rng = random.Random(seed)
    samples, remanent = [], []
    for c in range(clusters):
        host, interior = sample_cluster(left, right, h, seed, c)
        remanent.append(check_remanent_components(host))
        picks = []
        pool = sorted(interior)
        for s in range(subsets):
            start = rng.choice(pool)
            if s % 5 == 4:
                picks.append(bfs_ball(host, start, rng.randint(1, 3), interior))
            else:
                picks.append(random_connected_subset(host, rng.randint(2, max_size), rng, interior, start))
        samples.extend(cut_lower_bound_check(host, picks).samples)
    return CutExperiment(clusters, CutReport(samples), remanent)

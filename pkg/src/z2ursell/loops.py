"""Loop constructions, partition combinatorics for the factorised Ursell function,
and exhaustive two-loop decomposition search.

Decompositions are taken at the level of edge supports: a part is valid when its
edges meet every vertex an even number of times and are connected. Orientation
plays no role for Z2 spins.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from . import gf2
from .dec import (
    BoxGeometry,
    Chain,
    KCell,
    LoopChain,
    SurfaceChain,
    boundary_chain,
    edge,
    edge_support_connected,
    plaquette,
)
from .errors import CapacityError, DegenerateInputError, DomainError
from .ursell import MomentProvider, SetPartition, partition_weight, partitions

MAX_DECOMPOSE_LEN = 24
MAX_SEARCH_LEN = 16


def rectangle_surface(anchor: Sequence[int], L1: int, L2: int, dirs: tuple[int, int] = (0, 1)) -> SurfaceChain:
    """Flat L1 x L2 surface spanned by directions dirs[0], dirs[1] from the anchor vertex."""
    if L1 < 1 or L2 < 1:
        raise DomainError("rectangle sides must be positive")
    a, b = dirs
    cells = []
    for i in range(L1):
        for j in range(L2):
            x = list(anchor)
            x[a] += i
            x[b] += j
            cells.append(plaquette(x, a, b))
    return SurfaceChain(Chain.from_cells(2, cells))


@dataclass(frozen=True)
class StackedLoopFamily:
    anchor: tuple[int, ...]
    L1: int
    L2: int
    n: int
    surfaces: tuple[SurfaceChain, ...] = field(repr=False)
    loops: tuple[LoopChain, ...] = field(repr=False)

    @property
    def loop_length(self) -> int:
        return 2 * (self.L1 + self.L2)


def build_stacked_family(x: Sequence[int], L1: int, L2: int, n: int, box: BoxGeometry) -> StackedLoopFamily:
    """n copies of the L1 x L2 rectangle in the (0, 1) plane, each shifted one unit along axis 2."""
    if box.m < 3:
        raise DomainError("stacking needs a third direction")
    if n < 1:
        raise DomainError("need at least one loop")
    q1 = rectangle_surface(x, L1, L2)
    surfaces = []
    for i in range(n):
        off = [0] * box.m
        off[2] = i
        q = SurfaceChain(q1.translate(off))
        for cell in q.coeffs:
            if not box.contains(cell):
                raise DomainError(f"stacked loop {i} leaves the box")
        surfaces.append(q)
    loops = tuple(q.loop for q in surfaces)
    return StackedLoopFamily(tuple(x), L1, L2, n, tuple(surfaces), loops)


def c_coefficient(I: Iterable[int], partition: SetPartition) -> int:
    """Number of blocks meeting I in an odd number of indices."""
    S = set(I)
    return sum(1 for b in partition.blocks if len(S.intersection(b)) % 2)


def _stirling2_row(n: int) -> list[int]:
    row = [1]
    for i in range(1, n + 1):
        new = [0] * (i + 1)
        for k in range(1, i + 1):
            new[k] = k * (row[k] if k < len(row) else 0) + row[k - 1]
        row = new
    return row


def s_of_n(n: int) -> int:
    """Sum of (|P|-1)! over partitions of [n] with an even number of blocks."""
    if not 1 <= n <= 14:
        raise CapacityError(f"s_of_n supports 1 <= n <= 14, got {n}", required=n)
    row = _stirling2_row(n)
    return sum(row[k] * math.factorial(k - 1) for k in range(2, n + 1, 2))


@dataclass(frozen=True)
class UrsellFactorization:
    n: int
    a_full: float
    b: dict[SetPartition, float]
    v_plus: float
    v_minus: float

    @property
    def value(self) -> float:
        return self.a_full * (1.0 + self.v_plus + self.v_minus)


def factorize_ursell(n: int, moments: MomentProvider) -> UrsellFactorization:
    """Write U_n = a_[n] (1 + V+ + V-), splitting the normalised partition terms by block-count parity."""
    full = frozenset(range(n))
    a_full = float(moments(full))
    if a_full == 0.0:
        raise DegenerateInputError("the full-block moment is zero, so the terms cannot be normalised")
    cache: dict[frozenset[int], float] = {}
    b: dict[SetPartition, float] = {}
    v_plus = 0.0
    v_minus = 0.0
    for part in partitions(n):
        if len(part) == 1:
            continue
        prod = 1.0
        for blk in part.blocks:
            key = frozenset(blk)
            if key not in cache:
                cache[key] = float(moments(key))
            prod *= cache[key]
        bp = partition_weight(len(part)) * prod / a_full
        b[part] = bp
        if len(part) % 2:
            v_plus += bp
        else:
            v_minus += bp
    return UrsellFactorization(n, a_full, b, v_plus, v_minus)


def moments_from_psi(psi: Mapping[frozenset[int], float]) -> MomentProvider:
    """Block moments exp(-2 sum_I 1{|P & I| odd} psi[I]), the cluster form of E[prod_{i in P} W_i]."""
    items = [(frozenset(I), float(v)) for I, v in psi.items()]

    def mom(block: Iterable[int]) -> float:
        P = frozenset(block)
        return math.exp(-2.0 * sum(v for I, v in items if len(P & I) % 2))
    return mom


# --- special loops -------------------------------------------------------

# three unit squares hinged on the edge (1,1,1)-(1,1,2), which is used once
_FIG3_PATHS = (
    ((1, 1, 1), (1, 2, 1), (1, 2, 2), (1, 1, 2)),
    ((1, 1, 1), (2, 1, 1), (2, 1, 2), (1, 1, 2)),
    ((1, 1, 1), (1, 0, 1), (1, 0, 2), (1, 1, 2), (1, 1, 1)),
)
_FIG4_PATHS = (
    ((1, 1, 1), (2, 1, 1), (2, 1, 2), (1, 1, 2), (1, 1, 1)),
    ((1, 1, 1), (1, 1, 0), (1, 0, 0), (1, 0, 1), (1, 0, 2), (1, 1, 2), (1, 1, 1)),
    ((1, 1, 1), (1, 2, 1), (1, 2, 2), (1, 1, 2), (1, 1, 1)),
)


def _path_edges(path: Sequence[Sequence[int]]) -> set[KCell]:
    out = set()
    for a, b in zip(path, path[1:]):
        diff = [bj - aj for aj, bj in zip(a, b)]
        j = next(i for i, d in enumerate(diff) if d)
        out.add(edge(a if diff[j] == 1 else b, j))
    return out


def orient_loop(edges: Iterable[KCell]) -> LoopChain:
    """Orient a connected even-degree edge set along an Euler circuit."""
    edges = sorted({e.positive for e in edges})
    adj: dict[tuple, list[tuple[KCell, tuple]]] = {}
    for e in edges:
        a, b = e.vertices()
        adj.setdefault(a, []).append((e, b))
        adj.setdefault(b, []).append((e, a))
    if not edges or any(len(v) % 2 for v in adj.values()):
        raise DomainError("edge set is empty or has an odd-degree vertex")
    used: set[KCell] = set()
    ptr = {v: 0 for v in adj}
    coeffs: dict[KCell, int] = {}
    stack = [(edges[0].vertices()[0], None, 0)]
    # Hierholzer; each traversed edge records its direction of travel
    while stack:
        v, _, _ = stack[-1]
        lst = adj[v]
        while ptr[v] < len(lst) and lst[ptr[v]][0] in used:
            ptr[v] += 1
        if ptr[v] == len(lst):
            stack.pop()
            continue
        e, w = lst[ptr[v]]
        used.add(e)
        coeffs[e] = 1 if e.base == v else -1
        stack.append((w, e, 0))
    return LoopChain(coeffs)


def _translate_to(edges: set[KCell], base: Sequence[int]) -> set[KCell]:
    lo = [min(v[j] for e in edges for v in e.vertices()) for j in range(len(base))]
    off = [b - l for b, l in zip(base, lo)]
    return {KCell(tuple(x + o for x, o in zip(e.base, off)), e.dirs) for e in edges}


def special_loop(kind: str, base: Sequence[int] | None = None, box: BoxGeometry | None = None,
                 L1: int = 1, L2: int = 1) -> LoopChain:
    """Named loop with the minimum corner of its bounding box at `base`.

    kind is one of fig3_10edge, fig4_12edge, fig5_16edge_2d, rectangle.
    """
    if kind in ("fig3_10edge", "fig4_12edge"):
        paths = _FIG3_PATHS if kind == "fig3_10edge" else _FIG4_PATHS
        es: set[KCell] = set()
        for p in paths:
            es |= _path_edges(p)
        es = _translate_to(es, base or (0, 0, 0))
        loop = orient_loop(es)
    elif kind == "fig5_16edge_2d":
        b = tuple(base or (0, 0))
        # two 2x2 squares overlapping in one plaquette; their boundaries share no edge
        loop = LoopChain(boundary_chain(rectangle_surface(b, 2, 2))
                         + boundary_chain(rectangle_surface((b[0] + 1, b[1] + 1), 2, 2)))
    elif kind == "rectangle":
        b = tuple(base or ((0, 0, 0) if box is None else box.lo))
        loop = rectangle_surface(b, L1, L2).loop
    else:
        raise DomainError(f"unknown special loop {kind!r}")
    if box is not None:
        for c in loop.coeffs:
            if not box.contains(c):
                raise DomainError(f"{kind} does not fit in the box")
    return loop


# --- two-loop decompositions ----------------------------------------------

def _degrees(edges: Iterable[KCell]) -> dict[tuple, int]:
    deg: dict[tuple, int] = {}
    for e in edges:
        for v in e.vertices():
            deg[v] = deg.get(v, 0) + 1
    return deg


def is_valid_part(edges: Sequence[KCell], simple: bool) -> bool:
    deg = _degrees(edges)
    if any(d % 2 for d in deg.values()):
        return False
    if simple and any(d != 2 for d in deg.values()):
        return False
    return edge_support_connected(edges)


@dataclass(frozen=True, order=True)
class LoopPair:
    """Unordered pair of edge supports; `first` holds the lexicographically smaller one."""

    first: tuple[KCell, ...]
    second: tuple[KCell, ...]

    def sizes(self) -> tuple[int, int]:
        return tuple(sorted((len(self.first), len(self.second))))

    def loops(self) -> tuple[LoopChain, LoopChain]:
        return orient_loop(self.first), orient_loop(self.second)


def decompose_two_loops(gamma: Chain | Iterable[KCell], simple_parts: bool = True) -> list[LoopPair]:
    """All splits of the loop's edge support into two loops.

    Parts are found in the cycle space of the support, so the cost is 2^(|E|-|V|+1).
    With simple_parts each part must visit each of its vertices exactly once.
    """
    edges = sorted(gamma.coeffs) if isinstance(gamma, Chain) else sorted({e.positive for e in gamma})
    n = len(edges)
    if n > MAX_DECOMPOSE_LEN:
        raise CapacityError(f"loop of length {n} exceeds the decomposition guard {MAX_DECOMPOSE_LEN}",
                            required=n)
    rows: dict[tuple, int] = {}
    for i, e in enumerate(edges):
        for v in e.vertices():
            rows[v] = rows.get(v, 0) ^ (1 << i)
    basis = gf2.nullspace(list(rows.values()), n)
    full = (1 << n) - 1
    seen: set[frozenset[int]] = set()
    out: list[LoopPair] = []
    for mask in gf2.span(basis):
        if mask == 0 or mask == full:
            continue
        key = frozenset((mask, full ^ mask))
        if key in seen:
            continue
        seen.add(key)
        a = tuple(edges[i] for i in range(n) if mask >> i & 1)
        b = tuple(edges[i] for i in range(n) if not mask >> i & 1)
        if is_valid_part(a, simple_parts) and is_valid_part(b, simple_parts):
            first, second = sorted((a, b))
            pair = LoopPair(first, second)
            assert set(first).isdisjoint(second) and len(first) + len(second) == n
            out.append(pair)
    return sorted(out)


# --- exhaustive search in Z^2 ------------------------------------------------

_SYMMETRIES = (
    lambda x, y: (x, y), lambda x, y: (-x, y), lambda x, y: (x, -y), lambda x, y: (-x, -y),
    lambda x, y: (y, x), lambda x, y: (-y, x), lambda x, y: (y, -x), lambda x, y: (-y, -x),
)

Seg = tuple[tuple[int, int], tuple[int, int]]


def _normalise(segs: Iterable[Seg]) -> tuple[Seg, ...]:
    segs = [tuple(sorted(s)) for s in segs]
    mx = min(min(a[0], b[0]) for a, b in segs)
    my = min(min(a[1], b[1]) for a, b in segs)
    return tuple(sorted(((a[0] - mx, a[1] - my), (b[0] - mx, b[1] - my)) for a, b in segs))


def canonical_form(segs: Iterable[Seg], symmetric: bool = True) -> tuple[Seg, ...]:
    """Translation-normalised sorted segment list, minimised over the square's symmetries."""
    segs = list(segs)
    if not symmetric:
        return _normalise(segs)
    return min(_normalise([(f(*a), f(*b)) for a, b in segs]) for f in _SYMMETRIES)


def segments(edges: Iterable[KCell]) -> list[Seg]:
    out = []
    for e in edges:
        a, b = e.vertices()
        out.append((a, b))
    return out


def edges_from_segments(segs: Iterable[Seg]) -> list[KCell]:
    out = []
    for a, b in segs:
        j = 0 if a[0] != b[0] else 1
        out.append(edge(min(a, b), j))
    return sorted(out)


@dataclass
class SearchReport:
    max_len: int
    simple_parts: bool
    loops_examined: int
    loops_examined_mod_symmetry: int
    hits: dict[tuple[Seg, ...], int]
    hits_mod_symmetry: dict[tuple[Seg, ...], int]

    def __bool__(self) -> bool:
        return bool(self.hits)


def _closed_trails(max_len: int):
    """Edge sets (as frozensets of segments) of connected even-degree sets in Z^2.

    Every such set, translated so its lexicographically smallest vertex is the
    origin, uses both edges (0,0)-(0,1) and (0,0)-(1,0) and no other edge at the
    origin. We walk trails from (0,1) to (1,0) that avoid the origin and stay in
    the half-plane of vertices >= origin.
    """
    target = (1, 0)
    start = (0, 1)
    found: set[frozenset] = set()
    used: set[Seg] = set()
    first = ((0, 0), (0, 1))
    last = ((0, 0), (1, 0))
    budget = max_len - 2

    def allowed(v):
        return (v[0] > 0 or (v[0] == 0 and v[1] > 0))

    def walk(v, length):
        if v == target and length > 0:
            found.add(frozenset(used | {first, last}))
        rest = budget - length
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            w = (v[0] + dx, v[1] + dy)
            if not allowed(w):
                continue
            if abs(w[0] - target[0]) + abs(w[1] - target[1]) > rest - 1:
                continue
            s = (v, w) if v < w else (w, v)
            if s in used:
                continue
            used.add(s)
            walk(w, length + 1)
            used.remove(s)

    walk(start, 0)
    return found


def min_doubly_decomposable_search(dimension: int = 2, max_len: int = 14,
                                   simple_parts: bool = True) -> SearchReport:
    """Every loop in Z^2 with at most max_len edges (up to translation) that splits into
    two loops in at least two distinct ways."""
    if dimension != 2:
        raise DomainError("the exhaustive search is implemented for dimension 2")
    if max_len > MAX_SEARCH_LEN:
        raise CapacityError(f"max_len {max_len} exceeds the search guard {MAX_SEARCH_LEN}", required=max_len)
    sets = _closed_trails(max_len)
    hits: dict[tuple[Seg, ...], int] = {}
    sym_all: set[tuple[Seg, ...]] = set()
    for segs in sets:
        sym_all.add(canonical_form(segs))
        deg: dict[tuple[int, int], int] = {}
        for a, b in segs:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        # each decomposition needs the two parts to meet in at least one vertex of degree 4;
        # two or more such vertices are needed for more than one decomposition
        if sum(1 for d in deg.values() if d == 4) < 2:
            continue
        k = len(decompose_two_loops(edges_from_segments(segs), simple_parts))
        if k >= 2:
            hits[canonical_form(segs, symmetric=False)] = k
    hits_sym = {}
    for segs, k in hits.items():
        hits_sym[canonical_form(segs)] = k
    return SearchReport(max_len, simple_parts, len(sets), len(sym_all), dict(sorted(hits.items())),
                        dict(sorted(hits_sym.items())))

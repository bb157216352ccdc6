"""Low-temperature cluster expansion for Z2 lattice gauge theory (m >= 3).

Vortices are closed Z2 2-forms whose support is connected in the plaquette
graph (two plaquettes are adjacent when some 3-cell of the box contains both).
Activities follow the convention phi(nu) = exp(-4 beta |supp nu|), which counts
each frustrated plaquette in both orientations. In the units of `model` (one
orientation per plaquette) the same measure has coupling 2 beta; see
`model_beta`.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import gf2
from .dec import BoxGeometry, Chain, Z2Form, boundary, boundary_chain, coboundary
from .errors import CapacityError, DomainError

log = logging.getLogger(__name__)

MAX_GRAPH_K = 8
DEFAULT_BETA0 = 1.0


def model_beta(beta: float) -> float:
    """Coupling of `model.ModelParams` describing the measure expanded here at `beta`."""
    return 2.0 * beta


class PlaquetteGraph:
    """Plaquettes of a box, adjacent when they lie in the boundary of a common 3-cell."""

    def __init__(self, box: BoxGeometry):
        self.box = box
        n = box.n_cells(2)
        if box.m < 3:
            self.cubes_of: tuple[tuple[int, ...], ...] = tuple(() for _ in range(n))
            self.faces_of: np.ndarray = np.zeros((0, 6), dtype=np.int64)
        else:
            self.cubes_of = box.coboundary_lists(2)
            self.faces_of = box.boundary_table(3)[0]
        nbrs = []
        for p in range(n):
            s = set()
            for c in self.cubes_of[p]:
                s.update(int(f) for f in self.faces_of[c])
            s.discard(p)
            nbrs.append(tuple(sorted(s)))
        self.neighbors: tuple[tuple[int, ...], ...] = tuple(nbrs)

    @property
    def n(self) -> int:
        return len(self.neighbors)

    def adjacent(self, p1: int, p2: int) -> bool:
        return p1 != p2 and p2 in self.neighbors[p1]

    @cached_property
    def boundary_plaquettes(self) -> frozenset[int]:
        cells = self.box.cells(2)
        return frozenset(i for i, c in enumerate(cells) if self.box.is_boundary_cell(c))

    def closed_neighborhood(self, support: Iterable[int]) -> frozenset[int]:
        out = set(support)
        for p in list(out):
            out.update(self.neighbors[p])
        return frozenset(out)

    def ball(self, seeds: Iterable[int], radius: int) -> frozenset[int]:
        seen = set(seeds)
        frontier = set(seen)
        for _ in range(radius):
            nxt = set()
            for p in frontier:
                nxt.update(q for q in self.neighbors[p] if q not in seen)
            seen |= nxt
            frontier = nxt
        return frozenset(seen)


def build_plaquette_graph(box: BoxGeometry) -> PlaquetteGraph:
    return PlaquetteGraph(box)


@dataclass(frozen=True, order=True)
class Vortex:
    """Support of a vortex as sorted plaquette indices of its box."""

    support: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.support)

    def form(self, box: BoxGeometry) -> Z2Form:
        v = np.zeros(box.n_cells(2), dtype=np.uint8)
        v[list(self.support)] = 1
        return Z2Form(box, 2, v)

    def pairing(self, q: Chain, box: BoxGeometry) -> int:
        """nu(q): sum of nu over q with coefficients mod 2."""
        idx = box.index(2)
        s = set(self.support)
        return sum(1 for c, k in q.coeffs.items() if k % 2 and idx[c] in s) % 2


@dataclass(frozen=True)
class TruncationPolicy:
    max_total_support: int = 8
    max_multiplicity: int = 8
    region: frozenset[int] | None = None
    exclude_boundary: bool = True
    remainder_probe: int = 2
    budget: int = 5_000_000
    beta0: float = DEFAULT_BETA0

    def check(self, m: int) -> None:
        if self.max_total_support < 2 * (m - 1):
            raise DomainError(f"support cap {self.max_total_support} is below the smallest vortex size {2 * (m - 1)}")
        if self.max_multiplicity < 1:
            raise DomainError("multiplicity cap must be at least 1")

    def allowed(self, graph: PlaquetteGraph) -> frozenset[int]:
        base = frozenset(range(graph.n)) if self.region is None else frozenset(self.region)
        if self.exclude_boundary:
            base = base - graph.boundary_plaquettes
        return base


class _VortexSearch:
    """Closed, G2-connected plaquette sets found by repairing odd 3-cells.

    Starting from a plaquette, the smallest 3-cell containing an odd number of
    chosen plaquettes must receive one more of its faces; once no odd 3-cell is
    left the set is closed and may be extended by any neighbouring plaquette.
    """

    def __init__(self, graph: PlaquetteGraph, allowed: frozenset[int], budget: int):
        self.g = graph
        self.allowed = allowed
        self.budget = budget
        self.states = 0
        m = graph.box.m
        self.per_plaquette = max(1, 2 * (m - 2))

    def containing(self, root: int, cap: int, forbidden: frozenset[int] = frozenset()) -> set[frozenset[int]]:
        g = self.g
        ok = self.allowed - forbidden
        if root not in ok:
            return set()
        faces = [[int(p) for p in row if int(p) in ok] for row in g.faces_of]
        nbrs = g.neighbors
        cubes_of = g.cubes_of
        per = self.per_plaquette
        found: set[int] = set()
        seen: set[int] = set()
        odd: set[int] = set()
        members: list[int] = []

        def toggle(p):
            for c in cubes_of[p]:
                if c in odd:
                    odd.remove(c)
                else:
                    odd.add(c)

        def step(S: int, p: int):
            toggle(p)
            members.append(p)
            rec(S | (1 << p))
            members.pop()
            toggle(p)

        def rec(S: int):
            if S in seen:
                return
            seen.add(S)
            self.states += 1
            if self.states > self.budget:
                raise CapacityError(f"vortex search exceeded {self.budget} states", required=self.states)
            size = len(members)
            if odd:
                if size + -(-len(odd) // per) > cap:
                    return
                for p in faces[min(odd)]:
                    if not S >> p & 1:
                        step(S, p)
                return
            found.add(S)
            if size + 2 > cap:
                return
            cand = set()
            for q in members:
                cand.update(nbrs[q])
            for p in sorted(cand):
                if not S >> p & 1 and p in ok:
                    step(S, p)

        step(0, root)
        return {frozenset(_bit_indices(S)) for S in found}


def _bit_indices(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def enumerate_vortices(box: BoxGeometry, graph: PlaquetteGraph | None = None,
                       policy: TruncationPolicy = TruncationPolicy(),
                       anchors: Iterable[int] | None = None) -> list[Vortex]:
    """Vortices with support at most the policy cap, inside the allowed plaquettes.

    Without anchors every vortex is generated once from its smallest plaquette.
    With anchors, only vortices meeting at least one anchor plaquette are returned.
    """
    graph = graph or build_plaquette_graph(box)
    policy.check(box.m)
    allowed = policy.allowed(graph)
    search = _VortexSearch(graph, allowed, policy.budget)
    out: set[frozenset[int]] = set()
    roots = sorted(allowed if anchors is None else set(anchors) & allowed)
    done: set[int] = set()
    for r in roots:
        if anchors is None:
            forbidden = frozenset(p for p in allowed if p < r)
        else:
            forbidden = frozenset(done)
        out |= search.containing(r, policy.max_total_support, forbidden)
        done.add(r)
    return sorted(Vortex(tuple(sorted(s))) for s in out)


def vortices_adjacent(graph: PlaquetteGraph, a: Vortex, b: Vortex) -> bool:
    """Supports intersect, or some plaquette of one is adjacent to some plaquette of the other."""
    nb = graph.closed_neighborhood(a.support)
    return any(p in nb for p in b.support)


def connected_graph_sum(adj: Sequence[Sequence[bool]]) -> int:
    """Sum over connected spanning subgraphs G of the compatibility graph of (-1)^|E(G)|.

    Uses the recursion over the block containing the smallest vertex; equivalent to
    enumerating graphs by edge bitmask.
    """
    k = len(adj)
    full = (1 << k) - 1
    has_edge: dict[int, bool] = {}

    def any_edge(S: int) -> bool:
        if S not in has_edge:
            idx = [i for i in range(k) if S >> i & 1]
            has_edge[S] = any(adj[i][j] for a, i in enumerate(idx) for j in idx[a + 1:])
        return has_edge[S]

    def f(S: int) -> int:
        return 0 if any_edge(S) else 1

    conn: dict[int, int] = {}
    for S in range(1, full + 1):
        low = S & -S
        rest = S ^ low
        total = f(S)
        sub = rest
        # proper subsets B of S that contain the lowest element
        while True:
            B = low | sub
            if B != S:
                total -= conn[B] * f(S ^ B)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        conn[S] = total
    return conn[full]


def _adjacency_matrix(graph: PlaquetteGraph, vortices: Sequence[Vortex]) -> list[list[bool]]:
    k = len(vortices)
    return [[i != j and vortices_adjacent(graph, vortices[i], vortices[j]) for j in range(k)] for i in range(k)]


def ursell_graph_coefficient(vortices: Sequence[Vortex], graph: PlaquetteGraph) -> Fraction:
    """(1/k!) times the signed count of connected graphs on the k vortices."""
    k = len(vortices)
    if k < 1:
        raise DomainError("need at least one vortex")
    if k > MAX_GRAPH_K:
        raise CapacityError(f"{k} vortices exceed the graph-enumeration guard {MAX_GRAPH_K}", required=k)
    return Fraction(connected_graph_sum(_adjacency_matrix(graph, vortices)), math.factorial(k))


def multiset_coefficient(vortices: Sequence[Vortex], graph: PlaquetteGraph) -> int:
    """k! times ursell_graph_coefficient."""
    c = ursell_graph_coefficient(vortices, graph) * math.factorial(len(vortices))
    return int(c)


@dataclass(frozen=True)
class VortexCluster:
    """Multiset of vortices stored as sorted (vortex, multiplicity) pairs."""

    items: tuple[tuple[Vortex, int], ...]

    @classmethod
    def of(cls, vortices: Iterable[Vortex]) -> VortexCluster:
        counts: dict[Vortex, int] = {}
        for v in vortices:
            counts[v] = counts.get(v, 0) + 1
        return cls(tuple(sorted(counts.items())))

    def members(self) -> list[Vortex]:
        return [v for v, n in self.items for _ in range(n)]

    @property
    def total_support(self) -> int:
        return sum(v.size * n for v, n in self.items)

    @property
    def n_vortices(self) -> int:
        return sum(n for _, n in self.items)

    def symmetry_factor(self) -> int:
        return math.prod(math.factorial(n) for _, n in self.items)


def activity(nu: Vortex, beta: float) -> float:
    return math.exp(-4.0 * beta * nu.size)


def correlated_activity(V: VortexCluster, beta: float, graph: PlaquetteGraph) -> float:
    """Mayer weight of the cluster: signed connected-graph count / prod(n_nu!) * exp(-4 beta |V|).

    The 1/prod(n_nu!) factor converts the sum over ordered tuples into a sum over
    multisets; it is 1 unless a vortex is repeated.
    """
    c = multiset_coefficient(V.members(), graph)
    return c / V.symmetry_factor() * math.exp(-4.0 * beta * V.total_support)


def cluster_pairing(V: VortexCluster, q: Chain, box: BoxGeometry) -> int:
    return sum(n * v.pairing(q, box) for v, n in V.items) % 2


def classify_interaction(V: VortexCluster, surfaces: Sequence[Chain], box: BoxGeometry) -> frozenset[int]:
    """Indices i with V(q_i) = 1."""
    return frozenset(i for i, q in enumerate(surfaces) if cluster_pairing(V, q, box))


@dataclass
class SeriesResult:
    """Truncated sum with its per-order breakdown.

    `remainder` is the magnitude of the first discarded orders (support in
    (cap, cap + probe]); NaN when no probe was requested.
    """

    value: float
    by_order: dict[int, float]
    remainder: float
    n_clusters: int
    in_converged_regime: bool = True
    cluster_counts: dict[int, int] = field(default_factory=dict)


class ClusterEnumerator:
    """Connected vortex multisets grown from seed vortices.

    Vortices are found lazily: the partners of a cluster are the vortices meeting
    the closed G2-neighbourhood of its support.
    """

    def __init__(self, box: BoxGeometry, policy: TruncationPolicy, graph: PlaquetteGraph | None = None):
        self.box = box
        self.graph = graph or build_plaquette_graph(box)
        self.policy = policy
        policy.check(box.m)
        self.allowed = policy.allowed(self.graph)
        self._search = _VortexSearch(self.graph, self.allowed, policy.budget)
        self._through: dict[int, list[Vortex]] = {}
        self._caps: dict[int, int] = {}

    def through(self, p: int, cap: int) -> list[Vortex]:
        """Vortices containing plaquette p with support at most cap."""
        if cap > self._caps.get(p, 0):
            found = self._search.containing(p, cap)
            self._through[p] = sorted(Vortex(tuple(sorted(s))) for s in found)
            self._caps[p] = cap
        return [v for v in self._through[p] if v.size <= cap]

    def clusters(self, seed_plaquettes: Iterable[int] | None, cap: int) -> list[VortexCluster]:
        """All clusters with total support <= cap containing a vortex through a seed plaquette.

        seed_plaquettes=None seeds from every allowed plaquette (whole-region enumeration).
        """
        seeds_p = sorted(self.allowed if seed_plaquettes is None else set(seed_plaquettes) & self.allowed)
        seeds: set[Vortex] = set()
        for p in seeds_p:
            seeds.update(self.through(p, cap))
        maxmult = self.policy.max_multiplicity
        seen: set[tuple[tuple[Vortex, int], ...]] = set()
        stack = []
        for v in sorted(seeds):
            key = ((v, 1),)
            if key not in seen:
                seen.add(key)
                stack.append(key)
        out = []
        while stack:
            items = stack.pop()
            out.append(VortexCluster(items))
            size = sum(v.size * n for v, n in items)
            nv = sum(n for _, n in items)
            room = cap - size
            if nv >= maxmult or room < 2:
                continue
            support = set()
            for v, _ in items:
                support.update(v.support)
            partners: set[Vortex] = set()
            for p in self.graph.closed_neighborhood(support):
                if p in self.allowed:
                    partners.update(self.through(p, room))
            counts = dict(items)
            for w in partners:
                new = dict(counts)
                new[w] = new.get(w, 0) + 1
                key = tuple(sorted(new.items()))
                if key not in seen:
                    seen.add(key)
                    stack.append(key)
        return sorted(out, key=lambda c: (c.total_support, c.items))


def _region_for(surfaces: Sequence[Chain], box: BoxGeometry) -> list[int]:
    idx = box.index(2)
    out = set()
    for q in surfaces:
        for c, k in q.coeffs.items():
            if k % 2:
                try:
                    out.add(idx[c])
                except KeyError:
                    raise DomainError(f"{c} is not inside the box") from None
    return sorted(out)


class SurfaceClusters:
    """Clusters touching at least one surface, enumerated once and re-weighted per beta.

    Each cluster is stored with its interaction set I, total support and the
    beta-independent coefficient (signed connected-graph count / prod n_nu!).
    """

    def __init__(self, box: BoxGeometry, surfaces: Sequence[Chain], policy: TruncationPolicy,
                 graph: PlaquetteGraph | None = None):
        self.box = box
        self.surfaces = list(surfaces)
        self.policy = policy
        self.graph = graph or build_plaquette_graph(box)
        enum = ClusterEnumerator(box, policy, self.graph)
        limit = policy.max_total_support + max(policy.remainder_probe, 0)
        self.records: list[tuple[frozenset[int], int, Fraction]] = []
        for V in enum.clusters(_region_for(self.surfaces, box), limit):
            I = classify_interaction(V, self.surfaces, box)
            if not I:
                continue
            c = Fraction(multiset_coefficient(V.members(), self.graph), V.symmetry_factor())
            if c:
                self.records.append((I, V.total_support, c))

    def series(self, beta: float, select, scale: float = 1.0) -> SeriesResult:
        policy = self.policy
        if beta < policy.beta0:
            log.warning("beta=%s is below beta0=%s; the truncated series is not expected to converge",
                        beta, policy.beta0)
        cap = policy.max_total_support
        coeff: dict[int, Fraction] = {}
        counts: dict[int, int] = {}
        for I, s, c in self.records:
            if select(I):
                coeff[s] = coeff.get(s, 0) + c
                counts[s] = counts.get(s, 0) + 1
        by_order = {s: scale * float(c) * math.exp(-4.0 * beta * s) for s, c in sorted(coeff.items())}
        value = math.fsum(v for s, v in by_order.items() if s <= cap)
        if policy.remainder_probe > 0:
            remainder = abs(math.fsum(v for s, v in by_order.items() if s > cap))
        else:
            remainder = float("nan")
        return SeriesResult(value, by_order, remainder, sum(n for s, n in counts.items() if s <= cap),
                            beta >= policy.beta0, dict(sorted(counts.items())))

    def psi(self, I: Iterable[int], beta: float) -> SeriesResult:
        target = frozenset(I)
        if not target:
            raise DomainError("I must be nonempty; clusters interacting with no surface are not localised")
        if any(not 0 <= i < len(self.surfaces) for i in target):
            raise DomainError("I indexes a surface that was not given")
        return self.series(beta, lambda J: J == target)

    def neg_log_wilson(self, beta: float, which: int = 0) -> SeriesResult:
        """Sum of 2 V(q_which) Psi(V)."""
        return self.series(beta, lambda J: which in J, 2.0)


def psi_beta_I(surfaces: Sequence[Chain], I: Iterable[int], beta: float, policy: TruncationPolicy,
               box: BoxGeometry, graph: PlaquetteGraph | None = None) -> SeriesResult:
    """Sum of correlated activities of clusters interacting with exactly the surfaces in I."""
    target = frozenset(I)
    if not target:
        raise DomainError("I must be nonempty; clusters interacting with no surface are not localised")
    return SurfaceClusters(box, surfaces, policy, graph).psi(target, beta)


def truncated_log_wilson(gamma: Chain, surface: Chain, beta: float, policy: TruncationPolicy,
                         box: BoxGeometry, graph: PlaquetteGraph | None = None) -> SeriesResult:
    """-log E[W_gamma] as the sum of 2 V(q) Psi(V) over clusters up to the support cap."""
    if boundary_chain(surface) != gamma:
        raise DomainError("the surface boundary is not gamma")
    return SurfaceClusters(box, [surface], policy, graph).neg_log_wilson(beta)


def log_partition_series(box: BoxGeometry, beta: float, policy: TruncationPolicy,
                         graph: PlaquetteGraph | None = None) -> SeriesResult:
    """Sum of correlated activities over every cluster in the allowed region."""
    g = graph or build_plaquette_graph(box)
    enum = ClusterEnumerator(box, policy, g)
    cap = policy.max_total_support
    by_order: dict[int, float] = {}
    clusters = enum.clusters(None, cap)
    for V in clusters:
        s = V.total_support
        by_order[s] = by_order.get(s, 0.0) + correlated_activity(V, beta, g)
    return SeriesResult(math.fsum(by_order.values()), dict(sorted(by_order.items())), float("nan"), len(clusters))


def exact_log_vortex_sum(box: BoxGeometry, beta: float, policy: TruncationPolicy,
                         graph: PlaquetteGraph | None = None) -> float:
    """log of the sum of phi(nu) over all closed 2-forms supported in the allowed region.

    Closed forms are enumerated as the span of a GF(2) kernel, so only tiny regions are feasible.
    """
    g = graph or build_plaquette_graph(box)
    allowed = sorted(policy.allowed(g))
    pos = {p: i for i, p in enumerate(allowed)}
    rows = []
    for c in range(g.faces_of.shape[0]):
        r = 0
        for p in g.faces_of[c]:
            if int(p) in pos:
                r |= 1 << pos[int(p)]
        if r:
            rows.append(r)
    basis = gf2.nullspace(rows, len(allowed))
    if len(basis) > 24:
        raise CapacityError(f"2^{len(basis)} closed forms to sum", required=len(basis))
    total = 0.0
    for v in gf2.span(basis):
        total += math.exp(-4.0 * beta * bin(v).count("1"))
    return math.log(total)


def classify_vortex_shape(vortex: Vortex, box: BoxGeometry) -> str:
    """Name the vortex as the coboundary of a small edge set.

    'single-edge' (one edge), 'parallel-pair' / 'corner-pair' (two edges of one
    plaquette, opposite or adjacent), 'staircase' (three mutually perpendicular
    edges, pairwise sharing a plaquette), otherwise 'other'.
    """
    idx = box.index(2)
    target = frozenset(vortex.support)
    cells = box.cells(2)
    cand = sorted({e.positive for p in vortex.support for e in _edges_of(cells[p])})
    cob = {e: frozenset(idx[c] for c in coboundary(e, box).support()) for e in cand}
    for e in cand:
        if cob[e] == target:
            return "single-edge"
    for i, a in enumerate(cand):
        for b in cand[i + 1:]:
            if cob[a] & cob[b] and cob[a] ^ cob[b] == target:
                return "parallel-pair" if a.dirs == b.dirs else "corner-pair"
    if vortex.size <= 12:
        for i, a in enumerate(cand):
            for j in range(i + 1, len(cand)):
                b = cand[j]
                if not cob[a] & cob[b]:
                    continue
                for c in cand[j + 1:]:
                    if (cob[a] & cob[c] and cob[b] & cob[c] and len({a.dirs, b.dirs, c.dirs}) == 3
                            and cob[a] ^ cob[b] ^ cob[c] == target):
                        return "staircase"
    return "other"


def _edges_of(p):
    return list(boundary(p).support())

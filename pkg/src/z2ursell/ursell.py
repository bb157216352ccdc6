"""Set partitions and Ursell functions (joint cumulants).

Indices are 0-based throughout: a partition of n covers {0, ..., n-1}.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from . import gf2
from .dec import Chain, KCell, LoopChain, is_loop
from .errors import CapacityError
from .model import (
    DEFAULT_BUDGET_EXPONENT,
    MAX_TRACKED_OBSERVABLES,
    ModelParams,
    edge_parity_set,
    is_gauge_invariant,
    loop_parities,
    run_chain,
    state_count_table,
)

MAX_PARTITION_N = 14

MomentProvider = Callable[[frozenset[int]], float]


@dataclass(frozen=True, order=True)
class SetPartition:
    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> SetPartition:
        bl = sorted(tuple(sorted(b)) for b in blocks)
        return cls(tuple(bl))

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __str__(self) -> str:
        return "|".join(" ".join(str(i) for i in b) for b in self.blocks)


def partitions(n: int) -> Iterator[SetPartition]:
    """All set partitions of {0..n-1} via restricted growth strings, in lexicographic string order."""
    if not 1 <= n <= MAX_PARTITION_N:
        raise CapacityError(f"partitions of {n} elements: supported range is 1..{MAX_PARTITION_N}",
                            required=n)
    rgs = [0] * n
    maxes = [0] * n  # maxes[i] = max(rgs[:i+1])
    while True:
        blocks: list[list[int]] = [[] for _ in range(maxes[-1] + 1)]
        for i, b in enumerate(rgs):
            blocks[b].append(i)
        yield SetPartition(tuple(tuple(b) for b in blocks))
        i = n - 1
        while i > 0 and rgs[i] == maxes[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        rgs[i] += 1
        maxes[i] = max(maxes[i - 1], rgs[i])
        for j in range(i + 1, n):
            rgs[j] = 0
            maxes[j] = maxes[i]


def partition_weight(size: int) -> int:
    """(-1)^(|P|-1) (|P|-1)!"""
    return (-1) ** (size - 1) * math.factorial(size - 1)


class CachedMoments:
    """Memoising wrapper; the empty block always has moment 1."""

    def __init__(self, fn: MomentProvider):
        self._fn = fn
        self._cache: dict[frozenset[int], float] = {frozenset(): 1.0}

    def __call__(self, block: Iterable[int]) -> float:
        key = frozenset(block)
        if key not in self._cache:
            self._cache[key] = float(self._fn(key))
        return self._cache[key]


def ursell_over(parts: Iterable[SetPartition], moments: MomentProvider) -> float:
    total = 0.0
    for part in parts:
        prod = 1.0
        for b in part.blocks:
            prod *= moments(frozenset(b))
            if prod == 0.0:
                break
        total += partition_weight(len(part)) * prod
    return total


def ursell(n: int, moments: MomentProvider) -> float:
    """U_n as the signed sum over all partitions of block-moment products."""
    return ursell_over(partitions(n), CachedMoments(moments))


def forms_loop(edges: Sequence[KCell]) -> LoopChain | None:
    """The loop traced by the directed edges, or None.

    None when an edge is used twice, the boundary is nonzero, or the support is disconnected.
    """
    positives = [e.positive for e in edges]
    if len(set(positives)) != len(positives) or not edges:
        return None
    chain = Chain.from_cells(1, edges)
    return LoopChain(chain) if is_loop(chain) else None


def _index_incidence(edges: Sequence[KCell]) -> list[int]:
    """One packed row per vertex: which edge indices touch it (mod 2)."""
    rows: dict[tuple[int, ...], int] = {}
    for i, e in enumerate(edges):
        for v in e.vertices():
            rows[v] = rows.get(v, 0) ^ (1 << i)
    return list(rows.values())


def closed_blocks(edges: Sequence[KCell]) -> list[int]:
    """Nonempty index subsets (bitmasks) whose edges meet every vertex an even number of times."""
    basis = gf2.nullspace(_index_incidence(edges), len(edges))
    if len(basis) > 22:
        raise CapacityError(f"cycle space of dimension {len(basis)} is too large to list",
                            required=len(basis))
    return sorted(v for v in gf2.span(basis) if v)


def closed_block_partitions(edges: Sequence[KCell]) -> list[SetPartition]:
    """Partitions of the index set into blocks that are each closed mod 2.

    For beta > 0 these are exactly the partitions whose block-moment product is nonzero.
    """
    n = len(edges)
    blocks = closed_blocks(edges)
    by_low: dict[int, list[int]] = {}
    for b in blocks:
        by_low.setdefault((b & -b).bit_length() - 1, []).append(b)
    full = (1 << n) - 1
    out: list[SetPartition] = []

    def rec(left: int, chosen: list[int]):
        if not left:
            out.append(SetPartition.from_blocks(_bits(b) for b in chosen))
            return
        low = (left & -left).bit_length() - 1
        for b in by_low.get(low, ()):
            if b & ~left == 0:
                chosen.append(b)
                rec(left & ~b, chosen)
                chosen.pop()

    if n:
        rec(full, [])
    return sorted(out, key=lambda p: (len(p), p.blocks))


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def nonzero_partition_report(edges: Sequence[KCell]) -> list[SetPartition]:
    return closed_block_partitions(edges)


def _chunks(seq: Sequence, size: int) -> Iterator[Sequence]:
    for i in range(0, len(seq), size):
        yield seq[i:i + size]


def _exact_block_moments(params: ModelParams, parities: Sequence[frozenset[int]], gauge_fix: bool,
                         budget_exponent: int, workers: int | None) -> dict[frozenset[int], float]:
    out = {}
    distinct = sorted(set(parities), key=sorted)
    for chunk in _chunks(distinct, MAX_TRACKED_OBSERVABLES):
        table = state_count_table(params.box, list(chunk), gauge_fix, budget_exponent, workers)
        for bit, p in enumerate(chunk):
            out[p] = table.moment(params.beta, 1 << bit)
    return out


def _jackknife(leave_one_out: np.ndarray) -> float:
    b = len(leave_one_out)
    return float(math.sqrt((b - 1) / b * np.sum((leave_one_out - leave_one_out.mean()) ** 2)))


def _mcmc_ursell(params: ModelParams, observables: Sequence[frozenset[int]], parts: Sequence[SetPartition],
                 sweeps: int, seed: int, start: str, n_batches: int) -> tuple[float, float]:
    """Partition sum with every block moment taken from the same chain.

    Observable bit i tracks observables[i]; a block's moment is the mean sign of
    the product over its indices. Error by leave-one-batch-out jackknife.
    """
    rec = run_chain(params, observables, sweeps, seed, start)
    L = len(rec.obs) // n_batches
    N = L * n_batches
    blocks = {frozenset(b) for p in parts for b in p.blocks}
    sums = {}
    for b in blocks:
        x = rec.signs(sum(1 << i for i in b))[len(rec.obs) - N:].reshape(n_batches, L)
        sums[b] = x.sum(axis=1)

    def value(drop: int | None) -> float:
        def mom(block: frozenset[int]) -> float:
            s = sums[block]
            if drop is None:
                return float(s.sum() / N)
            return float((s.sum() - s[drop]) / (N - L))
        return ursell_over(parts, CachedMoments(mom))

    loo = np.array([value(b) for b in range(n_batches)])
    return value(None), _jackknife(loo)


def ursell_edges_estimate(params: ModelParams, edges: Sequence[KCell], method: str = "exact",
                          shortcut: bool = True, *, sweeps: int = 20000, seed: int = 0,
                          start: str = "cold", n_batches: int = 20,
                          budget_exponent: int = DEFAULT_BUDGET_EXPONENT,
                          workers: int | None = None) -> tuple[float, float]:
    """(U_n of the edge spins, standard error). The error is 0 for the exact method.

    With shortcut, partitions containing a block that is not closed mod 2 are
    skipped (their moment vanishes by the vertex-flip symmetry). Without it,
    every block moment is computed by enumerating all configurations without
    gauge fixing, so the zeros arise by cancellation.
    """
    if method not in ("exact", "mcmc"):
        raise ValueError(f"unknown method {method!r}")
    box = params.box
    n = len(edges)
    for e in edges:
        edge_parity_set(box, [e])  # containment check
    if shortcut:
        parts = closed_block_partitions(edges)
    else:
        parts = list(partitions(n))

    if not parts:
        return 0.0, 0.0
    if method == "exact":
        if shortcut:
            pmap = {frozenset(b): edge_parity_set(box, [edges[i] for i in b])
                    for p in parts for b in p.blocks}
            mom = _exact_block_moments(params, list(pmap.values()), True, budget_exponent, workers)
            return ursell_over(parts, lambda b: mom[pmap[b]]), 0.0
        singles = [edge_parity_set(box, [e]) for e in edges]
        table = state_count_table(box, singles, False, budget_exponent, workers)
        return ursell_over(parts, CachedMoments(
            lambda b: table.moment(params.beta, sum(1 << i for i in b)))), 0.0
    if method == "mcmc":
        singles = [edge_parity_set(box, [e]) for e in edges]
        return _mcmc_ursell(params, singles, parts, sweeps, seed, start, n_batches)
    raise ValueError(f"unknown method {method!r}")


def ursell_edges(params: ModelParams, edges: Sequence[KCell], method: str = "exact",
                 shortcut: bool = True, **kw) -> float:
    return ursell_edges_estimate(params, edges, method, shortcut, **kw)[0]


def ursell_wilson_estimate(params: ModelParams, loops: Sequence[Chain], method: str = "exact", *,
                           sweeps: int = 20000, seed: int = 0, start: str = "cold", n_batches: int = 20,
                           budget_exponent: int = DEFAULT_BUDGET_EXPONENT,
                           workers: int | None = None) -> tuple[float, float]:
    """(U_n of the Wilson loops, standard error); all moments share one enumeration or one chain."""
    box = params.box
    n = len(loops)
    parities = loop_parities(box, loops)
    parts = list(partitions(n))
    if method == "exact":
        invariant = all(is_gauge_invariant(box, p) for p in parities)
        table = state_count_table(box, list(parities), invariant, budget_exponent, workers)
        return ursell_over(parts, CachedMoments(
            lambda b: table.moment(params.beta, sum(1 << i for i in b)))), 0.0
    if method == "mcmc":
        return _mcmc_ursell(params, list(parities), parts, sweeps, seed, start, n_batches)
    raise ValueError(f"unknown method {method!r}")


def ursell_wilson(params: ModelParams, loops: Sequence[Chain], method: str = "exact", **kw) -> float:
    return ursell_wilson_estimate(params, loops, method, **kw)[0]


@dataclass(frozen=True)
class PartitionTerm:
    """One surviving partition: its weight and the product of its block moments."""

    partition: SetPartition
    weight: int
    product: float
    stderr: float


def partition_terms_estimate(params: ModelParams, edges: Sequence[KCell], method: str = "exact", *,
                             sweeps: int = 20000, seed: int = 0, start: str = "cold", n_batches: int = 20,
                             budget_exponent: int = DEFAULT_BUDGET_EXPONENT,
                             workers: int | None = None) -> list[PartitionTerm]:
    """Block-moment products of every partition into closed blocks.

    Each block is a loop, so the exact path uses a gauge-fixed enumeration; the
    MCMC path takes every block from one chain, with jackknife errors on the products.
    """
    box = params.box
    parts = closed_block_partitions(edges)
    blocks = sorted({b for p in parts for b in p.blocks})
    parity = {b: edge_parity_set(box, [edges[i] for i in b]) for b in blocks}
    if method == "exact":
        mom = _exact_block_moments(params, list(parity.values()), True, budget_exponent, workers)
        out = []
        for p in parts:
            prod = math.prod(mom[parity[b]] for b in p.blocks)
            out.append(PartitionTerm(p, partition_weight(len(p)), prod, 0.0))
        return out
    if method != "mcmc":
        raise ValueError(f"unknown method {method!r}")
    if len(blocks) > MAX_TRACKED_OBSERVABLES:
        raise CapacityError(f"{len(blocks)} distinct blocks to track", required=len(blocks))
    rec = run_chain(params, [parity[b] for b in blocks], sweeps, seed, start)
    L = len(rec.obs) // n_batches
    N = L * n_batches
    sums = {b: rec.signs(1 << i)[len(rec.obs) - N:].reshape(n_batches, L).sum(axis=1)
            for i, b in enumerate(blocks)}
    out = []
    for p in parts:
        full = math.prod(float(sums[b].sum()) / N for b in p.blocks)
        loo = np.array([math.prod(float(sums[b].sum() - sums[b][k]) / (N - L) for b in p.blocks)
                        for k in range(n_batches)])
        out.append(PartitionTerm(p, partition_weight(len(p)), full, _jackknife(loo)))
    return out

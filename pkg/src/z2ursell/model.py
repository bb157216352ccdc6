"""Z2 lattice gauge theory with free boundary: action, Wilson loops, exact and MCMC moments.

Spins take values g in {0, 1}; the representation is rho(g) = 1 - 2g.
The weight of a configuration is exp(-beta * S) with S = -sum_p rho(d sigma(p)).
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from . import _kernels
from .dec import BoxGeometry, Chain, KCell, Z2Form, exterior_derivative
from .errors import CapacityError, DomainError

log = logging.getLogger(__name__)

DEFAULT_BUDGET_EXPONENT = 30
CALLABLE_BUDGET_EXPONENT = 16
MAX_TRACKED_OBSERVABLES = 20


@dataclass(frozen=True)
class ModelParams:
    box: BoxGeometry
    beta: float

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise DomainError(f"beta must be finite and non-negative, got {self.beta}")


def rho(g):
    return 1 - 2 * g


class GaugeConfig(Z2Form):
    """A Z2 spin on every positive edge of the box."""

    def __init__(self, box: BoxGeometry, spins):
        super().__init__(box, 1, spins)

    @classmethod
    def cold(cls, box: BoxGeometry) -> GaugeConfig:
        return cls(box, np.zeros(box.n_cells(1), dtype=np.uint8))

    @classmethod
    def from_edges(cls, box: BoxGeometry, edges: Iterable[KCell]) -> GaugeConfig:
        return cls(box, Z2Form.from_cells(box, 1, edges).values)

    @property
    def spins(self) -> np.ndarray:
        return self.values

    def gauge_transform(self, vertex) -> GaugeConfig:
        """Flip every edge incident to the vertex."""
        box = self.box
        v = KCell(tuple(vertex), ())
        flips = [box.cells(1)[e] for e in box.coboundary_lists(0)[box.index(0)[v]]]
        return GaugeConfig(box, self.values ^ Z2Form.from_cells(box, 1, flips).values)


def frustrated_count(sigma: Z2Form) -> int:
    return int(exterior_derivative(sigma).values.sum())


def wilson_action(sigma: Z2Form) -> float:
    n_plaq = sigma.box.n_cells(2)
    return float(-(n_plaq - 2 * frustrated_count(sigma)))


def edge_parity_set(box: BoxGeometry, edges: Iterable[KCell] | Chain) -> frozenset[int]:
    """Indices of edges appearing an odd number of times (orientation ignored)."""
    if isinstance(edges, Chain):
        items = [(c, v) for c, v in edges.coeffs.items()]
    else:
        items = [(c, 1) for c in edges]
    idx = box.index(1)
    odd: set[int] = set()
    for cell, c in items:
        if cell.k != 1:
            raise DomainError("parity observables are built from edges")
        try:
            i = idx[cell.positive]
        except KeyError:
            raise DomainError(f"{cell} is not inside the box") from None
        if c % 2:
            odd ^= {i}
    return frozenset(odd)


def wilson_loop_value(sigma: Z2Form, gamma: Chain) -> float:
    s = sum(int(sigma.values[i]) for i in edge_parity_set(sigma.box, gamma))
    return float(rho(s % 2))


def is_gauge_invariant(box: BoxGeometry, parity: frozenset[int]) -> bool:
    """Every vertex meets an even number of the edges."""
    deg: dict[KCell, int] = {}
    cells = box.cells(1)
    for i in parity:
        a, b = cells[i].vertices()
        deg[a] = deg.get(a, 0) ^ 1
        deg[b] = deg.get(b, 0) ^ 1
    return not any(deg.values())


@lru_cache(maxsize=32)
def spanning_tree(box: BoxGeometry) -> frozenset[int]:
    """Edge indices of the BFS tree rooted at the lexicographically smallest vertex."""
    cells = box.cells(1)
    vidx = box.index(0)
    inc = box.coboundary_lists(0)
    seen = {0}
    tree = set()
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for e in inc[v]:
            for w in cells[e].vertices():
                w = vidx[KCell(w, ())]
                if w not in seen:
                    seen.add(w)
                    tree.add(e)
                    queue.append(w)
    return frozenset(tree)


def free_edges(box: BoxGeometry, gauge_fix: bool) -> tuple[int, ...]:
    tree = spanning_tree(box) if gauge_fix else frozenset()
    return tuple(e for e in range(box.n_cells(1)) if e not in tree)


def _csr(lists: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.array([i for x in lists for i in x], dtype=np.int64)
    return ptr, idx


def _obs_of_edge(edge_ids: Sequence[int], observables: Sequence[frozenset[int]]) -> np.ndarray:
    out = np.zeros(len(edge_ids), dtype=np.int64)
    for bit, obs in enumerate(observables):
        for pos, e in enumerate(edge_ids):
            if e in obs:
                out[pos] |= 1 << bit
    return out


@dataclass(frozen=True, eq=False)
class StateCountTable:
    """Exact number of configurations per (frustrated plaquettes, observable bit pattern).

    The table does not depend on beta; every moment at every beta is a weighted sum over it.
    """

    n_plaquettes: int
    n_observables: int
    counts: np.ndarray

    def _weights(self, beta: float) -> np.ndarray:
        return np.exp(-2.0 * beta * np.arange(self.n_plaquettes + 1))

    def _odd_columns(self, subset_mask: int) -> np.ndarray:
        masks = np.arange(self.counts.shape[1], dtype=np.int64)
        par = np.zeros_like(masks)
        m = masks & subset_mask
        while m.any():
            par ^= m & 1
            m >>= 1
        return par.astype(bool)

    def partition_sum(self, beta: float) -> float:
        """Sum of exp(-2 beta k) over configurations, the k = 0 term scaled to weight 1."""
        return float(self._weights(beta) @ self.counts.sum(axis=1))

    def moment(self, beta: float, subset_mask: int) -> float:
        """E[prod over the selected observables of rho(parity)]."""
        odd = self._odd_columns(subset_mask)
        signed = self.counts[:, ~odd].sum(axis=1) - self.counts[:, odd].sum(axis=1)
        w = self._weights(beta)
        return float((w @ signed) / (w @ self.counts.sum(axis=1)))

    def one_minus_moment(self, beta: float, subset_mask: int) -> float:
        """1 - E[...], computed without cancellation when the moment is close to 1."""
        odd = self._odd_columns(subset_mask)
        w = self._weights(beta)
        return float(2.0 * (w @ self.counts[:, odd].sum(axis=1)) / (w @ self.counts.sum(axis=1)))

    def neg_log_moment(self, beta: float, subset_mask: int) -> float:
        return -math.log1p(-self.one_minus_moment(beta, subset_mask))


def _resolve_workers(workers: int | None) -> int:
    avail = numba.config.NUMBA_NUM_THREADS
    return max(1, min(avail, workers or avail))


@lru_cache(maxsize=64)
def _cached_table(box: BoxGeometry, observables: tuple[frozenset[int], ...], gauge_fix: bool,
                  budget_exponent: int, workers: int) -> StateCountTable:
    free = free_edges(box, gauge_fix)
    if len(free) > budget_exponent:
        raise CapacityError(
            f"exact enumeration needs 2^{len(free)} configurations, budget is 2^{budget_exponent}",
            required=len(free))
    if len(observables) > MAX_TRACKED_OBSERVABLES:
        raise CapacityError(f"{len(observables)} observables tracked, at most {MAX_TRACKED_OBSERVABLES}",
                            required=len(observables))
    cob = box.coboundary_lists(1)
    ptr, idx = _csr([cob[e] for e in free])
    obs_of_edge = _obs_of_edge(free, observables)
    n_plaq = box.n_cells(2)
    n_blocks = workers * 4 if len(free) > 16 else 1
    numba.set_num_threads(workers)
    counts = _kernels.enumerate_histogram(len(free), ptr, idx, obs_of_edge, n_plaq,
                                          1 << len(observables), n_blocks)
    counts.flags.writeable = False
    return StateCountTable(n_plaq, len(observables), counts)


def state_count_table(box: BoxGeometry, observables: Sequence[frozenset[int]], gauge_fix: bool = True,
                      budget_exponent: int = DEFAULT_BUDGET_EXPONENT,
                      workers: int | None = None) -> StateCountTable:
    """Enumerate every configuration (modulo gauge when gauge_fix) once.

    With gauge fixing the table is only meaningful for gauge-invariant functions
    of the observable bits.
    """
    return _cached_table(box, tuple(frozenset(o) for o in observables), bool(gauge_fix),
                         int(budget_exponent), _resolve_workers(workers))


Observable = Chain | Iterable[KCell] | frozenset | Callable[[GaugeConfig], float]


def _as_parity(box: BoxGeometry, observable) -> frozenset[int] | None:
    if isinstance(observable, frozenset):
        return observable
    if isinstance(observable, Chain):
        return edge_parity_set(box, observable)
    if callable(observable):
        return None
    return edge_parity_set(box, observable)


def exact_expectation(params: ModelParams, observable: Observable, gauge_fix: bool | str = "auto",
                      budget_exponent: int = DEFAULT_BUDGET_EXPONENT, workers: int | None = None) -> float:
    """E[observable] by exhaustive summation.

    Parity observables (loops, edge lists, edge-index sets) use the compiled
    enumeration. With gauge_fix="auto" a parity observable that is not gauge
    invariant returns 0 by the vertex-flip symmetry; pass gauge_fix=False to
    enumerate all 2^|E| configurations instead. Arbitrary callables are summed
    in Python over all configurations unless gauge_fix=True.
    """
    box = params.box
    parity = _as_parity(box, observable)
    if parity is None:
        fix = gauge_fix is True
        return _callable_expectation(params, observable, fix)
    if gauge_fix == "auto":
        if not is_gauge_invariant(box, parity):
            return 0.0
        gauge_fix = True
    elif gauge_fix and not is_gauge_invariant(box, parity):
        raise DomainError("gauge fixing requested for an observable that is not gauge invariant")
    table = state_count_table(box, [parity], bool(gauge_fix), budget_exponent, workers)
    return table.moment(params.beta, 1)


def _callable_expectation(params: ModelParams, observable: Callable[[GaugeConfig], float],
                          gauge_fix: bool) -> float:
    box = params.box
    free = free_edges(box, gauge_fix)
    if len(free) > CALLABLE_BUDGET_EXPONENT:
        raise CapacityError(
            f"python-level enumeration needs 2^{len(free)} configurations, "
            f"budget is 2^{CALLABLE_BUDGET_EXPONENT}", required=len(free))
    faces, _ = box.boundary_table(2)
    num = 0.0
    den = 0.0
    spins = np.zeros(box.n_cells(1), dtype=np.uint8)
    for bits in itertools.product((0, 1), repeat=len(free)):
        spins[list(free)] = bits
        k = int(np.bitwise_xor.reduce(spins[faces], axis=1).sum())
        w = math.exp(-2.0 * params.beta * k)
        num += w * float(observable(GaugeConfig(box, spins.copy())))
        den += w
    return num / den


@dataclass(frozen=True, eq=False)
class ChainRecord:
    """Per-sweep observable bit patterns and frustrated-plaquette counts after thermalisation."""

    obs: np.ndarray
    frustrated: np.ndarray
    n_observables: int

    def signs(self, subset_mask: int) -> np.ndarray:
        m = self.obs & subset_mask
        par = np.zeros_like(m)
        while m.any():
            par ^= m & 1
            m >>= 1
        return 1.0 - 2.0 * par

    def batch_means(self, subset_mask: int, n_batches: int) -> np.ndarray:
        x = self.signs(subset_mask)
        n = (len(x) // n_batches) * n_batches
        if n == 0:
            raise DomainError("fewer recorded sweeps than batches")
        return x[len(x) - n:].reshape(n_batches, -1).mean(axis=1)


def run_chain(params: ModelParams, observables: Sequence[frozenset[int]], sweeps: int, seed: int,
              start: str = "cold", therm: int | None = None, chunk: int = 1024) -> ChainRecord:
    """Heat-bath Markov chain, one sweep visiting edges in index order.

    Uniforms come from a Philox generator keyed by the seed, so identical
    inputs give bit-identical records.
    """
    if sweeps < 1:
        raise DomainError("sweeps must be at least 1")
    if start not in ("cold", "hot"):
        raise DomainError(f"unknown start {start!r}")
    if len(observables) > 62:
        raise CapacityError("at most 62 observables per chain", required=len(observables))
    box = params.box
    therm = max(sweeps // 10, 10) if therm is None else therm
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_edges = box.n_cells(1)
    spins = np.zeros(n_edges, dtype=np.uint8)
    if start == "hot":
        spins[:] = rng.integers(0, 2, n_edges, dtype=np.uint8)
    faces, _ = box.boundary_table(2)
    par = np.bitwise_xor.reduce(spins[faces], axis=1).astype(np.uint8)
    ptr, idx = _csr(box.coboundary_lists(1))
    edge_ids = list(range(n_edges))
    obs_of_edge = _obs_of_edge(edge_ids, observables)
    obs0 = 0
    for e in np.flatnonzero(spins):
        obs0 ^= int(obs_of_edge[e])
    obs_state = np.array([obs0], dtype=np.int64)
    total = therm + sweeps
    out_obs = np.zeros(total, dtype=np.int64)
    out_fr = np.zeros(total, dtype=np.int64)
    done = 0
    while done < total:
        n = min(chunk, total - done)
        u = rng.random((n, n_edges))
        _kernels.heatbath_sweeps(spins, par, obs_state, ptr, idx, obs_of_edge, float(params.beta),
                                 u, out_obs[done:done + n], out_fr[done:done + n])
        done += n
    return ChainRecord(out_obs[therm:], out_fr[therm:], len(observables))


def batched_estimate(batch_values: np.ndarray) -> tuple[float, float]:
    b = len(batch_values)
    mean = float(batch_values.mean())
    se = float(batch_values.std(ddof=1) / math.sqrt(b)) if b > 1 else float("nan")
    return mean, se


def mcmc_estimate(params: ModelParams, observable: Observable, sweeps: int, seed: int,
                  start: str = "cold", n_batches: int = 20, therm: int | None = None) -> tuple[float, float]:
    """Batched mean and standard error of a parity observable."""
    parity = _as_parity(params.box, observable)
    if parity is None:
        raise DomainError("the sampler measures parity observables (loops or edge sets)")
    rec = run_chain(params, [parity], sweeps, seed, start, therm)
    return batched_estimate(rec.batch_means(1, n_batches))


@dataclass(frozen=True)
class MomentRequest:
    loops: tuple[Chain, ...]
    subset: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "loops", tuple(self.loops))
        object.__setattr__(self, "subset", frozenset(self.subset))
        bad = [i for i in self.subset if not 0 <= i < len(self.loops)]
        if bad:
            raise DomainError(f"subset indices {bad} out of range")

    @property
    def mask(self) -> int:
        return sum(1 << i for i in self.subset)


def loop_parities(box: BoxGeometry, loops: Sequence[Chain]) -> tuple[frozenset[int], ...]:
    return tuple(edge_parity_set(box, g) for g in loops)


def moment(params: ModelParams, request: MomentRequest, method: str = "exact", *, sweeps: int = 20000,
           seed: int = 0, start: str = "cold", budget_exponent: int = DEFAULT_BUDGET_EXPONENT,
           workers: int | None = None) -> float:
    """E[prod_{i in P} W_i]."""
    if not request.subset:
        return 1.0
    box = params.box
    parities = loop_parities(box, request.loops)
    if method == "exact":
        invariant = all(is_gauge_invariant(box, p) for p in parities)
        table = state_count_table(box, parities, invariant, budget_exponent, workers)
        return table.moment(params.beta, request.mask)
    if method == "mcmc":
        rec = run_chain(params, parities, sweeps, seed, start)
        return float(rec.signs(request.mask).mean())
    raise DomainError(f"unknown method {method!r}")

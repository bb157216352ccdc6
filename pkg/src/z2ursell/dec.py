"""Cubical discrete exterior calculus on a finite box of Z^m.

Cells are (base vertex, increasing direction tuple) with an orientation sign.
Integer chains keep signs; Z2 forms live on positive cells only.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from . import gf2
from .errors import DomainError

Vertex = tuple[int, ...]


def _shift(x: Vertex, j: int, by: int = 1) -> Vertex:
    y = list(x)
    y[j] += by
    return tuple(y)


@dataclass(frozen=True, order=True)
class KCell:
    base: Vertex
    dirs: tuple[int, ...]
    sign: int = 1

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.dirs, self.dirs[1:])):
            raise DomainError(f"directions must be strictly increasing: {self.dirs}")
        if self.sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")

    @property
    def k(self) -> int:
        return len(self.dirs)

    @property
    def positive(self) -> KCell:
        return self if self.sign == 1 else KCell(self.base, self.dirs)

    def __neg__(self) -> KCell:
        return KCell(self.base, self.dirs, -self.sign)

    def vertices(self) -> list[Vertex]:
        out = []
        for offs in itertools.product((0, 1), repeat=self.k):
            x = list(self.base)
            for j, o in zip(self.dirs, offs):
                x[j] += o
            out.append(tuple(x))
        return out


def edge(base: Iterable[int], direction: int, sign: int = 1) -> KCell:
    return KCell(tuple(base), (direction,), sign)


def plaquette(base: Iterable[int], d1: int, d2: int) -> KCell:
    a, b = sorted((d1, d2))
    return KCell(tuple(base), (a, b))


@dataclass
class Chain:
    """Integer combination of positive k-cells. Zero coefficients are dropped."""

    k: int
    coeffs: dict[KCell, int] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[KCell, int] = {}
        for cell, c in self.coeffs.items():
            if cell.k != self.k:
                raise DomainError(f"cell {cell} has degree {cell.k}, chain has degree {self.k}")
            pos = cell.positive
            clean[pos] = clean.get(pos, 0) + c * cell.sign
        self.coeffs = {c: v for c, v in clean.items() if v != 0}

    @classmethod
    def from_cells(cls, k: int, cells: Iterable[KCell]) -> Chain:
        acc: dict[KCell, int] = {}
        for cell in cells:
            pos = cell.positive
            acc[pos] = acc.get(pos, 0) + cell.sign
        return cls(k, acc)

    def __add__(self, other: Chain) -> Chain:
        if other.k != self.k:
            raise DomainError("cannot add chains of different degree")
        acc = dict(self.coeffs)
        for cell, c in other.coeffs.items():
            acc[cell] = acc.get(cell, 0) + c
        return Chain(self.k, acc)

    def __neg__(self) -> Chain:
        return Chain(self.k, {c: -v for c, v in self.coeffs.items()})

    def __sub__(self, other: Chain) -> Chain:
        return self + (-other)

    def __rmul__(self, a: int) -> Chain:
        return Chain(self.k, {c: a * v for c, v in self.coeffs.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, Chain) and self.k == other.k and self.coeffs == other.coeffs

    def __len__(self) -> int:
        return len(self.coeffs)

    def __iter__(self):
        return iter(sorted(self.coeffs))

    def is_zero(self) -> bool:
        return not self.coeffs

    def support(self) -> list[KCell]:
        return sorted(self.coeffs)

    def signed_cells(self) -> list[KCell]:
        """Cells with unit coefficients written as signed cells."""
        out = []
        for cell in self.support():
            c = self.coeffs[cell]
            if abs(c) != 1:
                raise DomainError(f"coefficient {c} on {cell} is not a unit")
            out.append(cell if c == 1 else -cell)
        return out

    def translate(self, offset: Iterable[int]) -> Chain:
        off = tuple(offset)
        return Chain(self.k, {KCell(tuple(a + b for a, b in zip(c.base, off)), c.dirs): v
                              for c, v in self.coeffs.items()})


def boundary(cell: KCell, box: BoxGeometry | None = None) -> Chain:
    """Alternating-sign boundary. For edges the vertex chain is end minus start."""
    k = cell.k
    if k < 1:
        raise DomainError("vertices have no boundary")
    if box is not None and not box.contains(cell):
        raise DomainError(f"{cell} is not inside the box")
    acc: dict[KCell, int] = {}
    if k == 1:
        j = cell.dirs[0]
        acc[KCell(_shift(cell.base, j), ())] = 1
        acc[KCell(cell.base, ())] = -1
    else:
        for i, j in enumerate(cell.dirs):
            rest = cell.dirs[:i] + cell.dirs[i + 1:]
            s = 1 if i % 2 == 0 else -1
            near = KCell(cell.base, rest)
            far = KCell(_shift(cell.base, j), rest)
            acc[near] = acc.get(near, 0) + s
            acc[far] = acc.get(far, 0) - s
    return cell.sign * Chain(k - 1, acc)


def boundary_chain(chain: Chain) -> Chain:
    acc: dict[KCell, int] = {}
    for cell, c in chain.coeffs.items():
        for face, s in boundary(cell).coeffs.items():
            acc[face] = acc.get(face, 0) + c * s
    return Chain(chain.k - 1, acc)


def coboundary(cell: KCell, box: BoxGeometry) -> Chain:
    """(k+1)-cells of the box whose boundary contains the cell, with matching signs."""
    k = cell.k
    if k >= box.m:
        raise DomainError(f"no coboundary for a {k}-cell in dimension {box.m}")
    pos = cell.positive
    acc: dict[KCell, int] = {}
    for j in range(box.m):
        if j in pos.dirs:
            continue
        dirs = tuple(sorted(pos.dirs + (j,)))
        for base in (pos.base, _shift(pos.base, j, -1)):
            up = KCell(base, dirs)
            if box.contains(up):
                c = boundary(up).coeffs.get(pos, 0)
                if c:
                    acc[up] = c
    return cell.sign * Chain(k + 1, acc)


def edge_support_connected(edges: Iterable[KCell]) -> bool:
    """True when the edges form a single connected component (empty counts as not connected)."""
    parent: dict[Vertex, Vertex] = {}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    seen = False
    for e in edges:
        seen = True
        a, b = e.vertices()
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    if not seen:
        return False
    return len({find(v) for v in parent}) == 1


def is_loop(chain: Chain) -> bool:
    return (chain.k == 1 and all(abs(c) == 1 for c in chain.coeffs.values())
            and boundary_chain(chain).is_zero() and edge_support_connected(chain.coeffs))


class LoopChain(Chain):
    """Unit-coefficient 1-chain with zero boundary and connected support."""

    def __init__(self, coeffs: Mapping[KCell, int] | Chain):
        if isinstance(coeffs, Chain):
            coeffs = coeffs.coeffs
        super().__init__(1, dict(coeffs))
        if not is_loop(self):
            raise DomainError("edges do not form a loop")


class SurfaceChain(Chain):
    """Unit-coefficient 2-chain. Its boundary is exposed as a LoopChain."""

    def __init__(self, coeffs: Mapping[KCell, int] | Chain):
        if isinstance(coeffs, Chain):
            coeffs = coeffs.coeffs
        super().__init__(2, dict(coeffs))
        if any(abs(c) != 1 for c in self.coeffs.values()):
            raise DomainError("surface coefficients must be in {-1, 0, 1}")

    @property
    def loop(self) -> LoopChain:
        return LoopChain(boundary_chain(self))


def path_chain(path: Iterable[Iterable[int]]) -> Chain:
    """1-chain traversing consecutive lattice vertices (unit steps)."""
    verts = [tuple(v) for v in path]
    cells = []
    for a, b in zip(verts, verts[1:]):
        diff = [bj - aj for aj, bj in zip(a, b)]
        nz = [j for j, d in enumerate(diff) if d]
        if len(nz) != 1 or abs(diff[nz[0]]) != 1:
            raise DomainError(f"{a} -> {b} is not a unit step")
        j = nz[0]
        cells.append(edge(a, j) if diff[j] == 1 else edge(b, j, -1))
    return Chain.from_cells(1, cells)


@dataclass(frozen=True)
class BoxGeometry:
    """Axis-aligned box of lattice vertices origin[j] .. origin[j] + shape[j] - 1."""

    shape: tuple[int, ...]
    origin: tuple[int, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) < 2 or min(shape) < 1:
            raise DomainError(f"bad box shape {self.shape}")
        object.__setattr__(self, "shape", shape)
        origin = (0,) * len(shape) if self.origin is None else tuple(int(o) for o in self.origin)
        if len(origin) != len(shape):
            raise DomainError("origin and shape have different lengths")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, m: int, n_side: int) -> BoxGeometry:
        """Vertices in [-n_side, n_side]^m."""
        return cls((2 * n_side + 1,) * m, (-n_side,) * m)

    @property
    def m(self) -> int:
        return len(self.shape)

    @property
    def lo(self) -> Vertex:
        return self.origin

    @property
    def hi(self) -> Vertex:
        return tuple(o + s - 1 for o, s in zip(self.origin, self.shape))

    def contains_vertex(self, x: Iterable[int]) -> bool:
        return all(l <= xi <= h for xi, l, h in zip(x, self.lo, self.hi))

    def contains(self, cell: KCell) -> bool:
        if len(cell.base) != self.m or not self.contains_vertex(cell.base):
            return False
        return all(cell.base[j] + 1 <= self.hi[j] for j in cell.dirs)

    def is_boundary_cell(self, cell: KCell) -> bool:
        """True when the cell lies in a face of the box (a fixed coordinate at its min or max)."""
        return any(cell.base[j] in (self.lo[j], self.hi[j])
                   for j in range(self.m) if j not in cell.dirs)

    def cells(self, k: int) -> tuple[KCell, ...]:
        return self._cells[k]

    def index(self, k: int) -> dict[KCell, int]:
        return self._index[k]

    def n_cells(self, k: int) -> int:
        return len(self._cells[k])

    @cached_property
    def _cells(self) -> list[tuple[KCell, ...]]:
        out = []
        ranges = [range(l, h + 1) for l, h in zip(self.lo, self.hi)]
        for k in range(self.m + 1):
            cells = []
            combos = list(itertools.combinations(range(self.m), k))
            for base in itertools.product(*ranges):
                for dirs in combos:
                    c = KCell(base, dirs)
                    if self.contains(c):
                        cells.append(c)
            out.append(tuple(cells))
        return out

    @cached_property
    def _index(self) -> list[dict[KCell, int]]:
        return [{c: i for i, c in enumerate(cells)} for cells in self._cells]

    def boundary_table(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(face indices, signs), each of shape (n_k, 2k), for all positive k-cells."""
        return self._boundary_tables[k]

    @cached_property
    def _boundary_tables(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for k in range(1, self.m + 1):
            idx = self.index(k - 1)
            faces = np.zeros((self.n_cells(k), 2 * k), dtype=np.int64)
            signs = np.zeros((self.n_cells(k), 2 * k), dtype=np.int64)
            for i, cell in enumerate(self.cells(k)):
                items = sorted(boundary(cell).coeffs.items())
                faces[i] = [idx[c] for c, _ in items]
                signs[i] = [s for _, s in items]
            out[k] = (faces, signs)
        return out

    def coboundary_lists(self, k: int) -> tuple[tuple[int, ...], ...]:
        """For each positive k-cell, indices of the (k+1)-cells of the box containing it."""
        return self._coboundary_lists[k]

    @cached_property
    def _coboundary_lists(self) -> dict[int, tuple[tuple[int, ...], ...]]:
        out = {}
        for k in range(self.m):
            lists: list[list[int]] = [[] for _ in range(self.n_cells(k))]
            faces, _ = self.boundary_table(k + 1)
            for up, row in enumerate(faces):
                for f in row:
                    lists[f].append(up)
            out[k] = tuple(tuple(sorted(x)) for x in lists)
        return out

    def check_inside(self, chain: Chain) -> None:
        for cell in chain.coeffs:
            if not self.contains(cell):
                raise DomainError(f"{cell} is not inside the box")


@dataclass(frozen=True, eq=False)
class Z2Form:
    """Z2-valued k-form stored as a 0/1 vector over the positive k-cells of a box."""

    box: BoxGeometry
    k: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.uint8) & 1
        if vals.shape != (self.box.n_cells(self.k),):
            raise DomainError(f"expected {self.box.n_cells(self.k)} values, got {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, box: BoxGeometry, k: int) -> Z2Form:
        return cls(box, k, np.zeros(box.n_cells(k), dtype=np.uint8))

    @classmethod
    def from_cells(cls, box: BoxGeometry, k: int, cells: Iterable[KCell]) -> Z2Form:
        """Indicator of the given cells, counted mod 2."""
        v = np.zeros(box.n_cells(k), dtype=np.uint8)
        idx = box.index(k)
        for c in cells:
            if c.k != k:
                raise DomainError("cell degree mismatch")
            try:
                v[idx[c.positive]] ^= 1
            except KeyError:
                raise DomainError(f"{c} is not inside the box") from None
        return cls(box, k, v)

    def __getitem__(self, cell: KCell) -> int:
        return int(self.values[self.box.index(self.k)[cell.positive]])

    def __add__(self, other: Z2Form) -> Z2Form:
        if other.k != self.k or other.box != self.box:
            raise DomainError("forms live on different spaces")
        return Z2Form(self.box, self.k, self.values ^ other.values)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Z2Form) and self.k == other.k and self.box == other.box
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.box, self.k, self.values.tobytes()))

    def support(self) -> list[KCell]:
        cells = self.box.cells(self.k)
        return [cells[i] for i in np.flatnonzero(self.values)]

    def is_zero(self) -> bool:
        return not self.values.any()


def exterior_derivative(f: Z2Form) -> Z2Form:
    """(df)(y) = sum of f over the boundary faces of y, mod 2."""
    if f.k >= f.box.m:
        raise DomainError(f"d of a top-degree ({f.k}) form is not defined")
    faces, _ = f.box.boundary_table(f.k + 1)
    vals = np.bitwise_xor.reduce(f.values[faces], axis=1) if faces.size else np.zeros(0, np.uint8)
    return Z2Form(f.box, f.k + 1, vals)


def eval_on_chain(f: Z2Form, q: Chain) -> int:
    if f.k != q.k:
        raise DomainError(f"form of degree {f.k} evaluated on a {q.k}-chain")
    idx = f.box.index(f.k)
    total = 0
    for cell, c in q.coeffs.items():
        if c % 2:
            try:
                total ^= int(f.values[idx[cell]])
            except KeyError:
                raise DomainError(f"{cell} is not inside the box") from None
    return total


def stokes_pair(sigma: Z2Form, q: Chain) -> tuple[int, int]:
    """(sum of sigma around the boundary of q, sum of d sigma over q)."""
    if sigma.k != 1 or q.k != 2:
        raise DomainError("stokes_pair needs a 1-form and a 2-chain")
    edge_chain = boundary_chain(q)
    if not is_loop(edge_chain):
        raise DomainError("the surface boundary is not a loop")
    return eval_on_chain(sigma, edge_chain), eval_on_chain(exterior_derivative(sigma), q)


@lru_cache(maxsize=32)
def _plaquette_rows(box: BoxGeometry) -> tuple[int, ...]:
    faces, _ = box.boundary_table(2)
    return tuple(sum(1 << int(e) for e in row) for row in faces)


@lru_cache(maxsize=32)
def d1_rank(box: BoxGeometry) -> int:
    return gf2.rank(_plaquette_rows(box), box.n_cells(1))


def poincare_count(box: BoxGeometry) -> int:
    """Number of 1-forms sigma with d sigma equal to any fixed exact 2-form."""
    return 2 ** (box.n_cells(1) - d1_rank(box))


def poincare_solve(nu: Z2Form) -> Z2Form | None:
    """Some sigma with d sigma = nu, or None when nu is not closed."""
    box = nu.box
    if nu.k != 2:
        raise DomainError("poincare_solve expects a 2-form")
    if box.m >= 3 and not exterior_derivative(nu).is_zero():
        return None
    x = gf2.solve(_plaquette_rows(box), [int(v) for v in nu.values], box.n_cells(1))
    if x is None:
        # closed forms on a box are exact, so reaching this means the elimination is broken
        raise ArithmeticError("GF(2) elimination failed on a closed 2-form")
    return Z2Form(box, 1, np.array(gf2.unpack(x, box.n_cells(1)), dtype=np.uint8))

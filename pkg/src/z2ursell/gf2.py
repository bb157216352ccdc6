"""Dense GF(2) linear algebra on bit-packed rows.

A matrix is a list of Python ints; bit j of row i is the entry (i, j).
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence


def pack(bits: Iterable[int]) -> int:
    """Pack a 0/1 sequence into an int, element j going to bit j."""
    out = 0
    for j, b in enumerate(bits):
        if b & 1:
            out |= 1 << j
    return out


def unpack(word: int, n: int) -> list[int]:
    return [(word >> j) & 1 for j in range(n)]


def rref(rows: Sequence[int], ncols: int) -> tuple[list[int], list[int]]:
    """Reduced row echelon form. Returns (nonzero rows, pivot columns)."""
    work = [r for r in rows if r]
    pivots: list[int] = []
    rank = 0
    for col in range(ncols):
        bit = 1 << col
        hit = next((i for i in range(rank, len(work)) if work[i] & bit), None)
        if hit is None:
            continue
        work[rank], work[hit] = work[hit], work[rank]
        prow = work[rank]
        for i in range(len(work)):
            if i != rank and work[i] & bit:
                work[i] ^= prow
        pivots.append(col)
        rank += 1
        if rank == len(work):
            break
    return work[:rank], pivots


def rank(rows: Sequence[int], ncols: int) -> int:
    return len(rref(rows, ncols)[1])


def solve(rows: Sequence[int], rhs: Sequence[int], ncols: int) -> int | None:
    """One solution x of A x = rhs, or None when the system is inconsistent.

    Free variables are set to zero.
    """
    if len(rows) != len(rhs):
        raise ValueError("row count and right-hand side length differ")
    flag = 1 << ncols
    aug = [r | (flag if b & 1 else 0) for r, b in zip(rows, rhs)]
    reduced, pivots = rref(aug, ncols + 1)
    x = 0
    for row, col in zip(reduced, pivots):
        if col == ncols:
            return None
        if row & flag:
            x |= 1 << col
    return x


def nullspace(rows: Sequence[int], ncols: int) -> list[int]:
    """Basis of {x : A x = 0}, one packed vector per free column."""
    reduced, pivots = rref(rows, ncols)
    pivset = set(pivots)
    basis = []
    for free in range(ncols):
        if free in pivset:
            continue
        v = 1 << free
        for row, col in zip(reduced, pivots):
            if row >> free & 1:
                v |= 1 << col
        basis.append(v)
    return basis


def span(basis: Sequence[int]):
    """Yield every element of the span, in Gray-code order starting at 0."""
    v = 0
    yield v
    for i in range(1, 1 << len(basis)):
        v ^= basis[(i & -i).bit_length() - 1]
        yield v

from hypothesis import given, settings
from hypothesis import strategies as st

from z2ursell import gf2

rows_strategy = st.integers(1, 9).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.integers(0, (1 << n) - 1), max_size=10)))


def test_pack_roundtrip():
    assert gf2.pack([1, 0, 1, 1]) == 0b1101
    assert gf2.unpack(0b1101, 4) == [1, 0, 1, 1]


def test_rank_of_known_matrix():
    # rows 110, 011, 101 are dependent over GF(2)
    assert gf2.rank([0b011, 0b110, 0b101], 3) == 2
    assert gf2.rank([], 4) == 0


def test_solve_inconsistent_returns_none():
    assert gf2.solve([0b01, 0b01], [0, 1], 2) is None


@given(rows_strategy)
@settings(max_examples=80, deadline=None)
def test_rank_nullity(data):
    n, rows = data
    basis = gf2.nullspace(rows, n)
    assert gf2.rank(rows, n) + len(basis) == n
    for v in basis:
        assert all(bin(r & v).count("1") % 2 == 0 for r in rows)
    assert gf2.rank(basis, n) == len(basis)


@given(rows_strategy, st.integers(0, 511))
@settings(max_examples=80, deadline=None)
def test_solve_reproduces_rhs(data, x_seed):
    n, rows = data
    x = x_seed & ((1 << n) - 1)
    rhs = [bin(r & x).count("1") % 2 for r in rows]
    y = gf2.solve(rows, rhs, n)
    assert y is not None
    assert [bin(r & y).count("1") % 2 for r in rows] == rhs


def test_span_lists_every_combination_once():
    basis = [0b001, 0b110]
    assert sorted(gf2.span(basis)) == [0b000, 0b001, 0b110, 0b111]

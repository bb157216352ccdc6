import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from z2ursell.dec import BoxGeometry, Chain, boundary_chain, is_loop
from z2ursell.errors import CapacityError, DegenerateInputError, DomainError
from z2ursell.loops import (
    build_stacked_family,
    c_coefficient,
    canonical_form,
    decompose_two_loops,
    edges_from_segments,
    factorize_ursell,
    min_doubly_decomposable_search,
    moments_from_psi,
    rectangle_surface,
    s_of_n,
    segments,
    special_loop,
)
from z2ursell.model import loop_parities, state_count_table
from z2ursell.ursell import SetPartition, partitions, ursell


def _s_oracle(n):
    return sum(math.factorial(len(p) - 1) for p in partitions(n) if len(p) % 2 == 0)


def test_s_of_n_matches_partition_oracle():
    for n in range(1, 8):
        assert s_of_n(n) == _s_oracle(n)
    assert [s_of_n(n) for n in range(1, 8)] == [0, 1, 3, 13, 75, 541, 4683]


def test_s_of_n_guard():
    assert all(s_of_n(n) > 0 for n in range(2, 11))
    with pytest.raises(CapacityError):
        s_of_n(15)


def test_c_coefficient_cases():
    p = SetPartition.from_blocks([[0, 1], [2], [3]])
    assert c_coefficient([], p) == 0
    for i in range(4):
        assert c_coefficient([i], p) == 1
    assert c_coefficient([0, 2], p) == 2
    assert c_coefficient([0, 1], p) == 0


def test_c_coefficient_single_block():
    full = SetPartition.from_blocks([range(4)])
    for k in range(5):
        for I in itertools.combinations(range(4), k):
            assert c_coefficient(I, full) == k % 2


def test_stacked_family():
    box = BoxGeometry((4, 5, 4))
    fam = build_stacked_family((0, 0, 0), 2, 3, 3, box)
    assert fam.loop_length == 10
    assert len(fam.surfaces[0]) == 6
    for q, g in zip(fam.surfaces, fam.loops):
        assert boundary_chain(q) == g
        assert boundary_chain(g).is_zero()
    supports = [set(q.coeffs) for q in fam.surfaces]
    assert all(a.isdisjoint(b) for a, b in itertools.combinations(supports, 2))


def test_stacked_family_must_fit():
    with pytest.raises(DomainError):
        build_stacked_family((0, 0, 0), 1, 1, 4, BoxGeometry((2, 2, 3)))


def test_unit_stack_has_unit_squares():
    fam = build_stacked_family((0, 0, 0), 1, 1, 2, BoxGeometry((2, 2, 3)))
    assert all(len(g) == 4 for g in fam.loops)


@pytest.mark.parametrize("kind,length", [("fig3_10edge", 10), ("fig4_12edge", 12), ("fig5_16edge_2d", 16)])
def test_special_loops_are_loops(kind, length):
    g = special_loop(kind)
    assert len(g) == length
    assert is_loop(Chain(1, dict(g.coeffs)))


def test_special_loop_box_check():
    with pytest.raises(DomainError):
        special_loop("fig3_10edge", (0, 0, 0), BoxGeometry((2, 2, 2)))
    with pytest.raises(DomainError):
        special_loop("pentagon")


def test_hinged_ten_edge_loop_has_three_splits():
    pairs = decompose_two_loops(special_loop("fig3_10edge"))
    assert len(pairs) == 3
    assert all(p.sizes() == (4, 6) for p in pairs)


def test_twelve_edge_loop_splits():
    pairs = decompose_two_loops(special_loop("fig4_12edge"))
    assert sorted(p.sizes() for p in pairs) == [(4, 8), (4, 8), (6, 6)]


def test_overlapping_squares_splits():
    # the two 2x2 boundaries, plus two splits into L-shaped three-plaquette boundaries
    pairs = decompose_two_loops(special_loop("fig5_16edge_2d"))
    assert sorted(p.sizes() for p in pairs) == [(4, 12), (8, 8), (8, 8)]


def test_rectangle_has_no_split():
    assert decompose_two_loops(special_loop("rectangle", L1=2, L2=3)) == []


def test_split_parts_partition_the_loop():
    g = special_loop("fig4_12edge")
    for p in decompose_two_loops(g):
        a, b = p.loops()
        assert set(a.coeffs).isdisjoint(b.coeffs)
        assert set(a.coeffs) | set(b.coeffs) == set(g.coeffs)
        assert is_loop(a) and is_loop(b)


def test_canonical_form_symmetry_and_translation():
    segs = segments(special_loop("fig5_16edge_2d").support())
    moved = segments(special_loop("fig5_16edge_2d", (3, -2)).support())
    mirrored = [((-a[0], a[1]), (-b[0], b[1])) for a, b in segs]
    assert canonical_form(segs) == canonical_form(moved) == canonical_form(mirrored)
    assert canonical_form(segs, symmetric=False) == canonical_form(moved, symmetric=False)
    assert len(edges_from_segments(segs)) == 16


def test_search_counts_small():
    r = min_doubly_decomposable_search(2, 10)
    assert (r.loops_examined, r.loops_examined_mod_symmetry) == (48, 13)
    assert not r


def test_search_with_self_touching_parts_finds_twelve_edge_chain():
    # three unit squares chained corner to corner split in two ways if parts may touch themselves
    r = min_doubly_decomposable_search(2, 12, simple_parts=False)
    assert r and min(len(s) for s in r.hits) == 12


def test_search_guard():
    with pytest.raises(CapacityError):
        min_doubly_decomposable_search(2, 18)
    with pytest.raises(DomainError):
        min_doubly_decomposable_search(3, 8)


@pytest.mark.slow
def test_search_sixteen_finds_overlapping_squares():
    r = min_doubly_decomposable_search(2, 16)
    assert (r.loops_examined, r.loops_examined_mod_symmetry) == (5351, 769)
    assert len(r.hits_mod_symmetry) == 4
    fig5 = canonical_form(segments(special_loop("fig5_16edge_2d").support()))
    assert r.hits_mod_symmetry[fig5] == 3
    assert all(len(s) == 16 for s in r.hits)


def _random_moments(n, rng):
    vals = {}

    def mom(block):
        key = frozenset(block)
        if not key:
            return 1.0
        if key not in vals:
            vals[key] = rng.uniform(0.2, 1.0)
        return vals[key]
    return mom


@given(st.integers(1, 6), st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_factorisation_reconstructs_ursell(n, seed):
    mom = _random_moments(n, random.Random(seed))
    f = factorize_ursell(n, mom)
    assert abs(f.value - ursell(n, mom)) < 1e-12


def test_factorisation_on_exact_moments():
    box = BoxGeometry((2, 2, 4))
    fam = build_stacked_family((0, 0, 0), 1, 1, 3, box)
    table = state_count_table(box, loop_parities(box, fam.loops))
    for beta in (0.5, 1.5):
        def mom(block, beta=beta):
            return table.moment(beta, sum(1 << i for i in block))
        f = factorize_ursell(3, mom)
        assert abs(f.value - ursell(3, mom)) < 1e-12
        for p, b in f.b.items():
            assert b * (-1) ** (len(p) - 1) >= 0
        assert f.v_plus >= 0 >= f.v_minus


def test_factorisation_rejects_zero_full_moment():
    with pytest.raises(DegenerateInputError):
        factorize_ursell(2, lambda b: 0.0 if len(b) == 2 else 0.5)


def test_singleton_weights_do_not_change_normalised_terms():
    rng = random.Random(9)
    n = 4
    psi = {frozenset(I): rng.uniform(0, 0.3) for k in range(1, n + 1) for I in itertools.combinations(range(n), k)}
    before = factorize_ursell(n, moments_from_psi(psi))
    psi[frozenset([2])] += 0.5
    after = factorize_ursell(n, moments_from_psi(psi))
    assert abs(before.a_full - after.a_full) > 1e-3
    for p in before.b:
        assert abs(before.b[p] - after.b[p]) < 1e-12


def test_rectangle_surface_area():
    q = rectangle_surface((0, 0, 0), 2, 3)
    assert len(q) == 6
    assert len(q.loop) == 10

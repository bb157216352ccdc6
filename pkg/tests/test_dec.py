import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from z2ursell.dec import (
    BoxGeometry,
    Chain,
    KCell,
    LoopChain,
    SurfaceChain,
    Z2Form,
    boundary,
    boundary_chain,
    coboundary,
    d1_rank,
    edge,
    eval_on_chain,
    exterior_derivative,
    is_loop,
    path_chain,
    plaquette,
    poincare_count,
    poincare_solve,
    stokes_pair,
)
from z2ursell.errors import DomainError


def test_cell_counts_3cube(box333):
    assert [box333.n_cells(k) for k in range(4)] == [27, 54, 36, 8]


def test_cell_counts_2d():
    box = BoxGeometry((5, 5))
    assert [box.n_cells(k) for k in range(3)] == [25, 40, 16]


def test_centered_box():
    box = BoxGeometry.centered(3, 2)
    assert box.lo == (-2, -2, -2) and box.hi == (2, 2, 2)


def test_negative_cell_has_negated_boundary():
    p = plaquette((0, 0), 0, 1)
    assert boundary(-p) == -boundary(p)


def test_unit_square_boundary_is_a_loop():
    q = Chain.from_cells(2, [plaquette((0, 0, 0), 0, 1)])
    g = boundary_chain(q)
    assert len(g) == 4
    assert is_loop(g)
    assert boundary_chain(g).is_zero()


@pytest.mark.parametrize("k", [2, 3])
def test_boundary_of_boundary_vanishes(box333, k):
    for cell in box333.cells(k):
        assert boundary_chain(boundary(cell)).is_zero()


def test_boundary_of_boundary_vanishes_4d():
    box = BoxGeometry((2, 2, 2, 2))
    for k in (2, 3, 4):
        for cell in box.cells(k):
            assert boundary_chain(boundary(cell)).is_zero()


def test_coboundary_sizes(box333):
    assert len(coboundary(edge((1, 1, 0), 2), box333)) == 4
    assert len(coboundary(edge((0, 1, 0), 2), box333)) == 3
    assert len(coboundary(edge((0, 0, 0), 2), box333)) == 2


def test_coboundary_is_adjoint_of_boundary(box333):
    for e in box333.cells(1):
        for p, c in coboundary(e, box333).coeffs.items():
            assert boundary(p).coeffs[e] == c


def test_coboundary_of_top_cell_rejected(box333):
    with pytest.raises(DomainError):
        coboundary(box333.cells(3)[0], box333)


def test_kcell_rejects_unsorted_dirs():
    with pytest.raises(DomainError):
        KCell((0, 0), (1, 0))


def test_chain_normalises_signs():
    e = edge((0, 0), 0)
    c = Chain.from_cells(1, [e, -e, -e])
    assert c.coeffs == {e: -1}


def test_loop_chain_rejects_open_path():
    with pytest.raises(DomainError):
        LoopChain(path_chain([(0, 0), (1, 0), (1, 1)]))


def test_surface_chain_loop():
    q = SurfaceChain({plaquette((0, 0), 0, 1): 1, plaquette((1, 0), 0, 1): 1})
    assert len(q.loop) == 6


def test_d_of_single_interior_edge_has_four_plaquettes(box333):
    sigma = Z2Form.from_cells(box333, 1, [edge((1, 1, 0), 2)])
    assert len(exterior_derivative(sigma).support()) == 4


def test_dd_vanishes_on_random_forms(box333):
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = Z2Form(box333, 1, rng.integers(0, 2, box333.n_cells(1), dtype=np.uint8))
        assert exterior_derivative(exterior_derivative(f)).is_zero()


@given(st.lists(st.integers(0, 1), min_size=54, max_size=54), st.integers(0, 35))
@settings(max_examples=50, deadline=None)
def test_stokes_on_random_forms_and_plaquettes(bits, p_idx):
    box = BoxGeometry((3, 3, 3))
    sigma = Z2Form(box, 1, np.array(bits, dtype=np.uint8))
    q = Chain.from_cells(2, [box.cells(2)[p_idx]])
    lhs, rhs = stokes_pair(sigma, q)
    assert lhs == rhs


def test_stokes_on_rectangle():
    box = BoxGeometry((4, 4))
    rng = np.random.default_rng(0)
    q = Chain.from_cells(2, [plaquette((x, y), 0, 1) for x in range(2) for y in range(3)])
    for _ in range(10):
        sigma = Z2Form(box, 1, rng.integers(0, 2, box.n_cells(1), dtype=np.uint8))
        assert eval_on_chain(sigma, boundary_chain(q)) == eval_on_chain(exterior_derivative(sigma), q)


def test_poincare_solution_is_a_preimage(box333):
    rng = np.random.default_rng(1)
    for _ in range(10):
        sigma = Z2Form(box333, 1, rng.integers(0, 2, box333.n_cells(1), dtype=np.uint8))
        nu = exterior_derivative(sigma)
        assert exterior_derivative(poincare_solve(nu)) == nu


def test_poincare_rejects_non_closed(box333):
    nu = Z2Form.from_cells(box333, 2, [box333.cells(2)[0]])
    assert poincare_solve(nu) is None


def test_preimage_count_is_gauge_orbit():
    # kernel of d on 1-forms has dimension |vertices| - 1 on a box
    box = BoxGeometry((2, 2, 2))
    assert d1_rank(box) == 5
    assert poincare_count(box) == 128
    assert poincare_count(BoxGeometry((3, 3, 3))) == 2 ** 26


def test_boundary_cells(box333):
    assert box333.is_boundary_cell(plaquette((0, 0, 0), 0, 1))
    assert not box333.is_boundary_cell(plaquette((0, 0, 1), 0, 1))

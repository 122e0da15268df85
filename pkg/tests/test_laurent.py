import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grscatter.laurent import (
    DimensionError,
    IndexBox,
    LaurentMatrixSeries,
    Sublattice,
    finite_boundary,
    indices_up_to,
    series_add,
    series_adjoint,
    series_convolve,
    sublattice_membership,
    unit,
)


def random_series(rng, d, shape, terms, spread=2):
    coeffs = {}
    for _ in range(terms):
        n = tuple(int(a) for a in rng.integers(-spread, spread + 1, size=d))
        coeffs[n] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return LaurentMatrixSeries(d, shape, coeffs)


def loop_convolve(a, b):
    # independent oracle: scalar loops over both supports
    out = {}
    for n, fa in a.coeffs.items():
        for m, fb in b.coeffs.items():
            key = tuple(x + y for x, y in zip(n, m))
            acc = out.setdefault(key, np.zeros((a.shape[0], b.shape[1]), dtype=complex))
            for i in range(a.shape[0]):
                for j in range(b.shape[1]):
                    for k in range(a.shape[1]):
                        acc[i, j] += fa[i, k] * fb[k, j]
    return out


# --- oracles --------------------------------------------------------------------------


def test_convolution_matches_double_loop_oracle(rng):
    a = random_series(rng, 2, (2, 3), 3)
    b = random_series(rng, 2, (3, 2), 3)
    got = series_convolve(a, b)
    want = loop_convolve(a, b)
    for n in set(got.support()) | set(want):
        assert np.allclose(got.coeff(n), want.get(n, 0), atol=1e-12)


def test_addition_matches_scalar_loop_oracle(rng):
    a = random_series(rng, 2, (2, 2), 4)
    b = random_series(rng, 2, (2, 2), 4)
    got = series_add(a, b)
    for n in set(a.support()) | set(b.support()):
        for i in range(2):
            for j in range(2):
                assert got.coeff(n)[i, j] == pytest.approx(a.coeff(n)[i, j] + b.coeff(n)[i, j], abs=1e-14)


# --- examples -----------------------------------------------------------------------


def test_zero_is_additive_identity(rng):
    f = random_series(rng, 2, (2, 2), 3)
    assert series_add(f, LaurentMatrixSeries.zero(2, (2, 2))).max_abs_diff(f) == 0.0


def test_cancellation_empties_support():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    s = series_add(LaurentMatrixSeries.monomial((1, 0), M), LaurentMatrixSeries.monomial((1, 0), -M))
    assert s.support() == []


def test_monomial_products():
    z1 = LaurentMatrixSeries.monomial((1, 0), [[1.0]])
    z2 = LaurentMatrixSeries.monomial((0, 1), [[1.0]])
    prod = series_convolve(z1, z2)
    assert prod.support() == [(1, 1)]
    sq = series_convolve(prod, prod)
    assert sq.support() == [(2, 2)] and sq.coeff((2, 2))[0, 0] == 1


def test_adjoint_reverses_indices():
    M = np.array([[1.0, 2j], [0.0, 3.0]])
    adj = series_adjoint(LaurentMatrixSeries.monomial((1, 0), M))
    assert adj.support() == [(-1, 0)]
    assert np.array_equal(adj.coeff((-1, 0)), M.conj().T)
    s = series_adjoint(LaurentMatrixSeries.monomial((1, 1), [[1.0]]))
    assert s.support() == [(-1, -1)]


def test_adjoint_is_involution(rng):
    f = random_series(rng, 3, (2, 3), 5)
    assert series_adjoint(series_adjoint(f)).max_abs_diff(f) == 0.0


def test_membership_examples():
    assert sublattice_membership(Sublattice.BALANCED, (1, -1))
    assert not sublattice_membership(Sublattice.QUADRANT, (0, -1))
    assert sublattice_membership(Sublattice.FULL, (-5, 7))
    assert not sublattice_membership(Sublattice.EMPTY, (0, 0))
    assert sublattice_membership(Sublattice.COMPLEMENT, (0, -1))


def test_balanced_boundary_is_the_hyperplane():
    box = IndexBox.cube(2, -2, 2)
    want = {(-2, 2), (-1, 1), (0, 0), (1, -1), (2, -2)}
    assert finite_boundary(Sublattice.BALANCED, 0, box) == want
    assert finite_boundary(Sublattice.BALANCED, 1, box) == want


def test_quadrant_boundary_is_the_face():
    # axis 0 here is the first axis
    assert finite_boundary(Sublattice.QUADRANT, 0, IndexBox.cube(2, 0, 1)) == {(0, 0), (0, 1)}


def test_full_lattice_has_no_finite_boundary():
    for k in range(3):
        assert finite_boundary(Sublattice.FULL, k, IndexBox.cube(3, -1, 1)) == set()


def test_box_iteration_is_lexicographic_and_sized():
    box = IndexBox((0, -1), (1, 1))
    pts = box.indices()
    assert pts == sorted(pts) and len(pts) == len(box) == 6


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        LaurentMatrixSeries(2, (1, 1), {(1,): [[1.0]]})
    with pytest.raises(DimensionError):
        series_add(LaurentMatrixSeries.zero(2, (1, 1)), LaurentMatrixSeries.zero(2, (2, 2)))


def test_empty_box_rejected():
    with pytest.raises(ValueError):
        IndexBox((1, 0), (0, 0))


def test_indices_up_to_counts():
    assert len(indices_up_to(2, 1)) == 5
    assert len(indices_up_to(2, 2, nonnegative=True)) == 6
    assert indices_up_to(1, -1) == []


def test_horizon_propagates_to_minimum():
    a = LaurentMatrixSeries(1, (1, 1), {(1,): [[1.0]]}, horizon=3)
    b = LaurentMatrixSeries(1, (1, 1), {(0,): [[1.0]]}, horizon=5)
    assert series_convolve(a, b).horizon == 3
    assert series_add(a, b).horizon == 3


# --- properties ---------------------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_convolution_associative_and_distributive(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_series(rng, 2, (2, 2), 3) for _ in range(3))
    left = series_convolve(series_convolve(a, b), c)
    right = series_convolve(a, series_convolve(b, c))
    scale = max(1.0, max(np.max(np.abs(v)) for v in left.coeffs.values()))
    assert left.max_abs_diff(right) <= 1e-12 * scale
    dist = series_convolve(series_add(a, b), c).max_abs_diff(series_add(series_convolve(a, c), series_convolve(b, c)))
    assert dist <= 1e-12 * scale


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_adjoint_anti_multiplicative(seed):
    rng = np.random.default_rng(seed)
    a = random_series(rng, 2, (2, 3), 3)
    b = random_series(rng, 2, (3, 2), 3)
    lhs = series_adjoint(series_convolve(a, b))
    rhs = series_convolve(series_adjoint(b), series_adjoint(a))
    assert lhs.max_abs_diff(rhs) <= 1e-12 * max(1.0, max(np.max(np.abs(v)) for v in lhs.coeffs.values()))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(-3, 0), st.integers(0, 3))
def test_sublattices_are_shift_invariant(d, lo, hi):
    box = IndexBox.cube(d, lo, hi)
    for omega in Sublattice:
        # the quadrant complement is invariant under backward shifts instead
        step = -1 if omega is Sublattice.COMPLEMENT else 1
        for n in box:
            if omega.contains(n):
                assert all(omega.contains(tuple(a + step * b for a, b in zip(n, unit(d, k)))) for k in range(d))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(-3, 0), st.integers(0, 3))
def test_balanced_boundary_independent_of_axis(d, lo, hi):
    box = IndexBox.cube(d, lo, hi)
    first = finite_boundary(Sublattice.BALANCED, 0, box)
    assert all(finite_boundary(Sublattice.BALANCED, k, box) == first for k in range(d))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import feedback_oracle, random_load
from grscatter.agler import kernels_from_realization
from grscatter.catalog import random_colligation
from grscatter.colligation import GRColligation, classify_minimality, validate_colligation
from grscatter.laurent import DimensionError, LaurentMatrixSeries
from grscatter.realization import (
    LoadColligation,
    NotStrictlyCloselyConnected,
    build_lurking_data,
    build_u0,
    default_window,
    random_u0,
    realize_scc,
    realize_scc_detailed,
    redheffer_close,
    trivial_load,
    unitary_equivalence_check,
    verify_compatibility,
)


# --- oracles --------------------------------------------------------------------------


def test_redheffer_matches_feedback_solve(rng):
    u0 = random_u0(rng, [2, 1], 1, 1, 2)
    load = random_load(rng, 2, [1, 1], 2)
    closed = redheffer_close(u0, load)
    for _ in range(5):
        state = rng.standard_normal(closed.state_dim) + 1j * rng.standard_normal(closed.state_dim)
        u = rng.standard_normal(1) + 1j * rng.standard_normal(1)
        want_x, want_y = feedback_oracle(u0, load, state, u)
        assert np.max(np.abs(closed.A @ state + closed.B @ u - want_x)) < 1e-12
        assert np.max(np.abs(closed.C @ state + closed.D @ u - want_y)) < 1e-12
    assert validate_colligation(closed).max_residual < 1e-12


# --- lurking isometry ------------------------------------------------------------------------


def test_lurking_grams_agree_on_examples(e1, e2):
    for U in (e1, e2):
        sys = kernels_from_realization(U, 8)
        assert build_lurking_data(sys, default_window(sys)).gram_residual < 1e-10


def test_example_two_round_trip_is_equivalent(e2):
    sys = kernels_from_realization(e2, 10)
    U, rep = realize_scc_detailed(sys)
    assert U.state_dim == 8 and rep.gram_residual < 1e-10
    assert validate_colligation(U).max_residual < 1e-9
    assert unitary_equivalence_check(U, e2).status == "equivalent"
    assert verify_compatibility(U, sys, 6) < 1e-10


def test_shift_round_trip(shift):
    U = realize_scc(kernels_from_realization(shift, 6))
    assert unitary_equivalence_check(U, shift).status == "equivalent"


def test_example_one_reports_defect(e1):
    with pytest.raises(NotStrictlyCloselyConnected) as info:
        realize_scc(kernels_from_realization(e1, 8))
    assert info.value.domain_defect == 1 and info.value.range_defect == 1


# --- unitary extension and closure ------------------------------------------------------


def test_example_one_extension_and_trivial_load(e1):
    sys = kernels_from_realization(e1, 8)
    u0 = build_u0(sys)
    assert (u0.l_dim, u0.l_prime_dim) == (1, 1)
    assert u0.unitarity_residual < 1e-10
    assert np.all(u0.blocks()[2][2] == 0)
    closed = redheffer_close(u0, trivial_load(2, 1))
    assert validate_colligation(closed).max_residual < 1e-10
    assert verify_compatibility(closed, sys, 6) < 1e-10


def test_load_slot_mismatch_raises(e1):
    u0 = build_u0(kernels_from_realization(e1, 8))
    with pytest.raises(DimensionError):
        redheffer_close(u0, trivial_load(2, 2))


def test_load_blocks_must_match_declared_slots():
    with pytest.raises(DimensionError):
        LoadColligation(trivial_load(1, 2).colligation, 0, 1, 1)


# --- compatibility and equivalence ---------------------------------------------------------


def test_perturbed_constant_term_breaks_compatibility(e2):
    sys = kernels_from_realization(e2, 8)
    eps = 1e-4
    coeffs = sys.S.coeffs
    coeffs[(0, 0)] = coeffs.get((0, 0), np.zeros((3, 3))) + eps * np.eye(3)
    bad = sys.with_series(LaurentMatrixSeries(2, (3, 3), coeffs, sys.S.horizon))
    assert verify_compatibility(e2, bad, 4) >= eps * (1 - 1e-9)


def test_conjugated_copy_is_equivalent(e2, rng):
    # W acts unitarily inside each projection range, so it commutes with the projections
    W = np.zeros((8, 8), dtype=complex)
    for Q in e2.projection_bases():
        V = unitary_group.rvs(Q.shape[1], random_state=rng)
        W += Q @ V @ Q.conj().T
    moved = GRColligation(W @ e2.A @ W.conj().T, W @ e2.B, e2.C @ W.conj().T, e2.D, e2.projections)
    res = unitary_equivalence_check(e2, moved)
    assert res.status == "equivalent"
    assert np.max(np.abs(res.intertwiner - W)) < 1e-8


def test_rotated_input_not_equivalent(e2, rng):
    V = unitary_group.rvs(3, random_state=rng)
    other = GRColligation(e2.A, e2.B @ V, e2.C, e2.D @ V, e2.projections)
    assert validate_colligation(other).passed
    assert unitary_equivalence_check(e2, other).status == "not_equivalent"


def test_equivalence_inconclusive_without_scc(e1):
    assert unitary_equivalence_check(e1, e1).status == "inconclusive"


# --- properties ---------------------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_random_extension_closure_is_unitary_and_matches_loop(seed):
    rng = np.random.default_rng(seed)
    dims = [int(rng.integers(0, 3)), int(rng.integers(1, 3))]
    l_dim = int(rng.integers(1, 3))
    u0 = random_u0(rng, dims, 1, 1, l_dim)
    assert u0.unitarity_residual < 1e-12
    load = random_load(rng, 2, [int(rng.integers(0, 2)), 1], l_dim)
    closed = redheffer_close(u0, load)
    assert validate_colligation(closed).max_residual < 1e-9
    state = rng.standard_normal(closed.state_dim)
    u = rng.standard_normal(1)
    want_x, want_y = feedback_oracle(u0, load, state, u)
    assert np.max(np.abs(closed.A @ state + closed.B @ u - want_x)) < 1e-10
    assert np.max(np.abs(closed.C @ state + closed.D @ u - want_y)) < 1e-10


@settings(max_examples=8, deadline=None)
@given(seeds)
def test_scc_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        U = random_colligation(rng, 2, [int(rng.integers(1, 3)), int(rng.integers(1, 3))])
        if classify_minimality(U).strictly_cc:
            break
    else:
        pytest.skip("no strictly closely connected draw")
    sys = kernels_from_realization(U, 2 * U.state_dim + 4)
    V = realize_scc(sys)
    assert unitary_equivalence_check(V, U).status == "equivalent"

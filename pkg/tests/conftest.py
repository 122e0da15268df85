import itertools

import numpy as np
import pytest

from scipy.stats import unitary_group

from grscatter.catalog import example_one, example_two, random_colligation, shift_realization
from grscatter.realization import LoadColligation, trivial_load


@pytest.fixture(scope="session")
def e1():
    return example_one()


@pytest.fixture(scope="session")
def e2():
    return example_two()


@pytest.fixture(scope="session")
def shift():
    return shift_realization()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def words_with_counts(n):
    """Every word over ``range(len(n))`` in which letter ``k`` occurs ``n[k]`` times."""
    letters = [k for k, c in enumerate(n) for _ in range(c)]
    return sorted(set(itertools.permutations(letters)))


def word_calculus(U, n):
    """``sum over words w with counts n of P_{w_N} A ... P_{w_1} A`` by brute enumeration."""
    out = np.zeros((U.state_dim, U.state_dim), dtype=complex)
    for word in words_with_counts(n):
        prod = np.eye(U.state_dim, dtype=complex)
        for k in word:
            prod = U.projections[k] @ U.A @ prod
        out += prod
    return out


def word_transfer(U, n):
    """Transfer coefficient ``S_n`` from the expansion of ``C (I - ZA)^{-1} Z B`` word by word."""
    if not any(n):
        return U.D.astype(complex)
    out = np.zeros((U.out_dim, U.in_dim), dtype=complex)
    for word in words_with_counts(n):
        # the last letter applied to B is the word's first letter
        prod = U.projections[word[0]] @ U.B
        for k in word[1:]:
            prod = U.projections[k] @ U.A @ prod
        out += U.C @ prod
    return out


def feedback_oracle(u0, load, state, u):
    """Solve the interconnection equations for the loop signals and return ``(next_state, y)``.

    Unknowns are the slot signals ``l`` (out of ``U_0``) and ``l'`` (out of
    the load); both loop equations are solved together by least squares.
    """
    t = load.colligation
    R = u0.state_dim
    x, xa = state[:R], state[R:]
    M = u0.matrix
    L, Lp = u0.l_dim, u0.l_prime_dim
    # rows of U_0 that produce l, columns that take l'
    rows_l = slice(R + u0.out_dim, R + u0.out_dim + L)
    cols_in = slice(0, R + u0.in_dim)
    cols_lp = slice(R + u0.in_dim, R + u0.in_dim + Lp)
    xu = np.concatenate([x, u])
    # l = M[l, :xu] xu + M[l, l'] l' ;  l' = T21 xa + T22 l
    lhs = np.block([[np.eye(L), -M[rows_l, cols_lp]], [-t.D, np.eye(Lp)]])
    rhs = np.concatenate([M[rows_l, cols_in] @ xu, t.C @ xa])
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    l, lp = sol[:L], sol[L:]
    top = M[: R + u0.out_dim, cols_in] @ xu + M[: R + u0.out_dim, cols_lp] @ lp
    new_aux = t.A @ xa + t.B @ l
    return np.concatenate([top[:R], new_aux]), top[R:]


def random_load(rng, d, aux_dims, l_dim):
    """Random unitary load with square slots; no auxiliary state when ``aux_dims`` sums to zero."""
    if sum(aux_dims):
        U = random_colligation(rng, d, aux_dims, io_dim=l_dim)
    else:
        V = unitary_group.rvs(l_dim, random_state=rng) if l_dim > 1 else None
        U = trivial_load(d, l_dim, V).colligation
    return LoadColligation(U, U.state_dim, l_dim, l_dim)

"""Realizations from augmented Agler decompositions.

The kernel identity of an Agler system says that the map

    [H_{k,m}^* u]_k (+) (S_m^* u_* + delta_{m,0} u)
        -> [H_{k,m-e_k}^* u]_k (+) (delta_{m,0} u_* + S_{-m} u),   u = (u_*, u),

preserves inner products, so it extends from the span of its domain
columns to an isometry ``V`` (the lurking isometry).  Every unitary
colligation compatible with the system arises from ``V`` by closing a
unitary load across the complements of the domain and range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .agler import AglerSystem, kernels_from_realization
from .colligation import (
    GRColligation,
    calculus,
    complement_basis,
    krylov_closure,
    orthonormal_span,
)
from .laurent import DimensionError, MultiIndex, as_index, indices_up_to, neg, sub, unit, zero_index

RANK_TOL = 1e-9


class IsometryError(ArithmeticError):
    """The domain and range Gram matrices of the lurking data differ."""


class NotStrictlyCloselyConnected(ArithmeticError):
    """The lurking data does not span; a load is needed to close the realization."""

    def __init__(self, defect_dim: int, domain_defect: int, range_defect: int):
        super().__init__(
            f"domain/range spans are deficient by {domain_defect}/{range_defect} dimensions; "
            "supply a load to close the realization"
        )
        self.defect_dim = defect_dim
        self.domain_defect = domain_defect
        self.range_defect = range_defect


@dataclass(frozen=True)
class LurkingData:
    """Domain and range columns of the lurking isometry over a window.

    Columns are ordered by window index, then by basis vector of
    ``out (+) in``.
    """

    D_mat: np.ndarray
    R_mat: np.ndarray
    window: tuple[MultiIndex, ...]
    inner_dims: tuple[int, ...]

    @property
    def gram_residual(self) -> float:
        if self.D_mat.size == 0:
            return 0.0
        diff = self.D_mat.conj().T @ self.D_mat - self.R_mat.conj().T @ self.R_mat
        return float(np.max(np.abs(diff)))


def build_lurking_data(sys: AglerSystem, window: Sequence[MultiIndex]) -> LurkingData:
    """Domain and range columns for every ``m`` in ``window``."""
    d, q, p = sys.d, sys.out_dim, sys.in_dim
    dims = tuple(h.inner_dim for h in sys.factors)
    R = sum(dims)
    window = tuple(as_index(m) for m in window)
    if not window:
        return LurkingData(np.zeros((R + p, 0), complex), np.zeros((R + q, 0), complex), window, dims)
    S = sys.S
    z = zero_index(d)
    dom, rng = [], []
    for m in window:
        top_d = [h.coeff(m).conj().T for h in sys.factors]
        top_r = [h.coeff(sub(m, unit(d, k))).conj().T for k, h in enumerate(sys.factors)]
        delta = 1.0 if m == z else 0.0
        slot_d = np.hstack([S.coeff(m).conj().T, delta * np.eye(p)])
        slot_r = np.hstack([delta * np.eye(q), S.coeff(neg(m))])
        dom.append(np.vstack(top_d + [slot_d]))
        rng.append(np.vstack(top_r + [slot_r]))
    return LurkingData(np.hstack(dom), np.hstack(rng), window, dims)


def _rank(mat: np.ndarray, tol: float = RANK_TOL) -> int:
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > tol * max(float(sv[0]), 1.0)))


def default_window(sys: AglerSystem) -> tuple[MultiIndex, ...]:
    """``|m|_1 <= sum(inner dims) + 1``, grown while the column rank still increases.

    Limited to where the system's coefficients are exact.
    """
    R = sum(h.inner_dim for h in sys.factors)
    limit = None if sys.horizon is None else sys.horizon - 1
    degree = R + 1 if limit is None else max(0, min(R + 1, limit))
    ranks = []
    while True:
        window = tuple(indices_up_to(sys.d, degree))
        data = build_lurking_data(sys, window)
        ranks.append((_rank(data.D_mat), _rank(data.R_mat)))
        if len(ranks) >= 2 and ranks[-1] == ranks[-2]:
            return window
        if limit is not None and degree >= limit:
            return window
        degree += 1


@dataclass(frozen=True)
class RealizationReport:
    raw_unitarity_residual: float
    polar_correction: float
    gram_residual: float
    window_size: int


def _coordinate_projections(dims: Sequence[int]) -> tuple[np.ndarray, ...]:
    R = sum(dims)
    out, start = [], 0
    for r in dims:
        P = np.zeros((R, R))
        P[start : start + r, start : start + r] = np.eye(r)
        out.append(P)
        start += r
    return tuple(out)


def realize_scc_detailed(sys: AglerSystem, window=None) -> tuple[GRColligation, RealizationReport]:
    """:func:`realize_scc` plus the numerical bookkeeping of the solve."""
    window = default_window(sys) if window is None else tuple(window)
    data = build_lurking_data(sys, window)
    R = sum(data.inner_dims)
    q, p = sys.out_dim, sys.in_dim
    gram = data.gram_residual
    if gram > 1e-8:
        raise IsometryError(f"domain and range Grams differ by {gram:.2e}")
    rd, rr = _rank(data.D_mat), _rank(data.R_mat)
    if rd < R + p or rr < R + q:
        raise NotStrictlyCloselyConnected(max(R + p - rd, R + q - rr), R + p - rd, R + q - rr)
    U = data.R_mat @ np.linalg.pinv(data.D_mat, rcond=RANK_TOL)
    raw = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[1])), initial=0.0))
    correction = 0.0
    if raw > 1e-12:
        w, _, vh = np.linalg.svd(U)
        polar = w @ vh
        correction = float(np.linalg.norm(polar - U, 2))
        U = polar
    col = GRColligation.from_unitary(U, _coordinate_projections(data.inner_dims))
    return col, RealizationReport(raw, correction, gram, len(window))


def realize_scc(sys: AglerSystem, window=None) -> GRColligation:
    """Unitary colligation ``U`` with ``U D_mat = R_mat``.

    The state space is the direct sum of the factors' inner spaces with
    coordinate projections.  Raises :class:`NotStrictlyCloselyConnected` when
    the domain or range columns do not span.
    """
    return realize_scc_detailed(sys, window)[0]


# --- unitary extension and Redheffer closure --------------------------------------------


@dataclass(frozen=True)
class U0Blocks:
    """Unitary ``U_0`` with rows ``(inner, out, L)`` and columns ``(inner, in, L')``.

    ``L`` and ``L'`` are the complements of the lurking domain and range; the
    ``(L', L)`` block vanishes.
    """

    matrix: np.ndarray
    inner_dims: tuple[int, ...]
    in_dim: int
    out_dim: int
    l_dim: int
    l_prime_dim: int

    @property
    def state_dim(self) -> int:
        return sum(self.inner_dims)

    def blocks(self):
        """``U0[i][j]`` for block rows ``(inner, out, L)`` and columns ``(inner, in, L')``."""
        R = self.state_dim
        rows = np.cumsum([0, R, self.out_dim, self.l_dim])
        cols = np.cumsum([0, R, self.in_dim, self.l_prime_dim])
        M = self.matrix
        return [[M[rows[i] : rows[i + 1], cols[j] : cols[j + 1]] for j in range(3)] for i in range(3)]

    @property
    def unitarity_residual(self) -> float:
        M = self.matrix
        if M.size == 0:
            return 0.0
        return max(
            float(np.max(np.abs(M.conj().T @ M - np.eye(M.shape[1])))),
            float(np.max(np.abs(M @ M.conj().T - np.eye(M.shape[0])))),
        )


def _assemble_u0(core: np.ndarray, n_d: np.ndarray, n_r: np.ndarray, dims, p, q) -> U0Blocks:
    l, lp = n_d.shape[1], n_r.shape[1]
    top = np.hstack([core, n_r])
    bottom = np.hstack([n_d.conj().T, np.zeros((l, lp))])
    return U0Blocks(np.vstack([top, bottom]), tuple(dims), p, q, l, lp)


def build_u0(sys: AglerSystem, window=None) -> U0Blocks:
    """Unitary extension of the lurking isometry with appended defect slots.

    On the domain span ``U_0`` acts as ``V``; the domain complement is sent
    to the appended output slot and the appended input slot fills the range
    complement.
    """
    window = default_window(sys) if window is None else tuple(window)
    data = build_lurking_data(sys, window)
    gram = data.gram_residual
    if gram > 1e-8:
        raise IsometryError(f"domain and range Grams differ by {gram:.2e}")
    R = sum(data.inner_dims)
    q, p = sys.out_dim, sys.in_dim
    dom = orthonormal_span(data.D_mat)
    ran = orthonormal_span(data.R_mat)
    n_d = complement_basis(dom, R + p)
    n_r = complement_basis(ran, R + q)
    core = data.R_mat @ np.linalg.pinv(data.D_mat, rcond=RANK_TOL) if data.D_mat.size else np.zeros((R + q, R + p))
    u0 = _assemble_u0(core, n_d, n_r, data.inner_dims, p, q)
    if u0.matrix.shape[0] != u0.matrix.shape[1]:
        raise DimensionError("defect dimensions do not balance; U_0 would not be square")
    return u0


@dataclass(frozen=True)
class LoadColligation:
    """Unitary load ``(aux, L) -> (aux, L')`` with projections on the auxiliary state."""

    colligation: GRColligation
    aux_dim: int
    l_dim: int
    l_prime_dim: int

    def __post_init__(self):
        U = self.colligation
        if (U.state_dim, U.in_dim, U.out_dim) != (self.aux_dim, self.l_dim, self.l_prime_dim):
            raise DimensionError("load slot dimensions do not match its blocks")


def trivial_load(d: int, l_dim: int, unitary: np.ndarray | None = None) -> LoadColligation:
    """Load without auxiliary state: ``L' = L`` joined by a fixed unitary (identity by default)."""
    D = np.eye(l_dim) if unitary is None else np.asarray(unitary)
    U = GRColligation(np.zeros((0, 0)), np.zeros((0, l_dim)), np.zeros((D.shape[0], 0)), D, tuple(np.zeros((0, 0)) for _ in range(d)))
    return LoadColligation(U, 0, l_dim, D.shape[0])


def redheffer_close(u0: U0Blocks, load: LoadColligation) -> GRColligation:
    """Closed loop of ``U_0`` and a load through the ``L``/``L'`` slots.

    Since the ``(L', L)`` block of ``U_0`` is zero the loop is triangular and
    the closure has explicit blocks.  The closed-loop state is ``inner (+) aux``.
    """
    t = load.colligation
    if load.l_dim != u0.l_dim or load.l_prime_dim != u0.l_prime_dim:
        raise DimensionError(
            f"load slots ({load.l_dim}, {load.l_prime_dim}) do not match U_0 slots ({u0.l_dim}, {u0.l_prime_dim})"
        )
    if t.d != len(u0.inner_dims):
        raise DimensionError("load and U_0 differ in the number of axes")
    b = u0.blocks()
    T11, T12, T21, T22 = t.A, t.B, t.C, t.D
    A11 = b[0][0] + b[0][2] @ T22 @ b[2][0]
    A12 = b[0][2] @ T21
    B1 = b[0][1] + b[0][2] @ T22 @ b[2][1]
    A21 = T12 @ b[2][0]
    A22 = T11
    B2 = T12 @ b[2][1]
    C1 = b[1][0] + b[1][2] @ T22 @ b[2][0]
    C2 = b[1][2] @ T21
    D = b[1][1] + b[1][2] @ T22 @ b[2][1]
    A = np.block([[A11, A12], [A21, A22]])
    B = np.vstack([B1, B2])
    C = np.hstack([C1, C2])
    inner = _coordinate_projections(u0.inner_dims)
    P = tuple(scipy.linalg.block_diag(pi, pt) for pi, pt in zip(inner, t.projections))
    return GRColligation(A, B, C, D, P)


# --- compatibility and equivalence ---------------------------------------------------------


def verify_compatibility(U: GRColligation, sys: AglerSystem, max_total_degree: int) -> float:
    """Largest gap between the kernels and transfer coefficients of ``U`` and those of ``sys``.

    Kernels are compared as values ``K_k(n, m)`` for ``|n|_1, |m|_1 <= degree``,
    which does not depend on the basis of the inner spaces.
    """
    T = max_total_degree
    if sys.horizon is not None:
        T = min(T, sys.horizon)
    own = kernels_from_realization(U, T)
    worst = own.S.max_abs_diff(sys.S, degree=T)
    window = indices_up_to(sys.d, T)
    for k in range(sys.d):
        worst = max(worst, float(np.max(np.abs(own.kernel_gram(k, window) - sys.kernel_gram(k, window)), initial=0.0)))
    return worst


@dataclass(frozen=True)
class EquivalenceResult:
    status: str
    intertwiner: np.ndarray | None = None
    residual: float | None = None


def _generating_vectors(U: GRColligation, degree: int) -> np.ndarray:
    d = U.d
    calc = calculus(U)
    Cs = U.C.conj().T
    cols = []
    for n in indices_up_to(d, degree, nonnegative=True):
        X = calc(n)
        cols.append(X.conj().T @ Cs)
        for P in U.projections:
            cols.append(X @ P @ U.B)
    return np.hstack(cols) if cols else np.zeros((U.state_dim, 0))


def unitary_equivalence_check(U: GRColligation, U2: GRColligation, tol: float = 1e-9) -> EquivalenceResult:
    """Decide unitary equivalence of two strictly closely connected colligations.

    The vectors ``calc(n)^* C^* u_*`` and ``calc(n) P_k B u`` span the state
    space of a strictly closely connected colligation, so equal Gram matrices
    determine the only candidate intertwiner ``W``, which is then tested
    against ``A, B, C, D`` and every ``P_k``.
    """
    if (U.d, U.in_dim, U.out_dim) != (U2.d, U2.in_dim, U2.out_dim):
        raise DimensionError("colligations differ in d or in/out dimensions")
    for V in (U, U2):
        if krylov_closure(V, "scc").dim < V.state_dim:
            return EquivalenceResult("inconclusive")
    if U.state_dim != U2.state_dim:
        return EquivalenceResult("not_equivalent")
    degree = max(U.state_dim, 1)
    X, X2 = _generating_vectors(U, degree), _generating_vectors(U2, degree)
    gram_gap = float(np.max(np.abs(X.conj().T @ X - X2.conj().T @ X2), initial=0.0))
    if gram_gap > tol:
        return EquivalenceResult("not_equivalent", residual=gram_gap)
    W = X2 @ np.linalg.pinv(X, rcond=RANK_TOL)
    checks = [
        W.conj().T @ W - np.eye(U.state_dim),
        W @ U.A - U2.A @ W,
        W @ U.B - U2.B,
        U.C - U2.C @ W,
        U.D - U2.D,
    ] + [W @ P - P2 @ W for P, P2 in zip(U.projections, U2.projections)]
    res = max(float(np.max(np.abs(c), initial=0.0)) for c in checks)
    if res < tol:
        return EquivalenceResult("equivalent", W, res)
    return EquivalenceResult("not_equivalent", W, res)


def random_u0(rng: np.random.Generator, inner_dims: Sequence[int], in_dim: int, out_dim: int, l_dim: int) -> U0Blocks:
    """Random unitary ``U_0`` with the block pattern of :func:`build_u0`."""
    from scipy.stats import unitary_group

    R = sum(inner_dims)
    X, Y = R + in_dim, R + out_dim
    lp = Y - X + l_dim
    core_dim = X - l_dim
    if core_dim < 0 or lp < 0:
        raise DimensionError("slot dimensions are incompatible")

    def haar(n):
        return np.atleast_2d(unitary_group.rvs(n, random_state=rng)) if n > 1 else np.eye(n, dtype=complex)

    dom_full, ran_full, core = haar(X), haar(Y), haar(core_dim)
    D_b, N_d = dom_full[:, :core_dim], dom_full[:, core_dim:]
    R_b, N_r = ran_full[:, :core_dim], ran_full[:, core_dim:]
    return _assemble_u0(R_b @ core @ D_b.conj().T, N_d, N_r, inner_dims, in_dim, out_dim)

"""Augmented Agler decompositions, kernel identities and limit kernels.

For a realization ``U`` of ``S`` the kernels

    K_k(z, w) = H_k(z) H_k(w)^*,
    H_k(z) = [ C (I - Z(z) A)^{-1} P_k ; z_k^{-1} B^* (I - Z(z)^{-1} A^*)^{-1} P_k ]

satisfy the augmented identity

    [[I - S(z)S(w)^*, S(w) - S(z)], [S(z)^* - S(w)^*, S(z)^* S(w) - I]]
        = sum_k (1 - z_k w_k^{-1}) K_k(z, w).

Everything here is checked coefficientwise on finite windows.  Truncated
factors carry a horizon and every check first shrinks its box to where all
contributing coefficients are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .colligation import GRColligation, calculus, require_valid, transfer_coefficients
from .kernels import (
    FormalKernel,
    KernelFactor,
    Region,
    gram_to_kernel,
    kernel_from_factor,
    sandwich_gram,
    sandwich_safe,
)
from .laurent import (
    DimensionError,
    IndexBox,
    LaurentMatrixSeries,
    MultiIndex,
    Sublattice,
    indices_up_to,
    is_nonnegative,
    neg,
    sub,
    total_degree,
    unit,
    zero_index,
)


class ConvergenceError(ArithmeticError):
    """An iteration did not settle within its cap."""

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class VerificationResult:
    """Largest residual of a coefficientwise identity and where it was checked."""

    residual: float
    safe_window: IndexBox | None
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.safe_window is not None and self.residual < self.tol

    def __float__(self) -> float:
        return self.residual

    def to_json(self) -> dict:
        return {
            "residual": self.residual,
            "safe_window": None if self.safe_window is None else self.safe_window.to_json(),
            "pass": self.passed,
        }


class AglerSystem:
    """A Schur-class series with factors ``H_k`` of its augmented Agler kernels.

    Parameters
    ----------
    S : LaurentMatrixSeries
        Supported in ``Z^d_+``, shape ``(out, in)``.
    factors : list of KernelFactor
        One per axis, outer dimension ``out + in``.
    horizon : int, optional
        Total degree up to which ``S`` and the factors are exact.
    kernels : list of FormalKernel, optional
        Explicit kernels overriding ``H_k H_k^*`` (e.g. perturbed data).
    """

    def __init__(self, S: LaurentMatrixSeries, factors: Sequence[KernelFactor], horizon=None, kernels=None):
        self.S = S
        self.factors = list(factors)
        self.horizon = horizon
        self._kernels = None if kernels is None else list(kernels)
        if not all(is_nonnegative(n) for n in S.support()):
            raise ValueError("S must be supported in the nonnegative orthant")
        out_dim = S.shape[0] + S.shape[1]
        if len(self.factors) != S.d:
            raise DimensionError(f"expected {S.d} factors, got {len(self.factors)}")
        for h in self.factors:
            if h.d != S.d or h.outer_dim != out_dim:
                raise DimensionError("factor dimensions do not match S")
        if self._kernels is not None and len(self._kernels) != S.d:
            raise DimensionError("need one kernel per axis")

    @property
    def d(self) -> int:
        return self.S.d

    @property
    def out_dim(self) -> int:
        return self.S.shape[0]

    @property
    def in_dim(self) -> int:
        return self.S.shape[1]

    @property
    def kernels(self) -> list[FormalKernel]:
        if self._kernels is None:
            self._kernels = [kernel_from_factor(h) for h in self.factors]
        return self._kernels

    def with_kernel(self, k: int, kernel: FormalKernel) -> "AglerSystem":
        ks = list(self.kernels)
        ks[k] = kernel
        return AglerSystem(self.S, self.factors, self.horizon, ks)

    def with_series(self, S: LaurentMatrixSeries) -> "AglerSystem":
        return AglerSystem(S, self.factors, self.horizon, self._kernels)

    def kernel_gram(self, k: int, window: Sequence[MultiIndex]) -> np.ndarray:
        """``[K_k(n, m)]`` over ``window``."""
        if self._kernels is not None:
            return self._kernels[k].gram(list(window))
        h = self.factors[k].stacked(list(window))
        return h @ h.conj().T


def kernels_from_realization(U: GRColligation, max_total_degree: int) -> AglerSystem:
    """Agler factors of a realization, exact up to total degree ``max_total_degree``.

    Top block at ``n >= 0``: ``C calc(n) Q_k``.  Bottom block at
    ``-(m + e_k)``: ``B^* calc*(m) Q_k``, where ``calc*`` runs the calculus
    with generators ``P_j A^*`` and ``Q_k`` is an orthonormal basis of
    ``im P_k``.
    """
    require_valid(U)
    d, T = U.d, max_total_degree
    S = transfer_coefficients(U, T)
    q, p = U.out_dim, U.in_dim
    bases = U.projection_bases()
    factors = []
    if U.state_dim == 0:
        factors = [KernelFactor(d, q + p, 0, {}, T) for _ in range(d)]
        return AglerSystem(S, factors, T)
    calc, calc_s = calculus(U), calculus(U, star=True)
    Bs = U.B.conj().T
    for k in range(d):
        Q = bases[k]
        r = Q.shape[1]
        coeffs = {}
        for n in indices_up_to(d, T, nonnegative=True):
            top = U.C @ calc(n) @ Q
            coeffs[n] = np.vstack([top, np.zeros((p, r))])
            if total_degree(n) + 1 <= T:
                bottom = Bs @ calc_s(n) @ Q
                idx = neg(tuple(a + (1 if j == k else 0) for j, a in enumerate(n)))
                coeffs[idx] = np.vstack([np.zeros((q, r)), bottom])
        factors.append(KernelFactor(d, q + p, r, coeffs, T))
    return AglerSystem(S, factors, T)


# --- coefficientwise identities ---------------------------------------------------


def _safe_box(box: IndexBox, reach: int | None) -> IndexBox | None:
    """Largest cube ``[-reach, reach]^d`` inside ``box`` (all of ``box`` if ``reach`` is None)."""
    if reach is None:
        return box
    if reach < 0:
        return None
    rho = reach // box.d
    return box.intersect(IndexBox.cube(box.d, -rho, rho))


def _series_blocks(S: LaurentMatrixSeries):
    """Helpers returning ``S_n`` (zero outside the support, including negative ``n``)."""
    zero = np.zeros(S.shape, dtype=complex)
    co = S.coeffs

    def get(n):
        return co.get(n, zero)

    return get


def _augmented_lhs(S: LaurentMatrixSeries, window: Sequence[MultiIndex]) -> np.ndarray:
    q, p = S.shape
    get = _series_blocks(S)
    d = S.d
    z = zero_index(d)
    size = q + p
    out = np.zeros((size * len(window), size * len(window)), dtype=complex)
    for i, n in enumerate(window):
        for j, m in enumerate(window):
            blk = np.zeros((size, size), dtype=complex)
            dn, dm = n == z, m == z
            blk[:q, :q] = (np.eye(q) if dn and dm else 0) - get(n) @ get(m).conj().T
            blk[:q, q:] = (get(neg(m)) if dn else 0) - (get(n) if dm else 0)
            blk[q:, :q] = (get(neg(n)).conj().T if dm else 0) - (get(m).conj().T if dn else 0)
            blk[q:, q:] = get(neg(n)).conj().T @ get(neg(m)) - (np.eye(p) if dn and dm else 0)
            out[i * size : (i + 1) * size, j * size : (j + 1) * size] = blk
    return out


def _shifted_sum(sys: AglerSystem, window: Sequence[MultiIndex]):
    """``sum_k K_k`` and ``sum_k z_k K_k w_k^{-1}`` over ``window``."""
    size = sys.out_dim + sys.in_dim
    plain = np.zeros((size * len(window),) * 2, dtype=complex)
    shifted = np.zeros_like(plain)
    for k in range(sys.d):
        e = unit(sys.d, k)
        plain += sys.kernel_gram(k, window)
        shifted += sys.kernel_gram(k, [sub(n, e) for n in window])
    return plain, shifted


def _system_reach(sys: AglerSystem) -> int | None:
    # K_k is exact for |n|, |m| <= T and the shifted term reaches one degree
    # further, so windows with |n|_1 <= T - 1 are safe.
    horizons = [t for t in [sys.horizon, sys.S.horizon] + [h.horizon for h in sys.factors] if t is not None]
    if not horizons:
        return None
    return min(horizons) - 1


def verify_augmented_decomposition(sys: AglerSystem, box: IndexBox, tol: float = 1e-10) -> VerificationResult:
    """Largest entry of ``LHS - sum_k (K_k - z_k K_k w_k^{-1})`` on the safe part of ``box``."""
    if box.d != sys.d:
        raise DimensionError("box dimension differs from the system")
    safe = _safe_box(box, _system_reach(sys))
    if safe is None:
        return VerificationResult(float("nan"), None, tol)
    window = safe.indices()
    lhs = _augmented_lhs(sys.S, window)
    plain, shifted = _shifted_sum(sys, window)
    return VerificationResult(float(np.max(np.abs(lhs - (plain - shifted)), initial=0.0)), safe, tol)


def _outer_grams(S: LaurentMatrixSeries, window: Sequence[MultiIndex]):
    """Grams of ``[S; I][S(w)^*, I]`` and ``[I; S^*][I, S(w)]`` over ``window``."""
    q, p = S.shape
    get = _series_blocks(S)
    z = zero_index(S.d)
    F = np.vstack([np.vstack([get(n), np.eye(p) if n == z else np.zeros((p, p))]) for n in window])
    G = np.vstack([np.vstack([np.eye(q) if n == z else np.zeros((q, q)), get(neg(n)).conj().T]) for n in window])
    return F @ F.conj().T, G @ G.conj().T


def verify_kernel_cdp(sys: AglerSystem, box: IndexBox, tol: float = 1e-10) -> VerificationResult:
    """Residual of ``sum K_k + [S;I][S(w)^*, I] = sum z_k K_k w_k^{-1} + [I;S^*][I, S(w)]``."""
    if box.d != sys.d:
        raise DimensionError("box dimension differs from the system")
    safe = _safe_box(box, _system_reach(sys))
    if safe is None:
        return VerificationResult(float("nan"), None, tol)
    window = safe.indices()
    kf, kfs = _outer_grams(sys.S, window)
    plain, shifted = _shifted_sum(sys, window)
    return VerificationResult(float(np.max(np.abs(plain + kf - shifted - kfs), initial=0.0)), safe, tol)


# --- limit kernels -----------------------------------------------------------------


def delta_limit(A_block: np.ndarray, tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
    """``lim_s A^s A^{*s}`` by iterating ``X <- A X A^*`` from ``X = I``."""
    A = np.asarray(A_block, dtype=complex)
    if A.size and np.linalg.norm(A, 2) > 1 + 1e-10:
        raise ValueError("delta_limit needs a contraction")
    X = np.eye(A.shape[0], dtype=complex)
    for _ in range(max_iter):
        nxt = A @ X @ A.conj().T
        if np.max(np.abs(nxt - X), initial=0.0) < tol:
            return nxt
        X = nxt
    raise ConvergenceError(f"A^s A*^s did not settle in {max_iter} steps", X)


def _compressed_block(U: GRColligation, k: int):
    Q = U.projection_bases()[k]
    return Q, Q.conj().T @ U.A @ Q, U.C @ Q


def limit_kernel_closed_form(U: GRColligation, k: int, alpha, beta, tol: float = 1e-12) -> np.ndarray:
    """Limit coefficient for indices supported on axis ``k`` via ``Delta`` of the compressed block."""
    d = U.d
    if any(alpha[j] != 0 or beta[j] != 0 for j in range(d) if j != k):
        raise ValueError("closed form needs alpha and beta supported on axis k")
    _, Akk, Ck = _compressed_block(U, k)
    delta = delta_limit(Akk, tol)
    a, b = alpha[k], beta[k]
    if a <= b:
        return Ck @ delta @ np.linalg.matrix_power(Akk.conj().T, b - a) @ Ck.conj().T
    return Ck @ np.linalg.matrix_power(Akk, a - b) @ delta @ Ck.conj().T


def limit_kernel_coefficient(
    U: GRColligation, k: int, alpha, beta, tol: float = 1e-10, max_iter: int | None = None
) -> tuple[np.ndarray, bool]:
    """``lim_{t -> -inf} C calc(alpha - t e_k) P_k calc(beta - t e_k)^* C^*``.

    Entries of ``alpha`` and ``beta`` off axis ``k`` must be nonnegative,
    otherwise the coefficient is zero.  ``t`` decreases by one per step;
    convergence is declared after two successive changes below ``tol``.
    """
    d, q = U.d, U.out_dim
    alpha, beta = tuple(alpha), tuple(beta)
    if any(alpha[j] < 0 or beta[j] < 0 for j in range(d) if j != k):
        return np.zeros((q, q), dtype=complex), True
    if U.state_dim == 0:
        return np.zeros((q, q), dtype=complex), True
    cap = 10 * U.state_dim + 50 if max_iter is None else max_iter
    calc = calculus(U)
    P = U.projections[k]
    e = unit(d, k)

    def value(t):
        a = tuple(x - t * y for x, y in zip(alpha, e))
        b = tuple(x - t * y for x, y in zip(beta, e))
        return U.C @ calc(a) @ P @ calc(b).conj().T @ U.C.conj().T

    prev = value(0)
    calm = 0
    for step in range(1, cap + 1):
        cur = value(-step)
        if np.max(np.abs(cur - prev)) < tol:
            calm += 1
            if calm >= 2:
                _cross_check(U, k, alpha, beta, cur)
                return cur, True
        else:
            calm = 0
        prev = cur
    raise ConvergenceError(f"limit coefficient did not settle in {cap} steps", prev)


def _cross_check(U, k, alpha, beta, value):
    d = U.d
    if any(alpha[j] != 0 or beta[j] != 0 for j in range(d) if j != k):
        return
    try:
        closed = limit_kernel_closed_form(U, k, alpha, beta)
    except ConvergenceError:
        return
    gap = float(np.max(np.abs(closed - value), initial=0.0))
    if gap > 1e-6 * max(1.0, float(np.max(np.abs(value), initial=0.0))):
        raise ArithmeticError(f"limit coefficient disagrees with the closed form by {gap:.2e}")


@dataclass(frozen=True)
class LimitKernelTable:
    k: int
    entries: dict
    converged: dict
    t_reached: int


def limit_kernel_table(U: GRColligation, k: int, indices: Sequence[MultiIndex], tol: float = 1e-10) -> LimitKernelTable:
    """Limit coefficients for every pair drawn from ``indices``."""
    entries, conv = {}, {}
    for a in indices:
        for b in indices:
            val, ok = limit_kernel_coefficient(U, k, a, b, tol)
            entries[(tuple(a), tuple(b))] = val
            conv[(tuple(a), tuple(b))] = ok
    return LimitKernelTable(k, entries, conv, 10 * U.state_dim + 50)


def limit_kernel_d1_oracle(S: LaurentMatrixSeries, n: int, m: int) -> np.ndarray:
    """``delta_{nm} I - sum_l S_l S_{m-n+l}^*`` for one variable (mirrored when ``n > m``)."""
    if S.d != 1:
        raise DimensionError("the Toeplitz oracle is for one variable")
    if n > m:
        return limit_kernel_d1_oracle(S, m, n).conj().T
    q = S.shape[0]
    out = np.eye(q, dtype=complex) if n == m else np.zeros((q, q), dtype=complex)
    for (l,), coef in S.coeffs.items():
        out = out - coef @ S.coeff((m - n + l,)).conj().T
    return out


# --- de Branges-Rovnyak kernels -------------------------------------------------------


@dataclass(frozen=True)
class DbrKernelFamily:
    """The six model kernels of a Schur-class series, truncated to determined pairs."""

    K: FormalKernel
    F: FormalKernel
    F_star: FormalKernel
    W: FormalKernel
    W_star: FormalKernel
    V: FormalKernel
    box: IndexBox
    omega: Sublattice


def _known_pairs(window, test):
    return {(n, m) for n in window for m in window if test(n, m)}


def dbr_kernels(S: LaurentMatrixSeries, omega: Sublattice, box: IndexBox) -> DbrKernelFamily:
    """Assemble the model kernels over ``box``, keeping only determined pairs.

    ``K`` has coefficient ``[[delta I, S_{n-m}], [S_{m-n}^*, delta I]]``,
    ``F = [S; I][S(w)^*, I]``, ``F_star = [I; S^*][I, S(w)]``, ``W`` sums the
    shifts ``z^p F w^{-p}`` over ``p`` in ``omega`` and ``W_star`` over ``p``
    outside it; ``V = K - W - W_star``.
    """
    if not all(is_nonnegative(n) for n in S.support()):
        raise ValueError("S must be supported in the nonnegative orthant")
    q, p = S.shape
    size = q + p
    T = S.horizon
    window = box.indices()
    get = _series_blocks(S)
    z = zero_index(S.d)

    def exact(a):
        return T is None or not is_nonnegative(a) or total_degree(a) <= T

    region = Region(omega)
    k_known = _known_pairs(window, lambda n, m: exact(sub(n, m)) and exact(sub(m, n)))
    f_known = _known_pairs(window, lambda n, m: exact(n) and exact(m))
    fs_known = _known_pairs(window, lambda n, m: exact(neg(n)) and exact(neg(m)))
    w_known = _known_pairs(window, lambda n, m: sandwich_safe(region, n, m, T, 1))
    ws_known = _known_pairs(window, lambda n, m: sandwich_safe(region.complement(), n, m, T, -1))
    v_known = k_known & w_known & ws_known

    kk = np.zeros((size * len(window),) * 2, dtype=complex)
    for i, n in enumerate(window):
        for j, m in enumerate(window):
            blk = np.zeros((size, size), dtype=complex)
            if n == m:
                blk[:q, :q] = np.eye(q)
                blk[q:, q:] = np.eye(p)
            blk[:q, q:] = get(sub(n, m))
            blk[q:, :q] = get(sub(m, n)).conj().T
            kk[i * size : (i + 1) * size, j * size : (j + 1) * size] = blk
    kf, kfs = _outer_grams(S, window)
    f_coeffs = {a: np.vstack([S.coeff(a), np.eye(p) if a == z else np.zeros((p, p))]) for a in set(S.support()) | {z}}
    g_coeffs = {neg(a): np.vstack([np.eye(q) if a == z else np.zeros((q, q)), S.coeff(a).conj().T]) for a in set(S.support()) | {z}}
    kw = sandwich_gram(f_coeffs, region.contains, window, (size, p))
    kws = sandwich_gram(g_coeffs, region.complement().contains, window, (size, q))
    kv = kk - kw - kws
    shape = (size, size)
    return DbrKernelFamily(
        gram_to_kernel(kk, window, shape, k_known),
        gram_to_kernel(kf, window, shape, f_known),
        gram_to_kernel(kfs, window, shape, fs_known),
        gram_to_kernel(kw, window, shape, w_known),
        gram_to_kernel(kws, window, shape, ws_known),
        gram_to_kernel(kv, window, shape, v_known),
        box,
        omega,
    )


def v_kernel_single_lattice(S: LaurentMatrixSeries, omega: Sublattice, box: IndexBox) -> FormalKernel:
    """``k_{Sz,omega}(z, w)`` times the augmented matrix of ``S``, for polynomial ``S``.

    For inner ``S`` this equals the ``V`` kernel of :func:`dbr_kernels`.
    Needs ``S`` to be an exact polynomial so that every sum is finite.
    """
    if S.horizon is not None:
        raise ValueError("needs an exact polynomial series")
    q, p = S.shape
    size = q + p
    d = S.d
    z = zero_index(d)
    sup = set(S.support()) | {z}
    # support pairs of the augmented matrix
    pairs = set()
    for a in sup:
        for b in sup:
            pairs.add((a, b))
            pairs.add((neg(a), neg(b)))
        pairs.add((z, neg(a)))
        pairs.add((a, z))
        pairs.add((neg(a), z))
        pairs.add((z, a))
    aug_window = sorted({x for pr in pairs for x in pr})
    aug = _augmented_lhs(S, aug_window)
    pos = {n: i for i, n in enumerate(aug_window)}
    out = {}
    for n in box:
        for m in box:
            acc = np.zeros((size, size), dtype=complex)
            for a, b in pairs:
                if sub(n, a) != sub(m, b) or not omega.contains(sub(n, a)):
                    continue
                i, j = pos[a], pos[b]
                acc += aug[i * size : (i + 1) * size, j * size : (j + 1) * size]
            out[(n, m)] = acc
    return FormalKernel(d, (size, size), out, hermitian=True)


def verify_scattering_decomposition(U: GRColligation, box: IndexBox, tol: float = 1e-10) -> VerificationResult:
    """Residual of ``V = sum_k sum_{n in Xi} z^n K_k w^{-n}`` on the balanced lattice.

    ``Xi`` is the hyperplane ``sum n = 0``.  The realization is expanded far
    enough that every coefficient on ``box`` is exact.
    """
    require_valid(U)
    if box.d != U.d:
        raise DimensionError("box dimension differs from the colligation")
    window = box.indices()
    # S_{n-m} enters the K kernel, sums over the balanced lattice reach |sum n|
    reach = max(abs(sum(n)) for n in window)
    spread = sum(b - a for a, b in zip(box.lo, box.hi))
    T = max(reach, spread) + 1
    sys = kernels_from_realization(U, T)
    fam = dbr_kernels(sys.S, Sublattice.BALANCED, box)
    if len(fam.V.known or ()) != len(window) ** 2:
        raise ArithmeticError("expansion degree too small for the requested box")
    size = U.out_dim + U.in_dim
    lhs = fam.V.gram(window)
    rhs = np.zeros_like(lhs)
    on_xi = lambda n: sum(n) == 0  # noqa: E731
    for h in sys.factors:
        if h.inner_dim:
            rhs += sandwich_gram(h.coeffs, on_xi, window, (size, h.inner_dim))
    return VerificationResult(float(np.max(np.abs(lhs - rhs), initial=0.0)), box, tol)

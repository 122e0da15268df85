"""Givone-Roesser unitary colligations.

A colligation ``U = [[A, B], [C, D]]`` comes with orthogonal projections
``P_1..P_d`` splitting the state space.  Its transfer function is

    S(z) = D + C (I - Z(z) A)^{-1} Z(z) B,    Z(z) = sum_k z_k P_k,

whose coefficients are computed through the abelianized functional
calculus ``calc(n) = sum_k P_k A calc(n - e_k)``, ``calc(0) = I``.
Axes are zero-based throughout the code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .laurent import (
    DimensionError,
    IndexBox,
    LaurentMatrixSeries,
    MultiIndex,
    add,
    as_index,
    indices_up_to,
    is_nonnegative,
    sub,
    total_degree,
    unit,
    zero_index,
)

UNITARY_TOL = 1e-10
RANK_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when a colligation fails the unitarity or projection checks."""


def _mat(x, shape=None, name="matrix") -> np.ndarray:
    a = np.asarray(x, dtype=complex)
    if a.ndim == 1 and shape is not None:
        a = a.reshape(shape)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class GRColligation:
    """Blocks ``A, B, C, D`` and projections ``P_k`` on the state space.

    Shapes are checked on construction; unitarity is checked by
    :func:`validate_colligation`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    projections: tuple[np.ndarray, ...]

    def __post_init__(self):
        A = _mat(self.A, name="A")
        B = _mat(self.B, name="B")
        C = _mat(self.C, name="C")
        D = _mat(self.D, name="D")
        projs = tuple(_mat(p, name="projection") for p in self.projections)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, state dimension is {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, state dimension is {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        if not projs:
            raise DimensionError("need at least one projection")
        for p in projs:
            if p.shape != (n, n):
                raise DimensionError(f"projection has shape {p.shape}, expected {(n, n)}")
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        for p in projs:
            p.flags.writeable = False
        object.__setattr__(self, "projections", projs)

    @property
    def d(self) -> int:
        return len(self.projections)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def in_dim(self) -> int:
        return self.B.shape[1]

    @property
    def out_dim(self) -> int:
        return self.C.shape[0]

    @property
    def U(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    @classmethod
    def from_unitary(cls, u: np.ndarray, projections: Sequence[np.ndarray]) -> "GRColligation":
        n = np.asarray(projections[0]).shape[0]
        u = np.asarray(u, dtype=complex)
        return cls(u[:n, :n], u[:n, n:], u[n:, :n], u[n:, n:], tuple(projections))

    def projection_bases(self) -> list[np.ndarray]:
        """Orthonormal bases of ``im P_k`` from column-pivoted QR."""
        return [range_basis(p) for p in self.projections]

    def block_diagonal_sum(self, other: "GRColligation") -> "GRColligation":
        """Orthogonal sum of state spaces with inputs and outputs of ``self`` kept.

        Only the ``A`` block and projections of ``other`` are used; its
        input and output couplings are dropped.
        """
        n2 = other.state_dim
        A = scipy.linalg.block_diag(self.A, other.A)
        B = np.vstack([self.B, np.zeros((n2, self.in_dim))])
        C = np.hstack([self.C, np.zeros((self.out_dim, n2))])
        P = tuple(scipy.linalg.block_diag(p, q) for p, q in zip(self.projections, other.projections))
        return GRColligation(A, B, C, self.D, P)


def range_basis(p: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the range of a projection via column-pivoted QR."""
    p = np.asarray(p, dtype=complex)
    if p.shape[0] == 0:
        return np.zeros((0, 0), dtype=complex)
    rank = int(round(np.trace(p).real))
    q, r, _ = scipy.linalg.qr(p, pivoting=True)
    if rank == 0 or not np.any(np.abs(np.diag(r)) > tol):
        return np.zeros((p.shape[0], 0), dtype=complex)
    return q[:, :rank]


def orthonormal_span(vectors: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of a column span, via column-pivoted QR.

    Columns whose pivoted diagonal falls below ``tol`` times the largest
    column norm are treated as dependent.
    """
    vectors = np.asarray(vectors, dtype=complex)
    rows = vectors.shape[0]
    if vectors.size == 0:
        return np.zeros((rows, 0), dtype=complex)
    norms = np.linalg.norm(vectors, axis=0)
    top = float(norms.max())
    if top == 0.0:
        return np.zeros((rows, 0), dtype=complex)
    q, r, _ = scipy.linalg.qr(vectors, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * top))
    return q[:, :rank]


def null_space(mat: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal kernel basis; singular values up to ``tol * max(1, largest)`` count as zero."""
    rows, cols = mat.shape
    if cols == 0:
        return np.zeros((0, 0), dtype=complex)
    if rows == 0:
        return np.eye(cols, dtype=complex)
    if rows > cols:
        # compress tall operators first; only the right singular vectors matter
        mat = scipy.linalg.qr(mat, mode="r")[0][:cols]
    _, sv, vh = np.linalg.svd(mat)
    top = float(sv[0]) if sv.size else 0.0
    rank = int(np.sum(sv > tol * max(top, 1.0)))
    return vh[rank:].conj().T


def complement_basis(basis: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(basis)`` in ``C^dim``."""
    if basis.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    return scipy.linalg.null_space(basis.conj().T, rcond=RANK_TOL)


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    residuals: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(v < self.tol for v in self.residuals.values())

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_json(self) -> dict:
        return {"residuals": dict(self.residuals), "tol": self.tol, "pass": self.passed}


def _res(x: np.ndarray) -> float:
    return float(np.max(np.abs(x), initial=0.0))


def validate_colligation(U: GRColligation, tol: float = UNITARY_TOL) -> ValidationReport:
    """Residuals of the unitarity and projection identities.

    Each residual is the largest entry of the defect matrix.
    """
    A, B, C, D = U.A, U.B, U.C, U.D
    n, m, p = U.state_dim, U.in_dim, U.out_dim
    res = {
        "AA*+BB*=I": _res(A @ A.conj().T + B @ B.conj().T - np.eye(n)),
        "AC*+BD*=0": _res(A @ C.conj().T + B @ D.conj().T),
        "CC*+DD*=I": _res(C @ C.conj().T + D @ D.conj().T - np.eye(p)),
        "A*A+C*C=I": _res(A.conj().T @ A + C.conj().T @ C - np.eye(n)),
        "A*B+C*D=0": _res(A.conj().T @ B + C.conj().T @ D),
        "B*B+D*D=I": _res(B.conj().T @ B + D.conj().T @ D - np.eye(m)),
    }
    total = np.zeros((n, n), dtype=complex)
    for k, P in enumerate(U.projections):
        res[f"P{k}=P{k}*"] = _res(P - P.conj().T)
        res[f"P{k}^2=P{k}"] = _res(P @ P - P)
        for j in range(k + 1, U.d):
            res[f"P{k}P{j}=0"] = _res(P @ U.projections[j])
        total = total + P
    res["sum P=I"] = _res(total - np.eye(n))
    return ValidationReport(res, tol)


def require_valid(U: GRColligation, tol: float = UNITARY_TOL) -> None:
    report = validate_colligation(U, tol)
    if not report.passed:
        worst = max(report.residuals, key=report.residuals.get)
        raise ValidationError(f"colligation is not GR-unitary: {worst} residual {report.residuals[worst]:.3e}")


# --- abelianized functional calculus -------------------------------------------


class _Calculus:
    """Memo table for ``X(n) = sum_k G_k X(n - e_k)``, ``X(0) = I``, on ``Z^d_+``.

    One instance serves one computation; nothing is shared across calls.
    """

    def __init__(self, generators: Sequence[np.ndarray]):
        self.gens = list(generators)
        self.d = len(self.gens)
        dim = self.gens[0].shape[0]
        self.table: dict[MultiIndex, np.ndarray] = {zero_index(self.d): np.eye(dim, dtype=complex)}
        self.zero = np.zeros((dim, dim), dtype=complex)

    def __call__(self, n: MultiIndex) -> np.ndarray:
        if not is_nonnegative(n):
            return self.zero
        hit = self.table.get(n)
        if hit is not None:
            return hit
        # fill every predecessor in degree order to avoid deep recursion
        for m in sorted(_lower_set(n), key=lambda m: (total_degree(m), m)):
            if m in self.table:
                continue
            acc = self.zero.copy()
            for k in range(self.d):
                if m[k] > 0:
                    acc += self.gens[k] @ self.table[sub(m, unit(self.d, k))]
            self.table[m] = acc
        return self.table[n]


def _lower_set(n: MultiIndex):
    import itertools

    return itertools.product(*(range(a + 1) for a in n))


def calculus(U: GRColligation, star: bool = False) -> _Calculus:
    """Memoized calculus with generators ``P_k A`` (or ``P_k A^*`` with ``star``)."""
    base = U.A.conj().T if star else U.A
    return _Calculus([P @ base for P in U.projections])


def functional_calculus(U: GRColligation, n, star: bool = False) -> np.ndarray:
    """Abelianized power ``calc(n) = sum_k P_k A calc(n - e_k)``.

    Zero when any entry of ``n`` is negative.  With ``star`` the same
    recursion runs with ``A^*`` in place of ``A``.
    """
    n = as_index(n)
    if len(n) != U.d:
        raise DimensionError(f"index {n} has wrong length for d={U.d}")
    return calculus(U, star)(n)


def transfer_coefficients(U: GRColligation, max_total_degree: int) -> LaurentMatrixSeries:
    """Taylor coefficients of the transfer function up to ``|n|_1 <= max_total_degree``."""
    if max_total_degree < 0:
        raise ValueError("max_total_degree must be nonnegative")
    d = U.d
    coeffs = {zero_index(d): U.D}
    if U.state_dim:
        calc = calculus(U)
        pb = [P @ U.B for P in U.projections]
        for n in indices_up_to(d, max_total_degree, nonnegative=True)[1:]:
            acc = np.zeros((U.out_dim, U.in_dim), dtype=complex)
            for k in range(d):
                if n[k] > 0:
                    acc += U.C @ calc(sub(n, unit(d, k))) @ pb[k]
            coeffs[n] = acc
    return LaurentMatrixSeries(d, (U.out_dim, U.in_dim), coeffs, horizon=max_total_degree)


# --- closures and minimality -------------------------------------------------


@dataclass(frozen=True)
class KrylovClosure:
    """Orthonormal basis of one of the minimality subspaces.

    ``cc`` is the smallest subspace containing ``im B + im C^*`` and invariant
    under ``A``, ``A^*`` and every ``P_k``.  ``scc`` and ``sscc`` are the
    orthogonal complements of the kernels of the two identification maps
    (row spaces of their coefficients).
    """

    basis: np.ndarray
    tag: str
    degree_reached: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def complement(self) -> np.ndarray:
        return complement_basis(self.basis, self.basis.shape[0])


def _cc_closure(U: GRColligation) -> KrylovClosure:
    n = U.state_dim
    gens = [U.A, U.A.conj().T, *U.projections]
    basis = orthonormal_span(np.hstack([U.B, U.C.conj().T]))
    steps = 0
    while True:
        steps += 1
        grown = orthonormal_span(np.hstack([basis] + [g @ basis for g in gens]))
        if grown.shape[1] == basis.shape[1] or grown.shape[1] == n:
            basis = grown
            break
        basis = grown
    return KrylovClosure(basis, "cc", steps)


def identification_rows(U: GRColligation, degree: int, shifted: bool = False) -> np.ndarray:
    """Stacked coefficients of the identification map on the state space.

    Unshifted: ``C calc(n)`` for ``n >= 0`` and ``sum_k B^* calc*(m - e_k) P_k``
    for ``m >= 0, m != 0`` (the coefficient of ``z^{-m}``), where ``calc*``
    uses ``A^*``.  Shifted: ``sum_k C calc(n - e_k) P_k`` for ``n != 0`` and
    ``B^* calc*(m)``.  Indices run over ``|n|_1 <= degree``.
    """
    d, N = U.d, U.state_dim
    calc, calc_s = calculus(U), calculus(U, star=True)
    Bs = U.B.conj().T
    rows = []
    for n in indices_up_to(d, degree, nonnegative=True):
        if shifted:
            if any(n):
                rows.append(sum(U.C @ calc(sub(n, unit(d, k))) @ U.projections[k] for k in range(d)))
            rows.append(Bs @ calc_s(n))
        else:
            rows.append(U.C @ calc(n))
            if any(n):
                rows.append(sum(Bs @ calc_s(sub(n, unit(d, k))) @ U.projections[k] for k in range(d)))
    if not rows:
        return np.zeros((0, N), dtype=complex)
    return np.vstack(rows)


def _row_space_closure(U: GRColligation, tag: str) -> KrylovClosure:
    # The kernel of a realization-defined rational map is already cut out by
    # its coefficients of total degree <= state_dim (numerator degree bound).
    N = U.state_dim
    shifted = tag == "sscc"
    basis = np.zeros((N, 0), dtype=complex)
    degree = 0
    for degree in range(N + 1):
        rows = identification_rows(U, degree, shifted)
        basis = orthonormal_span(rows.conj().T)
        if basis.shape[1] == N:
            break
    return KrylovClosure(basis, tag, degree)


def krylov_closure(U: GRColligation, tag: str) -> KrylovClosure:
    """Minimality subspace ``cc``, ``scc`` or ``sscc``."""
    if tag == "cc":
        return _cc_closure(U)
    if tag in ("scc", "sscc"):
        return _row_space_closure(U, tag)
    raise ValueError(f"unknown closure tag {tag!r}")


def closure_residual(U: GRColligation, closure: KrylovClosure) -> float:
    """How far the ``cc`` generators move the basis out of its span."""
    Q = closure.basis
    if Q.shape[1] == 0:
        return 0.0
    worst = 0.0
    for g in [U.A, U.A.conj().T, *U.projections]:
        img = g @ Q
        worst = max(worst, _res(img - Q @ (Q.conj().T @ img)))
    return worst


@dataclass(frozen=True)
class StateFieldPolynomial:
    """Finitely supported Laurent polynomial with state-vector coefficients."""

    coeffs: dict[MultiIndex, np.ndarray]

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(np.max(np.abs(v), initial=0.0) <= tol for v in self.coeffs.values())

    def support(self) -> list[MultiIndex]:
        return sorted(self.coeffs)


@dataclass(frozen=True)
class ScatteringCertificate:
    """Outcome of the search for a scattering-nonminimality witness."""

    status: str
    window: IndexBox
    depth: int
    witness: StateFieldPolynomial | None = None
    residual: float | None = None
    recheck_depth: int | None = None
    kernel_dim: int = 0
    note: str = ""


@dataclass(frozen=True)
class MinimalityReport:
    closely_connected: bool
    strictly_cc: bool
    shifted_scc: bool
    scattering: ScatteringCertificate
    dims: dict[str, int]
    kernels: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def scc_equals_cc(self) -> bool:
        return self.dims["scc"] == self.dims["cc"]

    def to_json(self) -> dict:
        from .serialization import encode_matrix

        out = {
            "closely_connected": self.closely_connected,
            "strictly_cc": self.strictly_cc,
            "shifted_scc": self.shifted_scc,
            "dims": dict(self.dims),
            "defects": {k: encode_matrix(v) for k, v in sorted(self.kernels.items())},
            "scattering": {
                "status": self.scattering.status,
                "window": self.scattering.window.to_json(),
                "depth": self.scattering.depth,
                "kernel_dim": self.scattering.kernel_dim,
                "note": self.scattering.note,
            },
        }
        if self.scattering.witness is not None:
            out["scattering"]["witness"] = [
                {"index": list(n), "vector": encode_matrix(v.reshape(-1, 1))}
                for n, v in sorted(self.scattering.witness.coeffs.items())
            ]
            out["scattering"]["residual"] = self.scattering.residual
        return out


def _field_operator(U: GRColligation, window: list[MultiIndex], depth: int) -> np.ndarray:
    """Stack the maps ``x -> C (Z A)^j x`` and ``x -> B^* Z^{-1} (A^* Z^{-1})^j x``, ``j <= depth``.

    ``x`` is a state field with coefficients on ``window``; the images are
    expanded on their (finite) supports.
    """
    d, N = U.d, U.state_dim
    P = U.projections
    A, As = U.A, U.A.conj().T
    cols = len(window) * N
    blocks = []
    # a field is a dict index -> (N x cols) linear map
    cur = {}
    for i, n in enumerate(window):
        m = np.zeros((N, cols), dtype=complex)
        m[:, i * N : (i + 1) * N] = np.eye(N)
        cur[n] = m

    def step(field_, forward):
        out = {}
        for n, m in field_.items():
            for k in range(d):
                if forward:  # Z A: z_k P_k A
                    tgt, img = add(n, unit(d, k)), P[k] @ (A @ m)
                else:  # A^* Z^{-1}: A^* P_k z_k^{-1}
                    tgt, img = sub(n, unit(d, k)), As @ (P[k] @ m)
                out[tgt] = out[tgt] + img if tgt in out else img
        return out

    def emit(field_, left):
        for n in sorted(field_):
            blocks.append(left @ field_[n])

    fwd = cur
    for j in range(depth + 1):
        emit(fwd, U.C)
        if j < depth:
            fwd = step(fwd, True)
    # B^* Z^{-1} (A^* Z^{-1})^j x: apply (A^* Z^{-1})^j, then Z^{-1}, then B^*
    bwd = cur
    Bs = U.B.conj().T
    for j in range(depth + 1):
        zinv = {}
        for n, m in bwd.items():
            for k in range(d):
                tgt = sub(n, unit(d, k))
                img = P[k] @ m
                zinv[tgt] = zinv[tgt] + img if tgt in zinv else img
        emit(zinv, Bs)
        if j < depth:
            bwd = step(bwd, False)
    if not blocks:
        return np.zeros((0, cols), dtype=complex)
    return np.vstack(blocks)


def scattering_certificate(U: GRColligation, window: IndexBox, depth: int) -> ScatteringCertificate:
    """Search for a nonzero state field annihilated by every output map up to ``depth``.

    Success certifies that ``U`` is not scattering minimal.  By the
    Cayley-Hamilton theorem over the Laurent polynomial ring, ``depth >=
    state_dim - 1`` already makes the search exhaustive for the given
    window; the witness is re-checked at twice the depth regardless.
    Failure is inconclusive.
    """
    N = U.state_dim
    sites = window.indices()
    if N == 0:
        return ScatteringCertificate("no_certificate_found", window, depth, note="zero-dimensional state")
    null = null_space(_field_operator(U, sites, depth), RANK_TOL)
    if null.shape[1] == 0:
        return ScatteringCertificate(
            "no_certificate_found", window, depth, note="inconclusive: no witness in this window"
        )
    vec = null[:, 0]
    recheck = 2 * depth
    residual = float(np.max(np.abs(_field_operator(U, sites, recheck) @ vec), initial=0.0))
    witness = StateFieldPolynomial(
        {n: vec[i * N : (i + 1) * N] for i, n in enumerate(sites) if np.any(np.abs(vec[i * N : (i + 1) * N]) > 1e-13)}
    )
    if residual > 1e-9:
        return ScatteringCertificate(
            "no_certificate_found", window, depth, note=f"candidate failed recheck (residual {residual:.2e})"
        )
    return ScatteringCertificate(
        "nonminimal_certified",
        window,
        depth,
        witness,
        residual,
        recheck,
        null.shape[1],
        "witness verified at twice the search depth",
    )


def classify_minimality(
    U: GRColligation, cert_window: IndexBox | None = None, cert_depth: int | None = None
) -> MinimalityReport:
    """Closely connected, strictly and shifted strictly closely connected, plus a scattering certificate search."""
    N = U.state_dim
    cc = krylov_closure(U, "cc")
    scc = krylov_closure(U, "scc")
    sscc = krylov_closure(U, "sscc")
    if cert_window is None:
        cert_window = IndexBox.cube(U.d, -1, 1)
    if cert_depth is None:
        cert_depth = max(N, 1)
    cert = scattering_certificate(U, cert_window, cert_depth)
    kernels = {}
    for c in (cc, scc, sscc):
        if c.dim < N:
            kernels[c.tag] = c.complement()
    return MinimalityReport(
        closely_connected=cc.dim == N,
        strictly_cc=scc.dim == N,
        shifted_scc=sscc.dim == N,
        scattering=cert,
        dims={"state": N, "cc": cc.dim, "scc": scc.dim, "sscc": sscc.dim},
        kernels=kernels,
    )


def restrict(U: GRColligation, basis: np.ndarray) -> GRColligation:
    """Compress ``U`` to a reducing subspace given by orthonormal columns."""
    Q = basis
    Qs = Q.conj().T
    return GRColligation(Qs @ U.A @ Q, Qs @ U.B, U.C @ Q, U.D, tuple(Qs @ P @ Q for P in U.projections))


def compress_to_cc(U: GRColligation) -> GRColligation:
    """Restrict to the closely connected part; the transfer function is unchanged."""
    cc = krylov_closure(U, "cc")
    out = restrict(U, cc.basis)
    degree = max(U.state_dim, 1)
    diff = transfer_coefficients(U, degree).max_abs_diff(transfer_coefficients(out, degree))
    if diff > 1e-9:
        raise ArithmeticError(f"compression changed the transfer function (residual {diff:.2e})")
    return out

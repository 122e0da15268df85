"""Formal positive kernels on ``Z^d``.

A kernel ``K(z, w) = sum K_{n,m} z^n w^{-m}`` is stored sparsely by index
pair.  Positivity is certified on finite index windows by assembling the
block Gram matrix ``[K_{n,m}]``; factors ``H`` with ``K = H(z) H(w)^*`` are
recovered from the Gram eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .laurent import (
    DimensionError,
    IndexBox,
    LaurentMatrixSeries,
    MultiIndex,
    Sublattice,
    add,
    as_index,
    indices_up_to,
    is_nonnegative,
    sub,
    total_degree,
    unit,
)

PSD_TOL = 1e-9
RANK_TOL = 1e-9


class PositivityError(ValueError):
    """Raised when a kernel expected to be positive is not."""


Pair = tuple[MultiIndex, MultiIndex]


class FormalKernel:
    """Finitely supported kernel ``sum K_{n,m} z^n w^{-m}``.

    Parameters
    ----------
    d : int
    shape : tuple of int
    coeffs : mapping
        ``(n, m) -> matrix``.  Exactly-zero matrices are dropped.
    hermitian : bool
        Whether ``K_{n,m} = K_{m,n}^*`` is claimed.
    known : set of pairs, optional
        Pairs whose coefficients are determined.  ``None`` means every pair
        is determined (absent pairs are zero); otherwise pairs outside this
        set are unknown, not zero.
    """

    __slots__ = ("d", "shape", "_coeffs", "hermitian", "known")

    def __init__(self, d: int, shape, coeffs: Mapping | None = None, hermitian: bool = False, known=None):
        self.d = int(d)
        self.shape = (int(shape[0]), int(shape[1]))
        self.hermitian = bool(hermitian)
        self.known = None if known is None else frozenset((as_index(n), as_index(m)) for n, m in known)
        store = {}
        for (n, m), mat in (coeffs or {}).items():
            n, m = as_index(n), as_index(m)
            if len(n) != self.d or len(m) != self.d:
                raise DimensionError(f"index pair {(n, m)} has wrong length for d={self.d}")
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != self.shape:
                raise DimensionError(f"coefficient at {(n, m)} has shape {mat.shape}, expected {self.shape}")
            if np.any(mat != 0):
                store[(n, m)] = mat
        self._coeffs = store

    @classmethod
    def _trusted(cls, d: int, shape, store: dict, hermitian: bool, known) -> "FormalKernel":
        # skips per-entry checks for blocks already cut to shape with tuple keys
        k = cls.__new__(cls)
        k.d, k.shape, k.hermitian = d, tuple(shape), hermitian
        k.known = None if known is None else frozenset(known)
        k._coeffs = store
        return k

    @property
    def coeffs(self) -> dict[Pair, np.ndarray]:
        return dict(self._coeffs)

    def coeff(self, n, m) -> np.ndarray:
        mat = self._coeffs.get((as_index(n), as_index(m)))
        if mat is None:
            return np.zeros(self.shape, dtype=complex)
        return mat

    def is_known(self, n, m) -> bool:
        return self.known is None or (as_index(n), as_index(m)) in self.known

    def support(self) -> list[Pair]:
        return sorted(self._coeffs)

    def __len__(self) -> int:
        return len(self._coeffs)

    def __repr__(self) -> str:
        return f"FormalKernel(d={self.d}, shape={self.shape}, terms={len(self)}, hermitian={self.hermitian})"

    def _combine(self, other: "FormalKernel", sign: float) -> "FormalKernel":
        if other.d != self.d or other.shape != self.shape:
            raise DimensionError("kernels differ in dimension or shape")
        out = dict(self._coeffs)
        for key, mat in other._coeffs.items():
            out[key] = out[key] + sign * mat if key in out else sign * mat
        if self.known is None:
            known = other.known
        elif other.known is None:
            known = self.known
        else:
            known = self.known & other.known
        return FormalKernel(self.d, self.shape, out, self.hermitian and other.hermitian, known)

    def __add__(self, other: "FormalKernel") -> "FormalKernel":
        return self._combine(other, 1.0)

    def __sub__(self, other: "FormalKernel") -> "FormalKernel":
        return self._combine(other, -1.0)

    def with_coeff(self, n, m, matrix) -> "FormalKernel":
        """Copy with the coefficient at ``(n, m)`` replaced."""
        out = dict(self._coeffs)
        out[(as_index(n), as_index(m))] = np.asarray(matrix, dtype=complex)
        return FormalKernel(self.d, self.shape, out, False, self.known)

    def shifted(self, k: int) -> "FormalKernel":
        """``z_k K(z, w) w_k^{-1}``: coefficient at ``(n, m)`` is ``K_{n-e_k, m-e_k}``."""
        e = unit(self.d, k)
        known = None if self.known is None else {(add(n, e), add(m, e)) for n, m in self.known}
        return FormalKernel(
            self.d, self.shape, {(add(n, e), add(m, e)): v for (n, m), v in self._coeffs.items()}, self.hermitian, known
        )

    def hermitian_residual(self) -> float:
        worst = 0.0
        for (n, m), v in self._coeffs.items():
            worst = max(worst, float(np.max(np.abs(v - self.coeff(m, n).conj().T))))
        return worst

    def gram(self, window: Sequence[MultiIndex]) -> np.ndarray:
        r, c = self.shape
        g = np.zeros((r * len(window), c * len(window)), dtype=complex)
        for i, n in enumerate(window):
            for j, m in enumerate(window):
                mat = self._coeffs.get((n, m))
                if mat is not None:
                    g[i * r : (i + 1) * r, j * c : (j + 1) * c] = mat
        return g

    def max_abs_diff(self, other: "FormalKernel", pairs: Iterable[Pair] | None = None) -> float:
        if pairs is None:
            pairs = set(self._coeffs) | set(other._coeffs)
        worst = 0.0
        for n, m in pairs:
            worst = max(worst, float(np.max(np.abs(self.coeff(n, m) - other.coeff(n, m)), initial=0.0)))
        return worst


class KernelFactor:
    """Finitely supported ``H(z) = sum H_n z^n`` with ``outer x inner`` coefficients.

    ``horizon`` plays the same role as for :class:`LaurentMatrixSeries`:
    coefficients with ``|n|_1 <= horizon`` are exact.
    """

    __slots__ = ("d", "outer_dim", "inner_dim", "_coeffs", "horizon")

    def __init__(self, d: int, outer_dim: int, inner_dim: int, coeffs: Mapping | None = None, horizon=None):
        self.d = int(d)
        self.outer_dim = int(outer_dim)
        self.inner_dim = int(inner_dim)
        self.horizon = horizon
        store = {}
        for n, mat in (coeffs or {}).items():
            n = as_index(n)
            if len(n) != self.d:
                raise DimensionError(f"index {n} has wrong length for d={self.d}")
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != (self.outer_dim, self.inner_dim):
                raise DimensionError(f"factor coefficient at {n} has shape {mat.shape}")
            if np.any(mat != 0):
                store[n] = mat
        self._coeffs = store

    @property
    def coeffs(self) -> dict[MultiIndex, np.ndarray]:
        return dict(self._coeffs)

    def coeff(self, n) -> np.ndarray:
        mat = self._coeffs.get(as_index(n))
        if mat is None:
            return np.zeros((self.outer_dim, self.inner_dim), dtype=complex)
        return mat

    def support(self) -> list[MultiIndex]:
        return sorted(self._coeffs, key=lambda n: (total_degree(n), n))

    def __repr__(self) -> str:
        return f"KernelFactor(d={self.d}, outer={self.outer_dim}, inner={self.inner_dim}, terms={len(self._coeffs)})"

    def shifted(self, k: int) -> "KernelFactor":
        """``z_k H(z)``."""
        e = unit(self.d, k)
        horizon = None if self.horizon is None else self.horizon - 1
        return KernelFactor(
            self.d, self.outer_dim, self.inner_dim, {add(n, e): v for n, v in self._coeffs.items()}, horizon
        )

    def rotated(self, unitary: np.ndarray) -> "KernelFactor":
        """``H(z) V`` for a unitary change of basis ``V`` of the inner space."""
        return KernelFactor(
            self.d, self.outer_dim, self.inner_dim, {n: v @ unitary for n, v in self._coeffs.items()}, self.horizon
        )

    def stacked(self, window: Sequence[MultiIndex]) -> np.ndarray:
        """Block column ``[H_n]_{n in window}``."""
        if not window:
            return np.zeros((0, self.inner_dim), dtype=complex)
        return np.vstack([self.coeff(n) for n in window])


@dataclass(frozen=True)
class GramCertificate:
    """Block Gram matrix of a kernel over a window with its positivity verdict."""

    window: tuple[MultiIndex, ...]
    gram: np.ndarray
    min_eig: float
    verdict: str
    tol: float
    block_shape: tuple[int, int]

    @property
    def is_psd(self) -> bool:
        return self.verdict == "psd"

    def to_json(self) -> dict:
        return {
            "window": [list(n) for n in self.window],
            "min_eig": self.min_eig,
            "verdict": self.verdict,
            "tol": self.tol,
        }


@dataclass(frozen=True)
class OverlapBasis:
    """Orthonormal basis of the overlap between several kernel factors.

    ``vectors`` has one column per basis vector, laid out in the external
    direct sum of the inner spaces.  ``nullity`` is the dimension of the
    kernel of the stacked map and ``trivial`` the sum of the nullities of the
    individual factors.
    """

    vectors: np.ndarray
    dim: int
    degree_reached: int
    nullity: int
    trivial: int
    residual: float
    inner_dims: tuple[int, ...] = field(default=())


def kernel_from_factor(h: KernelFactor) -> FormalKernel:
    """``K_{n,m} = H_n H_m^*`` over the support squared."""
    sup = h.support()
    coeffs = {(n, m): h.coeff(n) @ h.coeff(m).conj().T for n in sup for m in sup}
    return FormalKernel(h.d, (h.outer_dim, h.outer_dim), coeffs, hermitian=True)


def _psd_verdict(gram: np.ndarray, tol: float) -> tuple[float, str]:
    herm = 0.5 * (gram + gram.conj().T)
    eig = np.linalg.eigvalsh(herm)
    min_eig = float(eig[0]) if eig.size else 0.0
    scale = max(1.0, float(np.linalg.norm(herm, 2))) if herm.size else 1.0
    return min_eig, "psd" if min_eig >= -tol * scale else "indefinite"


def psd_certificate(k: FormalKernel, window: Iterable, tol: float = PSD_TOL) -> GramCertificate:
    """Assemble ``[K_{n,m}]`` over ``window`` and test positivity.

    The verdict is ``psd`` when the smallest eigenvalue is at least
    ``-tol * max(1, ||Gram||)``.
    """
    window = tuple(as_index(n) for n in window)
    if not window:
        raise ValueError("window must not be empty")
    if k.shape[0] != k.shape[1]:
        raise DimensionError("positivity needs square coefficients")
    gram = k.gram(window)
    asym = float(np.max(np.abs(gram - gram.conj().T)))
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(gram)))):
        # not hermitian on this window, so it cannot be positive
        eig = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
        return GramCertificate(window, gram, float(eig[0]), "indefinite", tol, k.shape)
    min_eig, verdict = _psd_verdict(gram, tol)
    return GramCertificate(window, gram, min_eig, verdict, tol, k.shape)


def kolmogorov_factor(cert: GramCertificate, rank_tol: float = RANK_TOL) -> KernelFactor:
    """Factor a positive window Gram as ``H H^*`` with ``inner_dim`` equal to its numerical rank."""
    if not cert.is_psd:
        raise PositivityError(f"Gram matrix is indefinite (min eigenvalue {cert.min_eig:.3e})")
    herm = 0.5 * (cert.gram + cert.gram.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    top = float(vals[-1]) if vals.size else 0.0
    keep = vals > rank_tol * top if top > 0 else np.zeros_like(vals, dtype=bool)
    # largest eigenvalues first for a deterministic layout
    order = np.argsort(-vals[keep], kind="stable")
    vals_k, vecs_k = vals[keep][order], vecs[:, keep][:, order]
    stacked = vecs_k * np.sqrt(vals_k)
    rows = cert.block_shape[0]
    coeffs = {n: stacked[i * rows : (i + 1) * rows] for i, n in enumerate(cert.window)}
    d = len(cert.window[0])
    return KernelFactor(d, rows, stacked.shape[1], coeffs)


def szego_kernel(omega: Sublattice, box: IndexBox, dim: int) -> FormalKernel:
    """Truncated Szego kernel: ``I`` at ``(n, n)`` for ``n`` in ``omega`` and the box."""
    eye = np.eye(dim, dtype=complex)
    return FormalKernel(box.d, (dim, dim), {(n, n): eye for n in box if omega.contains(n)}, hermitian=True)


# --- regions and safe windows -------------------------------------------------


@dataclass(frozen=True)
class Region:
    """A sublattice or the complement of one (``negated``)."""

    lattice: Sublattice
    negated: bool = False

    def contains(self, n) -> bool:
        return self.lattice.contains(n) != self.negated

    def complement(self) -> "Region":
        return Region(self.lattice, not self.negated)

    def normalized(self) -> "Region":
        if self.negated and self.lattice is not Sublattice.BALANCED:
            return Region(self.lattice.complement(), False)
        return self

    def _extreme_sum(self, corner: MultiIndex, below: bool):
        """Extreme of ``sum p`` over ``p`` in the region on one side of ``corner``.

        With ``below`` the points ``p <= corner`` are scanned and the minimum
        is returned; otherwise ``p >= corner`` and the maximum.  Returns
        ``None`` if no point qualifies and ``inf`` if the extreme is unbounded.
        """
        r = self.normalized()
        lat, d = r.lattice, len(corner)
        if lat is Sublattice.EMPTY:
            return None
        if lat is Sublattice.FULL:
            return math.inf
        if r.negated:  # balanced complement: sum p <= -1
            if below:
                return math.inf
            return -1 if sum(corner) <= -1 else None
        if lat is Sublattice.BALANCED:
            if below:
                return 0 if sum(corner) >= 0 else None
            return math.inf
        if lat is Sublattice.QUADRANT:
            if below:
                return 0 if is_nonnegative(corner) else None
            return math.inf
        # COMPLEMENT of the quadrant: some coordinate negative
        if below:
            return math.inf
        if not any(c < 0 for c in corner):
            return None
        return -1 if d == 1 else math.inf


def sandwich_safe(region: Region, n: MultiIndex, m: MultiIndex, horizon, cone: int) -> bool:
    """Whether ``sum_{p in region} F_{n-p} F_{m-p}^*`` is determined by a truncated ``F``.

    ``F`` is supported in ``cone * Z^d_+`` and exact for ``|a|_1 <= horizon``.
    """
    if horizon is None:
        return True
    if cone > 0:
        corner = tuple(min(a, b) for a, b in zip(n, m))
        ext = region._extreme_sum(corner, below=True)
        if ext is None:
            return True
        if ext is math.inf:
            return False
        return sum(n) - ext <= horizon and sum(m) - ext <= horizon
    corner = tuple(max(a, b) for a, b in zip(n, m))
    ext = region._extreme_sum(corner, below=False)
    if ext is None:
        return True
    if ext is math.inf:
        return False
    return ext - sum(n) <= horizon and ext - sum(m) <= horizon


def sandwich_sum(
    coeffs: Mapping[MultiIndex, np.ndarray], region: Region, n: MultiIndex, m: MultiIndex, shape
) -> np.ndarray:
    """``sum_{p in region} F_{n-p} F_{m-p}^*`` over the finite support of ``F``."""
    out = np.zeros(shape, dtype=complex)
    for a, fa in coeffs.items():
        p = sub(n, a)
        fb = coeffs.get(sub(m, p))
        if fb is not None and region.contains(p):
            out += fa @ fb.conj().T
    return out


def _series_cone(s: LaurentMatrixSeries) -> int:
    sup = s.support()
    if all(is_nonnegative(n) for n in sup):
        return 1
    if all(is_nonnegative(tuple(-a for a in n)) for n in sup):
        return -1
    return 0


def multiplier_defect(
    s: LaurentMatrixSeries, omega: Sublattice, box: IndexBox, complement: bool = False
) -> FormalKernel:
    """``k_{Sz,omega}(z, w) (I - S(z) S(w)^*)`` on the determined pairs of ``box``.

    The coefficient at ``(n, m)`` is ``delta_{nm} [n in omega] I - sum_{p in
    omega} S_{n-p} S_{m-p}^*``.  With ``complement`` the lattice is replaced by
    its complement in ``Z^d``.  When ``S`` is a truncation (finite horizon)
    only pairs whose every contributor is exact are emitted; this needs ``S``
    supported in ``Z^d_+`` or in ``-Z^d_+``.
    """
    if s.d != box.d:
        raise DimensionError("series and box differ in dimension")
    region = Region(omega, complement)
    cone = _series_cone(s)
    if s.horizon is not None and cone == 0:
        raise ValueError("truncated series must be supported in a single orthant")
    rows = s.shape[0]
    eye = np.eye(rows, dtype=complex)
    coeffs = s.coeffs
    out, known = {}, set()
    for n in box:
        for m in box:
            if not sandwich_safe(region, n, m, s.horizon, cone):
                continue
            known.add((n, m))
            val = -sandwich_sum(coeffs, region, n, m, (rows, rows))
            if n == m and region.contains(n):
                val = val + eye
            out[(n, m)] = val
    return FormalKernel(box.d, (rows, rows), out, hermitian=True, known=known)


# --- overlapping spaces --------------------------------------------------------


def _null_basis(mat: np.ndarray, rank_tol: float) -> np.ndarray:
    cols = mat.shape[1]
    if mat.shape[0] == 0 or cols == 0:
        return np.eye(cols, dtype=complex)
    _, sv, vh = np.linalg.svd(mat)
    top = float(sv[0]) if sv.size else 0.0
    rank = int(np.sum(sv > rank_tol * top)) if top > 0 else 0
    return vh[rank:].conj().T


def overlap_basis(
    factors: Sequence[KernelFactor],
    shift: Sequence[bool] | None = None,
    plateau: int = 2,
    rank_tol: float = RANK_TOL,
    max_degree: int | None = None,
) -> OverlapBasis:
    """Overlap of the ranges of several factors.

    Finds the vectors ``(h_1, ..., h_J)`` with ``sum_j H_j(z) h_j = 0`` that are
    orthogonal to the trivial solutions ``H_j(z) h_j = 0``.  Its dimension is
    ``nullity(stacked) - sum_j nullity(H_j)``.  With ``shift[j]`` the factor
    ``z_j H_j(z)`` is used instead of ``H_j(z)`` (``j`` doubling as the axis).

    Windows of growing total degree are stacked until the dimension is
    unchanged for ``plateau`` consecutive degree steps or the cap
    ``sum_j inner_dim_j`` is reached.  ``max_degree`` limits the window to
    where truncated factors are exact; by default it is inferred from their
    horizons.
    """
    if not factors:
        raise ValueError("need at least one factor")
    d, outer = factors[0].d, factors[0].outer_dim
    for h in factors:
        if h.d != d or h.outer_dim != outer:
            raise DimensionError("factors must share d and outer dimension")
    shift = list(shift) if shift is not None else [False] * len(factors)
    used = [h.shifted(j) if shift[j] else h for j, h in enumerate(factors)]
    inner_dims = tuple(h.inner_dim for h in used)
    total = sum(inner_dims)
    cap = max(total, 0)
    if max_degree is None:
        horizons = [h.horizon for h in used if h.horizon is not None]
        if horizons:
            max_degree = min(horizons)
    if max_degree is not None:
        cap = min(cap, max_degree)
    cap = max(cap, 0)

    history = []
    result = None
    for degree in range(cap + 1):
        window = indices_up_to(d, degree)
        blocks = [h.stacked(window) for h in used]
        stacked = np.hstack(blocks) if total else np.zeros((outer * len(window), 0), dtype=complex)
        null = _null_basis(stacked, rank_tol)
        trivial_blocks = [_null_basis(b, rank_tol) for b in blocks]
        trivial = sum(t.shape[1] for t in trivial_blocks)
        # overlap = kernel minus the direct sum of the single-factor kernels
        if trivial and null.shape[1]:
            triv = np.zeros((total, trivial), dtype=complex)
            r = c = 0
            for t in trivial_blocks:
                triv[r : r + t.shape[0], c : c + t.shape[1]] = t
                r += t.shape[0]
                c += t.shape[1]
            # complement of the trivial solutions inside the stacked kernel
            coords = _null_basis(triv.conj().T @ null, 1e-6)
            vecs = null @ coords
        else:
            vecs = null
        dim = vecs.shape[1]
        residual = float(np.max(np.abs(stacked @ vecs), initial=0.0)) if vecs.size else 0.0
        result = OverlapBasis(vecs, dim, degree, null.shape[1], trivial, residual, inner_dims)
        history.append((null.shape[1], trivial))
        if len(history) > plateau and all(h == history[-1] for h in history[-plateau - 1 :]):
            break
    return result



def sandwich_gram(
    coeffs: Mapping[MultiIndex, np.ndarray], member, window: Sequence[MultiIndex], shape
) -> np.ndarray:
    """Block Gram ``[sum_{p : member(p)} F_{n-p} F_{m-p}^*]_{n, m in window}``.

    ``coeffs`` is the finite support of ``F`` with blocks of shape ``shape``
    (rows x cols).  The sum is assembled as ``Phi Phi^*`` where ``Phi`` has
    one block column per contributing ``p``.
    """
    rows, cols = shape
    keys = list(coeffs)
    if not window or not keys:
        return np.zeros((rows * len(window),) * 2, dtype=complex)
    n_arr = np.asarray(window, dtype=np.int64).reshape(len(window), -1)
    a_arr = np.asarray(keys, dtype=np.int64).reshape(len(keys), -1)
    diffs = (n_arr[:, None, :] - a_arr[None, :, :]).reshape(-1, n_arr.shape[1])
    # evaluate membership once per distinct p, keyed by a mixed-radix code
    low = diffs.min(axis=0)
    radix = diffs.max(axis=0) - low + 1
    code = np.zeros(len(diffs), dtype=np.int64)
    for k in range(diffs.shape[1]):
        code = code * radix[k] + (diffs[:, k] - low[k])
    _, first, inverse = np.unique(code, return_index=True, return_inverse=True)
    uniq = diffs[first]
    inverse = inverse.reshape(-1)
    inside = np.array([bool(member(tuple(int(v) for v in u))) for u in uniq])
    kept = np.flatnonzero(inside)
    col_of = np.full(len(uniq), -1)
    col_of[kept] = np.arange(len(kept))
    phi = np.zeros((rows * len(window), cols * len(kept)), dtype=complex)
    blocks = [np.asarray(coeffs[a], dtype=complex) for a in keys]
    for flat in np.flatnonzero(inside[inverse]):
        i, t = divmod(int(flat), len(keys))
        j = int(col_of[inverse[flat]])
        phi[i * rows : (i + 1) * rows, j * cols : (j + 1) * cols] = blocks[t]
    return phi @ phi.conj().T


def gram_to_kernel(gram: np.ndarray, window: Sequence[MultiIndex], shape, known=None, hermitian=True) -> FormalKernel:
    """Split a block Gram over ``window`` into a :class:`FormalKernel`."""
    r, c = shape
    window = [as_index(n) for n in window]
    gram = np.asarray(gram, dtype=complex)
    nonzero = np.abs(gram).reshape(len(window), r, len(window), c).max(axis=(1, 3), initial=0.0) > 0
    coeffs = {}
    for i, j in zip(*np.nonzero(nonzero)):
        n, m = window[i], window[j]
        if known is not None and (n, m) not in known:
            continue
        coeffs[(n, m)] = gram[i * r : (i + 1) * r, j * c : (j + 1) * c]
    d = len(window[0]) if window else 1
    return FormalKernel._trusted(d, shape, coeffs, hermitian, known)

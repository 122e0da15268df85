"""Multi-indices, index boxes, sparse matrix Laurent series and sublattices.

A Laurent series here always has finite support, so every product is an
exact finite convolution.  Series that are conceptually infinite (resolvents,
Szego kernels) only ever appear as explicit truncations produced elsewhere,
and carry a ``horizon``: the largest total degree ``|n|_1`` up to which the
stored coefficients are exact.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

MultiIndex = tuple[int, ...]


class DimensionError(ValueError):
    """Raised when lattice dimensions or matrix shapes do not match."""


def as_index(n: Iterable[int]) -> MultiIndex:
    return tuple(int(v) for v in n)


def unit(d: int, k: int) -> MultiIndex:
    """Standard basis vector ``e_k`` of ``Z^d`` (``k`` is zero-based)."""
    if not 0 <= k < d:
        raise DimensionError(f"axis {k} out of range for d={d}")
    return tuple(1 if j == k else 0 for j in range(d))


def zero_index(d: int) -> MultiIndex:
    return (0,) * d


def add(n: MultiIndex, m: MultiIndex) -> MultiIndex:
    return tuple(a + b for a, b in zip(n, m))


def sub(n: MultiIndex, m: MultiIndex) -> MultiIndex:
    return tuple(a - b for a, b in zip(n, m))


def neg(n: MultiIndex) -> MultiIndex:
    return tuple(-a for a in n)


def total_degree(n: MultiIndex) -> int:
    """The L1 norm ``|n|_1``."""
    return sum(abs(a) for a in n)


def is_nonnegative(n: MultiIndex) -> bool:
    return all(a >= 0 for a in n)


def indices_up_to(d: int, degree: int, nonnegative: bool = False) -> list[MultiIndex]:
    """All multi-indices with ``|n|_1 <= degree``, sorted by degree then lexicographically."""
    if degree < 0:
        return []
    rng = range(0, degree + 1) if nonnegative else range(-degree, degree + 1)
    out = [n for n in itertools.product(rng, repeat=d) if total_degree(n) <= degree]
    out.sort(key=lambda n: (total_degree(n), n))
    return out


@dataclass(frozen=True)
class IndexBox:
    """Inclusive box ``lo <= n <= hi`` in ``Z^d``."""

    lo: MultiIndex
    hi: MultiIndex

    def __post_init__(self):
        object.__setattr__(self, "lo", as_index(self.lo))
        object.__setattr__(self, "hi", as_index(self.hi))
        if len(self.lo) != len(self.hi) or not self.lo:
            raise DimensionError("box bounds must have equal positive length")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"empty box: lo={self.lo} hi={self.hi}")

    @classmethod
    def cube(cls, d: int, lo: int, hi: int) -> "IndexBox":
        return cls((lo,) * d, (hi,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    def __contains__(self, n) -> bool:
        return len(n) == self.d and all(a <= v <= b for a, v, b in zip(self.lo, n, self.hi))

    def __iter__(self) -> Iterator[MultiIndex]:
        # lexicographic order; every n - e_k in the box precedes n
        return itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi)))

    def __len__(self) -> int:
        out = 1
        for a, b in zip(self.lo, self.hi):
            out *= b - a + 1
        return out

    def indices(self) -> list[MultiIndex]:
        return list(iter(self))

    def intersect(self, other: "IndexBox") -> "IndexBox | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return IndexBox(lo, hi)

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


class LaurentMatrixSeries:
    """Finitely supported series ``sum_n f_n z^n`` with matrix coefficients.

    Parameters
    ----------
    d : int
        Lattice dimension.
    shape : tuple of int
        Common shape of every coefficient.
    coeffs : mapping, optional
        Multi-index to matrix.  Exactly-zero matrices are dropped.
    horizon : int, optional
        Coefficients with ``|n|_1 <= horizon`` are exact; ``None`` means the
        series is exactly the stored polynomial.
    """

    __slots__ = ("d", "shape", "_coeffs", "horizon")

    def __init__(self, d: int, shape, coeffs: Mapping | None = None, horizon: int | None = None):
        if d < 1:
            raise DimensionError("d must be positive")
        self.d = int(d)
        self.shape = (int(shape[0]), int(shape[1]))
        self.horizon = horizon
        store = {}
        for n, m in (coeffs or {}).items():
            n = as_index(n)
            if len(n) != self.d:
                raise DimensionError(f"index {n} has wrong length for d={self.d}")
            m = _as_matrix(m)
            if m.shape != self.shape:
                raise DimensionError(f"coefficient at {n} has shape {m.shape}, expected {self.shape}")
            if np.any(m != 0):
                m = m.copy()
                m.flags.writeable = False
                store[n] = m
        self._coeffs = store

    # construction helpers
    @classmethod
    def zero(cls, d: int, shape) -> "LaurentMatrixSeries":
        return cls(d, shape)

    @classmethod
    def monomial(cls, n: MultiIndex, matrix) -> "LaurentMatrixSeries":
        m = _as_matrix(matrix)
        return cls(len(n), m.shape, {as_index(n): m})

    @classmethod
    def constant(cls, d: int, matrix) -> "LaurentMatrixSeries":
        return cls.monomial(zero_index(d), matrix)

    # access
    @property
    def coeffs(self) -> dict[MultiIndex, np.ndarray]:
        return dict(self._coeffs)

    def support(self) -> list[MultiIndex]:
        return sorted(self._coeffs, key=lambda n: (total_degree(n), n))

    def coeff(self, n) -> np.ndarray:
        n = as_index(n)
        m = self._coeffs.get(n)
        if m is None:
            return np.zeros(self.shape, dtype=complex)
        return m

    def __getitem__(self, n) -> np.ndarray:
        return self.coeff(n)

    def is_exact_at(self, n) -> bool:
        return self.horizon is None or total_degree(as_index(n)) <= self.horizon

    def __len__(self) -> int:
        return len(self._coeffs)

    def __repr__(self) -> str:
        return f"LaurentMatrixSeries(d={self.d}, shape={self.shape}, terms={len(self)}, horizon={self.horizon})"

    def _check_compatible(self, other: "LaurentMatrixSeries"):
        if not isinstance(other, LaurentMatrixSeries):
            raise TypeError("expected a LaurentMatrixSeries")
        if other.d != self.d:
            raise DimensionError(f"lattice dimension mismatch: {self.d} vs {other.d}")

    @staticmethod
    def _min_horizon(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    # algebra
    def __add__(self, other: "LaurentMatrixSeries") -> "LaurentMatrixSeries":
        return series_add(self, other)

    def __neg__(self) -> "LaurentMatrixSeries":
        return LaurentMatrixSeries(self.d, self.shape, {n: -m for n, m in self._coeffs.items()}, self.horizon)

    def __sub__(self, other: "LaurentMatrixSeries") -> "LaurentMatrixSeries":
        return series_add(self, -other)

    def __matmul__(self, other: "LaurentMatrixSeries") -> "LaurentMatrixSeries":
        return series_convolve(self, other)

    def scale(self, c: complex) -> "LaurentMatrixSeries":
        return LaurentMatrixSeries(self.d, self.shape, {n: c * m for n, m in self._coeffs.items()}, self.horizon)

    def adjoint(self) -> "LaurentMatrixSeries":
        return series_adjoint(self)

    def truncate(self, degree: int) -> "LaurentMatrixSeries":
        """Keep coefficients with ``|n|_1 <= degree``."""
        kept = {n: m for n, m in self._coeffs.items() if total_degree(n) <= degree}
        return LaurentMatrixSeries(self.d, self.shape, kept, self._min_horizon(self.horizon, degree))

    def max_abs_diff(self, other: "LaurentMatrixSeries", degree: int | None = None) -> float:
        """Largest entrywise difference over the union of supports (optionally ``|n|_1 <= degree``)."""
        self._check_compatible(other)
        if other.shape != self.shape:
            raise DimensionError(f"shape mismatch: {self.shape} vs {other.shape}")
        worst = 0.0
        for n in set(self._coeffs) | set(other._coeffs):
            if degree is not None and total_degree(n) > degree:
                continue
            worst = max(worst, float(np.max(np.abs(self.coeff(n) - other.coeff(n)))))
        return worst


def series_add(a: LaurentMatrixSeries, b: LaurentMatrixSeries) -> LaurentMatrixSeries:
    """Coefficientwise sum."""
    a._check_compatible(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = dict(a._coeffs)
    for n, m in b._coeffs.items():
        out[n] = out[n] + m if n in out else m
    return LaurentMatrixSeries(a.d, a.shape, out, LaurentMatrixSeries._min_horizon(a.horizon, b.horizon))


def series_convolve(a: LaurentMatrixSeries, b: LaurentMatrixSeries) -> LaurentMatrixSeries:
    """Exact product ``(ab)_n = sum_l a_{n-l} b_l`` over the finite supports."""
    a._check_compatible(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner shapes differ: {a.shape} @ {b.shape}")
    out: dict[MultiIndex, np.ndarray] = {}
    for n, x in a._coeffs.items():
        for l, y in b._coeffs.items():
            k = add(n, l)
            p = x @ y
            out[k] = out[k] + p if k in out else p
    return LaurentMatrixSeries(
        a.d, (a.shape[0], b.shape[1]), out, LaurentMatrixSeries._min_horizon(a.horizon, b.horizon)
    )


def series_adjoint(a: LaurentMatrixSeries) -> LaurentMatrixSeries:
    """``(f^*)_{-n} = (f_n)^*``, following ``(w^n)^* = w^{-n}``."""
    return LaurentMatrixSeries(
        a.d, (a.shape[1], a.shape[0]), {neg(n): m.conj().T for n, m in a._coeffs.items()}, a.horizon
    )


class Sublattice(enum.Enum):
    """The shift-invariant sublattices supported by the toolkit."""

    FULL = "full"
    EMPTY = "empty"
    QUADRANT = "quadrant"
    COMPLEMENT = "complement"
    BALANCED = "balanced"

    def contains(self, n) -> bool:
        return sublattice_membership(self, n)

    def complement(self) -> "Sublattice":
        return _COMPLEMENTS[self]


_COMPLEMENTS = {
    Sublattice.FULL: Sublattice.EMPTY,
    Sublattice.EMPTY: Sublattice.FULL,
    Sublattice.QUADRANT: Sublattice.COMPLEMENT,
    Sublattice.COMPLEMENT: Sublattice.QUADRANT,
}


def sublattice_membership(omega: Sublattice, n) -> bool:
    """Exact membership test.

    The complement of the balanced lattice ``{sum n < 0}`` is not one of the
    five families; callers test it as ``not BALANCED.contains(n)``.
    """
    if omega is Sublattice.FULL:
        return True
    if omega is Sublattice.EMPTY:
        return False
    if omega is Sublattice.QUADRANT:
        return all(a >= 0 for a in n)
    if omega is Sublattice.COMPLEMENT:
        return any(a < 0 for a in n)
    if omega is Sublattice.BALANCED:
        return sum(n) >= 0
    raise ValueError(f"unknown sublattice {omega!r}")


def _line_minimum(omega: Sublattice, n: MultiIndex, k: int):
    """Smallest ``m`` with ``n`` (k-th entry replaced by m) in ``omega``; None if unbounded or empty."""
    rest = [a for j, a in enumerate(n) if j != k]
    if omega is Sublattice.QUADRANT:
        return 0 if all(a >= 0 for a in rest) else None
    if omega is Sublattice.BALANCED:
        return -sum(rest)
    # full: unbounded below; empty: no points; complement: each line is either
    # all of Z or a half-line unbounded below
    return None


def finite_boundary(omega: Sublattice, k: int, box: IndexBox) -> set[MultiIndex]:
    """Points of ``box`` where the k-th coordinate is minimal along its line in ``omega``.

    ``k`` is a zero-based axis.
    """
    if not 0 <= k < box.d:
        raise DimensionError(f"axis {k} out of range for d={box.d}")
    out = set()
    for n in box:
        m = _line_minimum(omega, n, k)
        if m is not None and n[k] == m:
            out.add(n)
    return out

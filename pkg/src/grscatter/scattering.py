"""Finite-window trajectories and the evolution operators on the balanced sublattice.

A trajectory of the conservative system satisfies

    P_k x(n + e_k) = P_k (A x(n) + B u(n)),    y(n) = C x(n) + D u(n)

at every site.  On a box the recursion is driven by the ``P_k`` components of
the state on the lower ``k``-faces (forward) or on the sites just past the
upper ``k``-faces (backward).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .colligation import GRColligation
from .laurent import IndexBox, LaurentMatrixSeries, MultiIndex, add, as_index, sub, total_degree, unit, zero_index
from .serialization import encode_vector

ISOMETRY_TOL = 1e-12
RANGE_TOL = 1e-10

FaceKey = tuple[int, MultiIndex]


def _vec(v, dim: int, name: str) -> np.ndarray:
    out = np.asarray(v, dtype=complex).reshape(-1)
    if out.shape != (dim,):
        raise ValueError(f"{name}: expected length {dim}, got {out.shape[0]}")
    return out


def lower_face(box: IndexBox, k: int) -> list[MultiIndex]:
    """Sites of ``box`` with ``n_k`` at its lower bound."""
    return [n for n in box if n[k] == box.lo[k]]


def upper_face(box: IndexBox, k: int) -> list[MultiIndex]:
    """Sites of ``box`` with ``n_k`` at its upper bound."""
    return [n for n in box if n[k] == box.hi[k]]


@dataclass
class TrajectoryWindow:
    """Values of ``u, x, y`` on a box.

    ``entry[(k, n)]`` holds ``P_k x(n)`` for ``n`` on the lower ``k``-face and
    ``exit[(k, n)]`` holds ``P_k x(n + e_k)`` for ``n`` on the upper ``k``-face.
    """

    box: IndexBox
    u: dict[MultiIndex, np.ndarray]
    x: dict[MultiIndex, np.ndarray]
    y: dict[MultiIndex, np.ndarray]
    entry: dict[FaceKey, np.ndarray] = field(default_factory=dict)
    exit: dict[FaceKey, np.ndarray] = field(default_factory=dict)

    def next_state(self, n: MultiIndex, projections) -> np.ndarray:
        """``sum_k P_k x(n + e_k)``, using exit data past the box."""
        d = self.box.d
        out = 0
        for k, P in enumerate(projections):
            m = add(n, unit(d, k))
            out = out + (P @ self.x[m] if m in self.box else self.exit[(k, n)])
        return out

    def equation_residual(self, U: GRColligation) -> float:
        """Largest violation of the forward equations over the box."""
        worst = 0.0
        for n in self.box:
            lhs = np.concatenate([self.next_state(n, U.projections), self.y[n]])
            rhs = U.U @ np.concatenate([self.x[n], self.u[n]])
            worst = max(worst, float(np.max(np.abs(lhs - rhs), initial=0.0)))
        return worst

    def to_json(self) -> dict:
        def sites(m):
            return [{"site": list(n), "value": encode_vector(m[n])} for n in sorted(m)]

        def faces(m):
            return [{"axis": k, "site": list(n), "value": encode_vector(m[(k, n)])} for k, n in sorted(m)]

        return {
            "box": self.box.to_json(),
            "u": sites(self.u),
            "x": sites(self.x),
            "y": sites(self.y),
            "entry": faces(self.entry),
            "exit": faces(self.exit),
        }


def zero_faces(U: GRColligation, box: IndexBox, upper: bool = False) -> dict[FaceKey, np.ndarray]:
    """Zero state data on every lower (or upper) face of ``box``."""
    face = upper_face if upper else lower_face
    return {(k, n): np.zeros(U.state_dim, complex) for k in range(U.d) for n in face(box, k)}


def _face_value(data: Mapping, k: int, n: MultiIndex, P: np.ndarray, dim: int, what: str) -> np.ndarray:
    if (k, n) not in data:
        raise ValueError(f"missing {what} data for axis {k} at site {list(n)}")
    return P @ _vec(data[(k, n)], dim, f"{what} value at axis {k}, site {list(n)}")


def simulate_forward(U: GRColligation, box: IndexBox, boundary: Mapping[FaceKey, object], u: Mapping | None = None) -> TrajectoryWindow:
    """Run the forward recursion over ``box`` in lexicographic order.

    Parameters
    ----------
    boundary : mapping
        ``(k, n) -> state vector`` for every ``n`` on the lower ``k``-face; only
        its ``P_k`` component is used.
    u : mapping, optional
        Input per site; absent sites carry zero input.
    """
    if box.d != U.d:
        raise ValueError(f"box has dimension {box.d}, colligation has d = {U.d}")
    d, N = U.d, U.state_dim
    u = {} if u is None else {as_index(n): _vec(v, U.in_dim, f"input at {list(n)}") for n in u for v in [u[n]]}
    for n in u:
        if n not in box:
            raise ValueError(f"input site {list(n)} lies outside the box")
    uu = {n: u.get(n, np.zeros(U.in_dim, complex)) for n in box}
    x, y, entry, exit_ = {}, {}, {}, {}
    for n in box:
        state = np.zeros(N, complex)
        for k, P in enumerate(U.projections):
            prev = sub(n, unit(d, k))
            if prev in box:
                state = state + P @ (U.A @ x[prev] + U.B @ uu[prev])
            else:
                val = _face_value(boundary, k, n, P, N, "boundary")
                entry[(k, n)] = val
                state = state + val
        x[n] = state
        y[n] = U.C @ state + U.D @ uu[n]
        for k, P in enumerate(U.projections):
            if n[k] == box.hi[k]:
                exit_[(k, n)] = P @ (U.A @ state + U.B @ uu[n])
    return TrajectoryWindow(box, uu, x, y, entry, exit_)


def simulate_backward(U: GRColligation, box: IndexBox, final: Mapping[FaceKey, object], y: Mapping | None = None) -> TrajectoryWindow:
    """Run the adjoint recursion ``(x(n), u(n)) = U^* (sum_k P_k x(n + e_k), y(n))``.

    Parameters
    ----------
    final : mapping
        ``(k, n) -> state vector`` for every ``n`` on the upper ``k``-face,
        standing for ``P_k x(n + e_k)``; only its ``P_k`` component is used.
    y : mapping, optional
        Output per site; absent sites carry zero output.
    """
    if box.d != U.d:
        raise ValueError(f"box has dimension {box.d}, colligation has d = {U.d}")
    d, N = U.d, U.state_dim
    y = {} if y is None else {as_index(n): _vec(y[n], U.out_dim, f"output at {list(n)}") for n in y}
    for n in y:
        if n not in box:
            raise ValueError(f"output site {list(n)} lies outside the box")
    yy = {n: y.get(n, np.zeros(U.out_dim, complex)) for n in box}
    Ustar = U.U.conj().T
    x, u, entry, exit_ = {}, {}, {}, {}
    for n in reversed(box.indices()):
        nxt = np.zeros(N, complex)
        for k, P in enumerate(U.projections):
            succ = add(n, unit(d, k))
            if succ in box:
                nxt = nxt + P @ x[succ]
            else:
                val = _face_value(final, k, n, P, N, "final")
                exit_[(k, n)] = val
                nxt = nxt + val
        out = Ustar @ np.concatenate([nxt, yy[n]])
        x[n], u[n] = out[:N], out[N:]
        for k, P in enumerate(U.projections):
            if n[k] == box.lo[k]:
                entry[(k, n)] = P @ x[n]
    return TrajectoryWindow(box, u, x, yy, entry, exit_)


def energy_balance(traj: TrajectoryWindow, U: GRColligation) -> float:
    """Largest per-site gap ``| |(x_next, y)|^2 - |(x, u)|^2 |``.

    ``x_next`` collects ``P_k x(n + e_k)`` over ``k``; sites on the upper faces
    use the stored exit data.
    """
    worst = 0.0
    for n in traj.box:
        nxt = traj.next_state(n, U.projections)
        out = np.vdot(nxt, nxt).real + np.vdot(traj.y[n], traj.y[n]).real
        inn = np.vdot(traj.x[n], traj.x[n]).real + np.vdot(traj.u[n], traj.u[n]).real
        worst = max(worst, abs(out - inn))
    return float(worst)


def impulse_response(U: GRColligation, e, max_total_degree: int) -> LaurentMatrixSeries:
    """Output of the zero-state system driven by ``u = delta_0 e``, as a column series.

    Agrees with ``transfer_coefficients(U) @ e`` for ``|n|_1 <= max_total_degree``.
    """
    d, T = U.d, max_total_degree
    e = _vec(e, U.in_dim, "impulse vector")
    box = IndexBox.cube(d, 0, T)
    traj = simulate_forward(U, box, zero_faces(U, box), {zero_index(d): e})
    coeffs = {n: traj.y[n].reshape(-1, 1) for n in box if total_degree(n) <= T}
    return LaurentMatrixSeries(d, (U.out_dim, 1), coeffs, horizon=T + 1)


# --- evolution on the balanced sublattice --------------------------------------------------


@dataclass
class ScatteringVector:
    """Finitely supported vector of the balanced-sublattice trajectory space.

    Parameters
    ----------
    e_star : dict
        ``n -> output vector`` for ``sum(n) < 0``.
    xi : dict
        ``(n, j) -> state vector in im P_j`` for ``sum(n) == 0``.
    e : dict
        ``n -> input vector`` for ``sum(n) >= 0``.
    """

    e_star: dict[MultiIndex, np.ndarray] = field(default_factory=dict)
    xi: dict[tuple[MultiIndex, int], np.ndarray] = field(default_factory=dict)
    e: dict[MultiIndex, np.ndarray] = field(default_factory=dict)

    def validate(self, U: GRColligation, tol: float = RANGE_TOL) -> None:
        for n in self.e_star:
            if sum(n) >= 0:
                raise ValueError(f"e_star site {list(n)} lies in the balanced sublattice")
        for n in self.e:
            if sum(n) < 0:
                raise ValueError(f"e site {list(n)} lies outside the balanced sublattice")
        for (n, j), v in self.xi.items():
            if sum(n) != 0:
                raise ValueError(f"xi site {list(n)} is not on the hyperplane sum(n) = 0")
            P = U.projections[j]
            if np.max(np.abs(v - P @ v), initial=0.0) > tol:
                raise ValueError(f"xi value at {list(n)}, axis {j} is not in the range of its projection")

    def norm_squared(self) -> float:
        return float(sum(np.vdot(v, v).real for part in (self.e_star, self.xi, self.e) for v in part.values()))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def __sub__(self, other: "ScatteringVector") -> "ScatteringVector":
        def diff(a, b):
            out = dict(a)
            for key, v in b.items():
                out[key] = out[key] - v if key in out else -v
            return out

        return ScatteringVector(diff(self.e_star, other.e_star), diff(self.xi, other.xi), diff(self.e, other.e))

    def to_json(self) -> dict:
        return {
            "e_star": [{"site": list(n), "value": encode_vector(self.e_star[n])} for n in sorted(self.e_star)],
            "xi": [{"site": list(n), "axis": j, "value": encode_vector(self.xi[(n, j)])} for n, j in sorted(self.xi)],
            "e": [{"site": list(n), "value": encode_vector(self.e[n])} for n in sorted(self.e)],
        }


def _accumulate(target: dict, key, value):
    target[key] = target[key] + value if key in target else value


def schaffer_apply(U: GRColligation, k: int, v: ScatteringVector) -> ScatteringVector:
    """Apply the adjoint evolution along axis ``k`` exactly.

    Output data and input data off the hyperplane move by ``-e_k``.  At each
    hyperplane site ``n0`` the state ``sum_j xi(n0, j)`` and input ``e(n0)``
    pass through ``U``; the ``P_j`` part of the new state lands at
    ``(n0 + e_j - e_k, j)`` and the output at ``n0 - e_k``.
    """
    d, N = U.d, U.state_dim
    if not 0 <= k < d:
        raise ValueError(f"axis {k} out of range for d = {d}")
    ek = unit(d, k)
    e_star, xi, e = {}, {}, {}
    for n, val in v.e_star.items():
        _accumulate(e_star, sub(n, ek), val)
    sites = {n for n, _ in v.xi} | {n for n in v.e if sum(n) == 0}
    for n, val in v.e.items():
        if sum(n) > 0:
            _accumulate(e, sub(n, ek), val)
    zero_state, zero_in = np.zeros(N, complex), np.zeros(U.in_dim, complex)
    for n0 in sorted(sites):
        state = sum((v.xi.get((n0, j), zero_state) for j in range(d)), zero_state)
        out = U.U @ np.concatenate([state, v.e.get(n0, zero_in)])
        new_state, output = out[:N], out[N:]
        for j, P in enumerate(U.projections):
            _accumulate(xi, (add(sub(n0, ek), unit(d, j)), j), P @ new_state)
        _accumulate(e_star, sub(n0, ek), output)
    return ScatteringVector(e_star, xi, e)


def random_scattering_vector(U: GRColligation, rng: np.random.Generator, support_box: IndexBox) -> ScatteringVector:
    """Gaussian entries on every site of ``support_box`` in each of the three parts."""

    def gauss(dim):
        return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)

    v = ScatteringVector()
    for n in support_box:
        s = sum(n)
        if s < 0:
            v.e_star[n] = gauss(U.out_dim)
        else:
            v.e[n] = gauss(U.in_dim)
        if s == 0:
            for j, P in enumerate(U.projections):
                v.xi[(n, j)] = P @ gauss(U.state_dim)
    return v


DEFAULT_SEED = 20240611


def schaffer_isometry_check(U: GRColligation, trials: int, support_box: IndexBox, seed: int = DEFAULT_SEED) -> float:
    """Largest ``| |U_k^* v| - |v| | / |v|`` over random ``v`` and every axis ``k``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = random_scattering_vector(U, rng, support_box)
        nv = v.norm()
        if nv == 0.0:
            continue
        for k in range(U.d):
            worst = max(worst, abs(schaffer_apply(U, k, v).norm() - nv) / nv)
    return worst


def schaffer_commutation_check(U: GRColligation, trials: int, support_box: IndexBox, seed: int = DEFAULT_SEED) -> float:
    """Largest ``|U_j^* U_k^* v - U_k^* U_j^* v| / |v|`` over random ``v`` and axis pairs."""
    if U.d < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = random_scattering_vector(U, rng, support_box)
        nv = v.norm()
        if nv == 0.0:
            continue
        images = [schaffer_apply(U, k, v) for k in range(U.d)]
        for j in range(U.d):
            for k in range(j + 1, U.d):
                gap = schaffer_apply(U, j, images[k]) - schaffer_apply(U, k, images[j])
                worst = max(worst, gap.norm() / nv)
    return worst

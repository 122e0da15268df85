"""Reference colligations with known behaviour, and random generators."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

from .colligation import GRColligation


def bundled_path(name: str) -> Path:
    """Path of a JSON file shipped in the package ``data`` directory."""
    return Path(str(resources.files("grscatter") / "data" / name))


def example_one() -> GRColligation:
    """Four-dimensional, two-variable realization of ``S(z) = z_1 z_2``.

    Closely connected but neither strictly nor shifted strictly closely
    connected.
    """
    s = 1 / np.sqrt(2)
    P1 = np.array([[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0.5, 0.5], [0, 0, 0.5, 0.5]])
    P2 = np.array([[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0.5, -0.5], [0, 0, -0.5, 0.5]])
    A = np.array([[0, 0, -s, 0], [0, 0, s, 0], [-s, s, 0, 0], [s, s, 0, 0]])
    B = np.array([[s], [s], [0], [0]])
    C = np.array([[0, 0, 0, 1]])
    D = np.zeros((1, 1))
    return GRColligation(A, B, C, D, (P1, P2))


def example_two() -> GRColligation:
    """Eight-dimensional, two-variable colligation with three inputs and outputs.

    Strictly and shifted strictly closely connected, yet not scattering
    minimal: fields ``(z_1 f, z_2 f, z_1 f, z_1 g, z_2 g, 0, 0, 0)`` are
    invisible from both ends.
    """
    a, b = 1 / np.sqrt(6), np.sqrt(2 / 3)
    A = np.array(
        [
            [0, 0, 0, a, a, 0, 0, 0],
            [0, 0, 0, 0, b, 0, 0, 0],
            [0, 0, 0, b, 0, 0, 0, 0],
            [a, 0, b, 0, 0, 0, 0, 0],
            [a, b, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, a, -a, 0, 0, 0],
            [0, -a, a, 0, 0, 0, 0, 0],
            [-b, a, a, 0, 0, 0, 0, 0],
        ]
    )
    B = np.array(
        [
            [0, 0, -b],
            [0, -a, a],
            [0, a, a],
            [a, 0, 0],
            [-a, 0, 0],
            [0, -b, 0],
            [-b, 0, 0],
            [0, 0, 0],
        ]
    )
    C = np.hstack([np.zeros((3, 5)), np.eye(3)])
    D = np.zeros((3, 3))
    t = 1 / 3
    P1 = np.array(
        [
            [5 / 6, 0, -t, 0, 0, -1 / 6, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, 0],
            [-t, 0, t, 0, 0, -t, 0, 0],
            [0, 0, 0, 1, 0, 0, 0, 0],
            [0, 0, 0, 0, 2 * t, 0, -t, t],
            [-1 / 6, 0, -t, 0, 0, 5 / 6, 0, 0],
            [0, 0, 0, 0, -t, 0, 1 / 6, -1 / 6],
            [0, 0, 0, 0, t, 0, -1 / 6, 1 / 6],
        ]
    )
    P2 = np.eye(8) - P1
    return GRColligation(A, B, C, D, (P1, P2))


def shift_realization(d: int = 1) -> GRColligation:
    """One-dimensional state realizing ``S(z) = z_1`` (``A = 0``, ``B = C = 1``)."""
    P = [np.zeros((1, 1)) for _ in range(d)]
    P[0] = np.eye(1)
    return GRColligation(np.zeros((1, 1)), np.eye(1), np.eye(1), np.zeros((1, 1)), tuple(P))


def power_shift(power: int) -> GRColligation:
    """``d = 1`` permutation colligation with ``S(z) = z^power`` (nilpotent ``A``)."""
    n = power
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i + 1, i] = 1.0
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, n))
    C[0, n - 1] = 1.0
    return GRColligation(A, B, C, np.zeros((1, 1)), (np.eye(n),))


def random_colligation(
    rng: np.random.Generator,
    d: int,
    state_dims,
    io_dim: int = 1,
    rotate: bool = True,
    max_spectral_radius: float | None = None,
    max_tries: int = 5000,
) -> GRColligation:
    """Haar-random unitary colligation.

    Parameters
    ----------
    state_dims : sequence of int
        Rank of each projection.
    rotate : bool
        Conjugate the coordinate projections by a random unitary so that they
        are not diagonal.
    max_spectral_radius : float, optional
        Reject samples whose ``A`` has a larger spectral radius.
    """
    dims = list(state_dims)
    if len(dims) != d:
        raise ValueError("need one state dimension per axis")
    n = sum(dims)
    for _ in range(max_tries):
        U = unitary_group.rvs(n + io_dim, random_state=rng) if n + io_dim > 1 else np.exp(2j * np.pi * rng.random()) * np.eye(1)
        U = np.atleast_2d(U)
        if max_spectral_radius is not None and n:
            if np.max(np.abs(np.linalg.eigvals(U[:n, :n]))) > max_spectral_radius:
                continue
        projs, start = [], 0
        for r in dims:
            e = np.zeros((n, n))
            e[start : start + r, start : start + r] = np.eye(r)
            projs.append(e)
            start += r
        if rotate and n:
            W = unitary_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
            W = np.atleast_2d(W)
            projs = [W @ p @ W.conj().T for p in projs]
            T = scipy.linalg.block_diag(W, np.eye(io_dim))
            U = T @ U @ T.conj().T
        return GRColligation.from_unitary(U, projs)
    raise RuntimeError("could not sample a colligation within the spectral radius bound")


def random_small_colligation(rng: np.random.Generator, max_d: int = 3, max_state: int = 6) -> GRColligation:
    """Random colligation with ``d <= max_d`` and ``state_dim <= max_state``, each ``P_k`` nonzero."""
    d = int(rng.integers(1, max_d + 1))
    total = int(rng.integers(d, max(d, max_state) + 1))
    cuts = np.sort(rng.choice(np.arange(1, total), size=d - 1, replace=False)) if d > 1 else np.array([], dtype=int)
    dims = np.diff(np.concatenate([[0], cuts, [total]])).astype(int).tolist()
    io = int(rng.integers(1, 3))
    return random_colligation(rng, d, dims, io)

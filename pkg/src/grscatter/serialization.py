"""JSON encoding of series, kernels, colligations and systems.

Complex numbers are written as ``[re, im]`` pairs.  Readers also accept
plain real numbers.  Output is deterministic: keys are sorted and floats are
written with ``repr`` precision.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .laurent import DimensionError, IndexBox, LaurentMatrixSeries, as_index


class InputError(ValueError):
    """Malformed or inconsistent input document."""


def _clean(x: float) -> float:
    # normalize negative zero so output is byte-stable
    x = float(x)
    return 0.0 if x == 0.0 else x


def encode_complex(z: complex) -> list[float]:
    z = complex(z)
    return [_clean(z.real), _clean(z.imag)]


def decode_complex(v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise InputError(f"cannot read complex number from {v!r}")


def encode_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[encode_complex(z) for z in row] for row in m]


def decode_matrix(v, shape=None, name="matrix") -> np.ndarray:
    if not isinstance(v, list):
        raise InputError(f"{name}: expected a list of rows")
    try:
        rows = [[decode_complex(z) for z in row] for row in v]
    except TypeError as exc:
        raise InputError(f"{name}: rows must be lists") from exc
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise InputError(f"{name}: ragged rows")
    if shape is not None:
        r, c = shape
        if not rows:
            return np.zeros((r, c), dtype=complex)
        if (len(rows), len(rows[0])) != (r, c):
            raise InputError(f"{name}: expected shape {(r, c)}, got {(len(rows), len(rows[0]))}")
    if not rows:
        return np.zeros((0, 0), dtype=complex)
    return np.array(rows, dtype=complex)


def decode_vector(v, dim: int, name="vector") -> np.ndarray:
    if not isinstance(v, list):
        raise InputError(f"{name}: expected a list")
    # accept a flat list or a column matrix
    if v and isinstance(v[0], list) and len(v[0]) == 1 and isinstance(v[0][0], list):
        v = [row[0] for row in v]
    out = np.array([decode_complex(z) for z in v], dtype=complex)
    if out.shape != (dim,):
        raise InputError(f"{name}: expected length {dim}, got {out.shape[0]}")
    return out


def encode_vector(v: np.ndarray) -> list:
    return [encode_complex(z) for z in np.asarray(v, dtype=complex).ravel()]


def _index(v, d, name="index"):
    if not isinstance(v, list) or len(v) != d or not all(isinstance(a, int) for a in v):
        raise InputError(f"{name}: expected {d} integers, got {v!r}")
    return as_index(v)


def _require(doc: dict, keys, name):
    if not isinstance(doc, dict):
        raise InputError(f"{name}: expected a JSON object")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise InputError(f"{name}: missing fields {missing}")


def _terms(doc: dict, keys, name):
    terms = doc["terms"]
    if not isinstance(terms, list):
        raise InputError(f"{name}: terms must be a list")
    for t in terms:
        _require(t, keys, f"{name} term")
    return terms


# --- series and kernels -----------------------------------------------------------


def series_to_json(s: LaurentMatrixSeries) -> dict:
    out = {
        "d": s.d,
        "shape": list(s.shape),
        "terms": [{"index": list(n), "matrix": encode_matrix(s.coeff(n))} for n in s.support()],
    }
    if s.horizon is not None:
        out["horizon"] = s.horizon
    return out


def series_from_json(doc: dict) -> LaurentMatrixSeries:
    _require(doc, ("d", "shape", "terms"), "series")
    d, shape = int(doc["d"]), tuple(doc["shape"])
    coeffs = {}
    for t in _terms(doc, ("index", "matrix"), "series"):
        n = _index(t["index"], d)
        coeffs[n] = decode_matrix(t["matrix"], shape, f"term {n}")
    try:
        return LaurentMatrixSeries(d, shape, coeffs, doc.get("horizon"))
    except DimensionError as exc:
        raise InputError(str(exc)) from exc


def kernel_to_json(k) -> dict:
    return {
        "d": k.d,
        "shape": list(k.shape),
        "hermitian": k.hermitian,
        "terms": [{"n": list(n), "m": list(m), "matrix": encode_matrix(k.coeff(n, m))} for n, m in k.support()],
    }


def kernel_from_json(doc: dict):
    from .kernels import FormalKernel

    _require(doc, ("d", "shape", "terms"), "kernel")
    d, shape = int(doc["d"]), tuple(doc["shape"])
    coeffs = {}
    for t in _terms(doc, ("n", "m", "matrix"), "kernel"):
        coeffs[(_index(t["n"], d), _index(t["m"], d))] = decode_matrix(t["matrix"], shape, "kernel term")
    return FormalKernel(d, shape, coeffs, bool(doc.get("hermitian", False)))


def factor_to_json(h) -> dict:
    out = {
        "d": h.d,
        "outer_dim": h.outer_dim,
        "inner_dim": h.inner_dim,
        "terms": [{"index": list(n), "matrix": encode_matrix(h.coeff(n))} for n in h.support()],
    }
    if h.horizon is not None:
        out["horizon"] = h.horizon
    return out


def factor_from_json(doc: dict):
    from .kernels import KernelFactor

    _require(doc, ("d", "outer_dim", "inner_dim", "terms"), "factor")
    d, r, c = int(doc["d"]), int(doc["outer_dim"]), int(doc["inner_dim"])
    coeffs = {_index(t["index"], d): decode_matrix(t["matrix"], (r, c), "factor term") for t in _terms(doc, ("index", "matrix"), "factor")}
    return KernelFactor(d, r, c, coeffs, doc.get("horizon"))


# --- colligations -----------------------------------------------------------------


def colligation_to_json(U) -> dict:
    return {
        "d": U.d,
        "state_dim": U.state_dim,
        "in_dim": U.in_dim,
        "out_dim": U.out_dim,
        "A": encode_matrix(U.A),
        "B": encode_matrix(U.B),
        "C": encode_matrix(U.C),
        "D": encode_matrix(U.D),
        "projections": [encode_matrix(P) for P in U.projections],
    }


def colligation_from_json(doc: dict):
    from .colligation import GRColligation

    _require(doc, ("d", "state_dim", "in_dim", "out_dim", "A", "B", "C", "D", "projections"), "colligation")
    d, n, m, p = (int(doc[k]) for k in ("d", "state_dim", "in_dim", "out_dim"))
    if d < 1:
        raise InputError("colligation: d must be positive")
    projs = doc["projections"]
    if not isinstance(projs, list) or len(projs) != d:
        raise InputError(f"colligation: expected {d} projections")
    try:
        return GRColligation(
            decode_matrix(doc["A"], (n, n), "A"),
            decode_matrix(doc["B"], (n, m), "B"),
            decode_matrix(doc["C"], (p, n), "C"),
            decode_matrix(doc["D"], (p, m), "D"),
            tuple(decode_matrix(P, (n, n), f"P{k}") for k, P in enumerate(projs)),
        )
    except DimensionError as exc:
        raise InputError(str(exc)) from exc


def system_to_json(sys) -> dict:
    return {
        "kind": "agler_system",
        "d": sys.d,
        "horizon": sys.horizon,
        "S": series_to_json(sys.S),
        "factors": [factor_to_json(h) for h in sys.factors],
    }


def system_from_json(doc: dict):
    from .agler import AglerSystem

    _require(doc, ("S", "factors"), "agler system")
    S = series_from_json(doc["S"])
    factors = [factor_from_json(f) for f in doc["factors"]]
    horizon = doc.get("horizon")
    try:
        return AglerSystem(S, factors, horizon)
    except (DimensionError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def load_to_json(load) -> dict:
    out = colligation_to_json(load.colligation)
    out.update({"kind": "load", "aux_dim": load.aux_dim, "l_dim": load.l_dim, "l_prime_dim": load.l_prime_dim})
    return out


def load_from_json(doc: dict):
    from .realization import LoadColligation

    _require(doc, ("aux_dim", "l_dim", "l_prime_dim"), "load")
    U = colligation_from_json(doc)
    try:
        return LoadColligation(U, int(doc["aux_dim"]), int(doc["l_dim"]), int(doc["l_prime_dim"]))
    except (DimensionError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def box_from_json(doc, d: int | None = None) -> IndexBox:
    _require(doc, ("lo", "hi"), "box")
    try:
        box = IndexBox(tuple(doc["lo"]), tuple(doc["hi"]))
    except (ValueError, TypeError) as exc:
        raise InputError(f"box: {exc}") from exc
    if d is not None and box.d != d:
        raise InputError(f"box has dimension {box.d}, expected {d}")
    return box


# --- files ----------------------------------------------------------------------


def dumps(doc: Any) -> str:
    """Deterministic JSON text."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path, doc: Any) -> None:
    Path(path).write_text(dumps(doc))

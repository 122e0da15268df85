"""Command-line front end.

Every command writes a JSON report (stdout, or ``--out``) and a short table on
stderr.  Exit codes: 0 when every check passes, 1 when a mathematical check
fails, 2 for unreadable or inconsistent input.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import serialization as ser
from .agler import (
    dbr_kernels,
    kernels_from_realization,
    verify_augmented_decomposition,
    verify_kernel_cdp,
    verify_scattering_decomposition,
)
from .colligation import classify_minimality, transfer_coefficients, validate_colligation
from .kernels import overlap_basis, psd_certificate
from .laurent import IndexBox, Sublattice, indices_up_to
from .realization import (
    IsometryError,
    NotStrictlyCloselyConnected,
    build_u0,
    realize_scc_detailed,
    redheffer_close,
    verify_compatibility,
)
from .scattering import (
    DEFAULT_SEED,
    energy_balance,
    impulse_response,
    schaffer_commutation_check,
    schaffer_isometry_check,
    simulate_backward,
    simulate_forward,
    zero_faces,
)

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

IDENTITY_TOL = 1e-10
COMPATIBILITY_TOL = 1e-9
SCHAFFER_TOL = 1e-12

OMEGAS = {
    "quadrant": Sublattice.QUADRANT,
    "balanced": Sublattice.BALANCED,
    "full": Sublattice.FULL,
    "empty": Sublattice.EMPTY,
}


class Report:
    """Named checks with thresholds; passes iff every check passes."""

    def __init__(self, command: str, inputs: dict[str, str]):
        self.command = command
        self.inputs = inputs
        self.results: list[dict] = []
        self.safe_window = None
        self.seed = None
        self.output = None
        self.notes: list[str] = []

    def check(self, name: str, value, threshold, passed: bool | None = None, note: str | None = None) -> bool:
        if passed is None:
            passed = value is not None and np.isfinite(value) and value < threshold
        entry = {"name": name, "value": _plain(value), "threshold": _plain(threshold), "pass": bool(passed)}
        if note:
            entry["note"] = note
        self.results.append(entry)
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.results)

    def to_json(self) -> dict:
        doc = {
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "safe_window": self.safe_window,
            "seed": self.seed,
            "pass": self.passed,
        }
        if self.output is not None:
            doc["output"] = self.output
        return doc

    def table(self) -> str:
        width = max([len(r["name"]) for r in self.results] + [5])
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        for r in self.results:
            val = r["value"]
            shown = f"{val:.3e}" if isinstance(val, float) else str(val)
            bound = f"{r['threshold']:.0e}" if isinstance(r["threshold"], float) else str(r["threshold"])
            line = f"  {r['name']:<{width}}  {shown:>10}  < {bound:<6}  {'ok' if r['pass'] else 'FAIL'}"
            lines.append(f"{line}  ({r['note']})" if "note" in r else line)
        lines.extend(f"  {n}" for n in self.notes)
        return "\n".join(lines)


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v) + 0.0  # drop negative zero
        return v if np.isfinite(v) else None
    return v


def _digest(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise ser.InputError(f"cannot read {path}: {exc.strerror}") from exc


def parse_box(text: str, d: int) -> IndexBox:
    """``lo..hi`` for every axis, or comma-separated ``lo..hi`` per axis."""
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * d
    if len(parts) != d:
        raise ser.InputError(f"box {text!r}: expected {d} ranges")
    lo, hi = [], []
    for p in parts:
        try:
            a, b = p.split("..")
            lo.append(int(a))
            hi.append(int(b))
        except ValueError as exc:
            raise ser.InputError(f"box {text!r}: ranges look like lo..hi") from exc
    try:
        return IndexBox(tuple(lo), tuple(hi))
    except ValueError as exc:
        raise ser.InputError(f"box {text!r}: {exc}") from exc


def _load_colligation(path: str):
    return ser.colligation_from_json(ser.read_json(path))


def _validation_checks(report: Report, U, tol: float) -> bool:
    v = validate_colligation(U, tol)
    for name, res in v.residuals.items():
        report.check(name, res, tol)
    return v.passed


# --- commands ----------------------------------------------------------------------


def cmd_validate(args) -> Report:
    report = Report("validate", {args.path: _digest(args.path)})
    U = _load_colligation(args.path)
    _validation_checks(report, U, args.tol or IDENTITY_TOL)
    return report


def cmd_transfer(args) -> Report:
    report = Report("transfer", {args.path: _digest(args.path)})
    U = _load_colligation(args.path)
    if not _validation_checks(report, U, args.tol or IDENTITY_TOL):
        return report
    degree = 4 if args.degree is None else args.degree
    if degree < 0:
        raise ser.InputError("--degree must be nonnegative")
    report.output = ser.series_to_json(transfer_coefficients(U, degree))
    return report


def _determined_subwindow(kernel, window):
    """Largest greedy subset of ``window`` on which every pair of ``kernel`` is known."""
    known = kernel.known
    if known is None:
        return list(window)
    sites = list(window)
    while sites:
        missing = {n: sum((n, m) not in known for m in sites) for n in sites}
        worst = max(sites, key=lambda n: (missing[n], n))
        if missing[worst] == 0:
            return sites
        sites.remove(worst)
    return sites


def cmd_agler_verify(args) -> Report:
    report = Report("agler-verify", {args.path: _digest(args.path)})
    U = _load_colligation(args.path)
    tol = args.tol or IDENTITY_TOL
    if not _validation_checks(report, U, tol):
        return report
    box = parse_box(args.box, U.d) if args.box else IndexBox.cube(U.d, -3, 3)
    radius = max(max(abs(a) for a in box.lo), max(abs(b) for b in box.hi))
    degree = args.degree if args.degree is not None else U.d * radius + 2
    sys_ = kernels_from_realization(U, degree)
    aug = verify_augmented_decomposition(sys_, box, tol)
    cdp = verify_kernel_cdp(sys_, box, tol)
    scat = verify_scattering_decomposition(U, box, tol)
    safe = aug.safe_window
    report.check("augmented identity", aug.residual, tol)
    report.check("kernel CDP", cdp.residual, tol)
    report.check("balanced-lattice decomposition", scat.residual, tol)
    report.safe_window = safe.to_json() if safe is not None else None
    omega = OMEGAS[args.omega]
    fam = dbr_kernels(sys_.S, omega, box)
    sub_window = _determined_subwindow(fam.V, box.indices())
    if sub_window:
        cert = psd_certificate(fam.V, sub_window)
        report.check(
            f"V kernel positivity ({args.omega})",
            max(0.0, -cert.min_eig),
            cert.tol * max(1.0, float(np.linalg.norm(cert.gram, 2))),
            cert.is_psd,
            note=f"{len(sub_window)} determined sites",
        )
    else:
        report.check(f"V kernel positivity ({args.omega})", None, None, True, note="no determined sites in the box; skipped")
    return report


def cmd_classify(args) -> Report:
    report = Report("classify", {args.path: _digest(args.path)})
    U = _load_colligation(args.path)
    if not _validation_checks(report, U, args.tol or IDENTITY_TOL):
        return report
    window = parse_box(args.cert_window, U.d) if args.cert_window else None
    result = classify_minimality(U, window, args.cert_depth)
    sys_ = kernels_from_realization(U, 2 * U.state_dim + 4)
    plain = overlap_basis(sys_.factors)
    shifted = overlap_basis(sys_.factors, [True] * U.d)
    trivial = plain.dim == 0 and shifted.dim == 0
    doc = result.to_json()
    doc["overlap"] = {"dim": plain.dim, "shifted_dim": shifted.dim, "degree_reached": [plain.degree_reached, shifted.degree_reached]}
    report.output = doc
    report.notes.append(
        f"closely connected: {result.closely_connected}, strictly: {result.strictly_cc}, "
        f"shifted strictly: {result.shifted_scc}, scattering: {result.scattering.status}"
    )
    report.notes.append(f"overlap dims: {plain.dim}, shifted {shifted.dim}")
    report.check("overlap cross-check", int(trivial != result.scc_equals_cc), 1)
    cert = result.scattering
    if cert.residual is not None:
        report.check("certificate witness residual", cert.residual, 1e-9)
    report.safe_window = cert.window.to_json() if cert.window is not None else None
    return report


def cmd_realize(args) -> Report:
    inputs = {args.path: _digest(args.path)}
    if args.load:
        inputs[args.load] = _digest(args.load)
    report = Report("realize", inputs)
    sys_ = ser.system_from_json(ser.read_json(args.path))
    load = ser.load_from_json(ser.read_json(args.load)) if args.load else None
    window = tuple(indices_up_to(sys_.d, args.window)) if args.window is not None else None
    degree = args.degree if args.degree is not None else 6
    tol = args.tol or COMPATIBILITY_TOL
    try:
        U, info = realize_scc_detailed(sys_, window)
    except IsometryError as exc:
        report.check("lurking Gram equality", float("inf"), 1e-8, False, note=str(exc))
        return report
    except NotStrictlyCloselyConnected as exc:
        if load is None:
            report.check("domain spans", exc.domain_defect, 1, note="missing dimensions; supply --load")
            report.check("range spans", exc.range_defect, 1, note="missing dimensions; supply --load")
            return report
        u0 = build_u0(sys_, window)
        if (load.l_dim, load.l_prime_dim) != (u0.l_dim, u0.l_prime_dim):
            raise ser.InputError(f"load slots ({load.l_dim}, {load.l_prime_dim}) do not match defects ({u0.l_dim}, {u0.l_prime_dim})")
        report.check("U_0 unitarity", u0.unitarity_residual, 1e-9)
        U = redheffer_close(u0, load)
    else:
        report.check("lurking Gram equality", info.gram_residual, 1e-8)
        report.check("polar correction", info.polar_correction, 1e-8)
    if not _validation_checks(report, U, 1e-9):
        return report
    report.check("compatibility", verify_compatibility(U, sys_, degree), tol)
    report.output = ser.colligation_to_json(U)
    return report


def _scenario_faces(doc, key, U, box, upper):
    raw = doc.get(key, "zero")
    if raw == "zero":
        return zero_faces(U, box, upper)
    if not isinstance(raw, list):
        raise ser.InputError(f"scenario {key}: expected a list or \"zero\"")
    out = {}
    for item in raw:
        ser._require(item, ("axis", "site", "value"), f"scenario {key}")
        out[(int(item["axis"]), ser._index(item["site"], U.d))] = ser.decode_vector(item["value"], U.state_dim, key)
    return out


def _scenario_sites(doc, key, dim, d):
    out = {}
    for item in doc.get(key, []):
        ser._require(item, ("site", "value"), f"scenario {key}")
        out[ser._index(item["site"], d)] = ser.decode_vector(item["value"], dim, key)
    return out


def cmd_simulate(args) -> Report:
    inputs = {args.path: _digest(args.path)}
    if args.scenario:
        inputs[args.scenario] = _digest(args.scenario)
    report = Report("simulate", inputs)
    U = _load_colligation(args.path)
    tol = args.tol
    if not _validation_checks(report, U, tol or IDENTITY_TOL):
        return report
    doc = ser.read_json(args.scenario) if args.scenario else {}
    if not isinstance(doc, dict):
        raise ser.InputError("scenario: expected a JSON object")
    mode = args.mode
    if mode in ("forward", "backward"):
        if "box" not in doc:
            raise ser.InputError(f"{mode} simulation needs a scenario with a box")
        box = ser.box_from_json(doc["box"], U.d)
        if mode == "forward":
            traj = simulate_forward(U, box, _scenario_faces(doc, "boundary", U, box, False), _scenario_sites(doc, "inputs", U.in_dim, U.d))
        else:
            traj = simulate_backward(U, box, _scenario_faces(doc, "final", U, box, True), _scenario_sites(doc, "outputs", U.out_dim, U.d))
        report.check("energy balance", energy_balance(traj, U), tol or IDENTITY_TOL)
        report.check("system equations", traj.equation_residual(U), tol or IDENTITY_TOL)
        report.safe_window = box.to_json()
        report.output = traj.to_json()
    elif mode == "impulse":
        params = doc.get("impulse", {})
        degree = args.degree if args.degree is not None else int(params.get("degree", 4))
        e = ser.decode_vector(params["vector"], U.in_dim, "impulse vector") if "vector" in params else np.eye(U.in_dim)[0]
        series = impulse_response(U, e, degree)
        oracle = transfer_coefficients(U, degree)
        gap = max(
            (float(np.max(np.abs(series.coeff(n) - oracle.coeff(n) @ e.reshape(-1, 1)))) for n in indices_up_to(U.d, degree, nonnegative=True)),
            default=0.0,
        )
        report.check("impulse vs transfer", gap, tol or IDENTITY_TOL)
        report.safe_window = IndexBox.cube(U.d, 0, degree).to_json()
        report.output = ser.series_to_json(series)
    else:
        params = doc.get("schaffer", {})
        trials = int(params.get("trials", 100))
        box = ser.box_from_json(params["support_box"], U.d) if "support_box" in params else IndexBox.cube(U.d, -2, 2)
        seed = args.seed if args.seed is not None else int(params.get("seed", DEFAULT_SEED))
        report.seed = seed
        report.check("isometry", schaffer_isometry_check(U, trials, box, seed), tol or SCHAFFER_TOL)
        report.check("commutation", schaffer_commutation_check(U, trials, box, seed), tol or SCHAFFER_TOL)
        report.safe_window = box.to_json()
    return report


COMMANDS = {
    "validate": cmd_validate,
    "transfer": cmd_transfer,
    "agler-verify": cmd_agler_verify,
    "classify": cmd_classify,
    "realize": cmd_realize,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grscatter", description="Checks for unitary Givone-Roesser colligations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, path_help="colligation JSON"):
        p = sub.add_parser(name, help=help_)
        p.add_argument("path", help=path_help)
        p.add_argument("--tol", type=float, default=None, help="override the default threshold")
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
        return p

    add("validate", "unitarity and projection residuals")
    add("transfer", "transfer-function coefficients").add_argument("--degree", type=int, default=None)
    p = add("agler-verify", "augmented Agler identity, kernel CDP and balanced-lattice decomposition")
    p.add_argument("--degree", type=int, default=None, help="expansion degree of the kernels")
    p.add_argument("--box", default=None, help="lo..hi, or lo..hi,lo..hi per axis (use --box=-3..3)")
    p.add_argument("--omega", choices=sorted(OMEGAS), default="balanced")
    p = add("classify", "minimality classification with the overlap cross-check")
    p.add_argument("--cert-window", default=None, help="box for the scattering certificate")
    p.add_argument("--cert-depth", type=int, default=None)
    p = add("realize", "colligation from an Agler system", "Agler system JSON")
    p.add_argument("--load", default=None, help="load colligation JSON closing the defect slots")
    p.add_argument("--window", type=int, default=None, help="total degree of the lurking window")
    p.add_argument("--degree", type=int, default=None, help="degree of the compatibility comparison")
    p = add("simulate", "trajectories, impulse response and evolution checks")
    p.add_argument("--mode", choices=["forward", "backward", "impulse", "schaffer-check"], default="forward")
    p.add_argument("--scenario", default=None, help="scenario JSON")
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = COMMANDS[args.command](args)
    except (ser.InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = ser.dumps(report.to_json())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(report.table(), file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from conftest import word_transfer
from grscatter import serialization as ser
from grscatter.catalog import bundled_path
from grscatter.cli import main, parse_box
from grscatter.realization import trivial_load, unitary_equivalence_check


def data(name):
    return str(bundled_path(name))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    doc = json.loads(out.out) if out.out.strip() else None
    return code, doc, out.err


@pytest.mark.parametrize(
    "argv",
    [
        ["validate", "e1.json"],
        ["transfer", "e1.json"],
        ["agler-verify", "e1.json"],
        ["agler-verify", "e2.json", "--box=-2..2"],
        ["agler-verify", "shift.json"],
        ["classify", "e1.json"],
        ["classify", "e2.json", "--cert-window=-2..2", "--cert-depth", "8"],
        ["classify", "shift.json"],
        ["realize", "e2-system.json"],
        ["realize", "e1-system.json", "--load", "trivial-load.json"],
        ["simulate", "e1.json", "--mode", "impulse", "--scenario", "e1-impulse.json"],
        ["simulate", "e2.json", "--mode", "schaffer-check", "--scenario", "e2-schaffer.json"],
        ["simulate", "e2.json", "--mode", "forward", "--scenario", "e2-forward.json"],
        ["simulate", "zero-state.json", "--mode", "impulse"],
    ],
)
def test_passing_commands(capsys, argv):
    argv = [data(a) if a.endswith(".json") else a for a in argv]
    code, doc, _ = run(capsys, *argv)
    assert code == 0 and doc["pass"] is True
    assert all(r["pass"] for r in doc["results"])


def test_report_schema(capsys):
    _, doc, err = run(capsys, "validate", data("e1.json"))
    assert set(doc) == {"command", "inputs", "results", "safe_window", "seed", "pass"}
    assert list(doc["inputs"].values())[0] and len(list(doc["inputs"].values())[0]) == 64
    assert "validate: PASS" in err


def test_realize_without_load_fails(capsys):
    code, doc, _ = run(capsys, "realize", data("e1-system.json"))
    assert code == 1
    names = {r["name"]: r for r in doc["results"]}
    assert not names["domain spans"]["pass"] and not names["range spans"]["pass"]


def test_missing_face_is_input_error(capsys):
    code, doc, err = run(capsys, "simulate", data("e1.json"), "--mode", "forward", "--scenario", data("missing-face.json"))
    assert code == 2 and doc is None
    assert "axis 0 at site [0, 1]" in err


def doubled_b(tmp_path):
    doc = ser.read_json(bundled_path("e1.json"))
    B = np.array([[ser.decode_complex(z) for z in row] for row in doc["B"]])
    doc["B"] = ser.encode_matrix(2 * B)
    path = tmp_path / "bad.json"
    ser.write_json(path, doc)
    return str(path)


@pytest.mark.parametrize("command", ["validate", "transfer", "agler-verify", "classify"])
def test_doubled_b_fails_at_validation(capsys, tmp_path, command):
    code, rep, _ = run(capsys, command, doubled_b(tmp_path))
    assert code == 1 and rep["pass"] is False
    assert "output" not in rep
    assert not next(r for r in rep["results"] if r["name"] == "B*B+D*D=I")["pass"]


def test_zero_state_transfer_is_constant(capsys):
    _, doc, _ = run(capsys, "transfer", data("zero-state.json"))
    assert [t["index"] for t in doc["output"]["terms"]] == [[0]]


def test_truncated_file_is_input_error(capsys, tmp_path):
    path = tmp_path / "cut.json"
    path.write_text(bundled_path("e1.json").read_text()[:40])
    code, doc, err = run(capsys, "validate", str(path))
    assert code == 2 and "invalid JSON" in err


def test_absent_file_is_input_error(capsys, tmp_path):
    code, _, _ = run(capsys, "validate", str(tmp_path / "none.json"))
    assert code == 2


def test_reports_are_byte_identical(capsys):
    argv = ["simulate", data("e2.json"), "--mode", "schaffer-check", "--scenario", data("e2-schaffer.json")]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_transfer_of_example_one_is_single_term(capsys):
    _, doc, _ = run(capsys, "transfer", data("e1.json"))
    terms = doc["output"]["terms"]
    assert [t["index"] for t in terms] == [[1, 1]]
    assert terms[0]["matrix"][0][0][0] == pytest.approx(1.0, abs=1e-14)


def test_transfer_of_example_two_matches_words(capsys, e2):
    _, doc, _ = run(capsys, "transfer", data("e2.json"), "--degree", "3")
    S = ser.series_from_json(doc["output"])
    for t in doc["output"]["terms"]:
        n = tuple(t["index"])
        assert np.max(np.abs(S.coeff(n) - word_transfer(e2, n))) < 1e-12


def test_realized_example_two_is_equivalent(capsys, tmp_path, e2):
    out = tmp_path / "rep.json"
    code = main(["realize", data("e2-system.json"), "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    U = ser.colligation_from_json(ser.read_json(out)["output"])
    assert unitary_equivalence_check(U, e2).status == "equivalent"


def test_classify_reports_overlaps(capsys):
    _, doc, _ = run(capsys, "classify", data("e1.json"))
    assert doc["output"]["overlap"]["dim"] + doc["output"]["overlap"]["shifted_dim"] > 0
    _, doc, _ = run(capsys, "classify", data("shift.json"))
    assert doc["output"]["overlap"]["dim"] == doc["output"]["overlap"]["shifted_dim"] == 0


def test_box_parsing():
    assert parse_box("-1..2", 2).lo == (-1, -1)
    assert parse_box("0..1,-2..2", 2).hi == (1, 2)
    with pytest.raises(ser.InputError):
        parse_box("0..1,0..1", 3)
    with pytest.raises(ser.InputError):
        parse_box("zero", 1)


def test_load_mismatch_is_input_error(capsys, tmp_path):
    doc = ser.read_json(bundled_path("trivial-load.json"))
    path = tmp_path / "load.json"
    ser.write_json(path, ser.load_to_json(trivial_load(doc["d"], 2)))
    code, _, _ = run(capsys, "realize", data("e1-system.json"), "--load", str(path))
    assert code == 2

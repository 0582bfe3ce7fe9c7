import json
import math

import pytest

from trapgap.cli import main, parse_radii
from trapgap.mesh import import_mesh, validate_mesh


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def targets(tmp_path):
    def write(doc, name="t.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)

    return write


def test_design_single_target(capsys, targets):
    code, out, _ = run(capsys, "design", targets({"targets": [[1, 2]], "L": 3}), "--no-header")
    assert code == 0
    doc = json.loads(out)
    assert doc["design"]["b"] == pytest.approx([0.5], abs=1e-12)
    assert doc["design"]["d"] == pytest.approx([0.3183099], abs=1e-7)
    assert doc["sigma"] == [1] and doc["mu"] == [2]


def test_design_two_targets(capsys, targets):
    path = targets({"targets": [[1, 1.2877856], [4, 6.2122144]], "L": 8})
    code, out, _ = run(capsys, "design", path, "--no-header")
    assert code == 0
    assert json.loads(out)["design"]["b"] == pytest.approx([0.25, 0.25], abs=1e-7)


def test_design_exit_codes(capsys, targets):
    code, _, err = run(capsys, "design", targets({"targets": [[1, 2], [1.5, 3]], "L": 8}))
    assert code == 2
    diag = json.loads(err)
    assert diag["error"] == "OrderingViolation" and diag["exit"] == 2
    code, _, err = run(capsys, "design", "/nonexistent/t.json")
    assert code == 2 and json.loads(err)["error"] == "UsageError"


def test_forward_reports_path_agreement(capsys, targets):
    path = targets({"n": 2, "d": [1 / math.pi], "b": [0.5]})
    code, out, _ = run(capsys, "forward", path, "--no-header")
    doc = json.loads(out)
    assert code == 0
    assert doc["mu"] == pytest.approx([2.0], rel=1e-14)
    assert doc["path_agreement"] < 1e-12


def test_forward_invariant_violation(capsys, targets):
    code, _, err = run(capsys, "forward", targets({"n": 2, "d": [0.2, 0.2], "b": [0.1, 0.1]}))
    assert code == 2 and json.loads(err)["error"] == "NonMonotoneSigma"


def test_geometry_and_mesh(capsys, tmp_path):
    code, out, _ = run(capsys, "geometry", "reference-m2", "--no-header")
    assert code == 0
    doc = json.loads(out)
    assert doc["conditions"]["ok"] and len(doc["holes"]) == 2
    out_path = tmp_path / "cell.mesh"
    code, _, _ = run(capsys, "mesh", "reference-m1", "--h-max", "0.05", "--hole-refine", "8", "--out", str(out_path))
    assert code == 0
    assert validate_mesh(import_mesh(out_path.read_text()))["ok"]


def test_bands_table(capsys):
    code, out, _ = run(capsys, "bands", "reference-m1", "--h-max", "0.05", "--hole-refine", "8", "--radii", "0.02")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# trapgap ")
    assert lines[1] == "k,lamN,lamT1,lamT2,lamD"


def test_no_header_is_deterministic(capsys):
    args = ("study", "reference-m1", "--radii", "0.05,0.02", "--h-max", "0.05", "--hole-refine", "4", "--no-header")
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first == second and first[0] == 0
    assert first[1].startswith("r,eps,")


def test_shipped_m2_reference_verifies(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "reference-m2", "--out", str(tmp_path / "v"), "--no-header")
    assert code == 0
    assert json.loads(out)["ok"]
    assert {p.name for p in (tmp_path / "v").iterdir()} == {"study.csv", "gaps.csv", "report.json"}


def test_shipped_m1_reference_verifies(capsys):
    code, out, err = run(capsys, "verify", "reference-m1", "--no-header")
    assert code == 0, err


def test_verify_radius_below_mesh_minimum(capsys):
    code, _, err = run(capsys, "verify", "reference-m1", "--radii", "0.02,0.001")
    assert code == 4 and json.loads(err)["error"] == "MeshFailure"


def test_verify_empty_cell(capsys):
    code, _, err = run(capsys, "verify", "empty-cell")
    assert code == 5 and json.loads(err)["exit"] == 5


def test_knob_validation(capsys):
    code, _, err = run(capsys, "bands", "reference-m1", "--h-max", "0.5")
    assert code == 2
    code, _, _ = run(capsys, "bands", "reference-m1", "--tol", "1e-14")
    assert code == 2


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest", "--seed", "7", "--count", "200", "--no-header")
    doc = json.loads(out)
    assert code == 0 and doc["ok"]
    assert doc["max_round_trip_error"] <= 1e-9
    assert run(capsys, "selftest", "--seed", "7", "--count", "200", "--no-header")[1] == out


def test_parse_radii():
    assert parse_radii("0.05,0.02") == [0.05, 0.02]
    assert parse_radii("0.02:0.01,0.01:0.005") == [(0.02, 0.01), (0.01, 0.005)]

import json
import subprocess
import sys

import numpy as np
import pytest

from pshdisc.cli import load_scenario, main, parse_scenario, read_field_csv, run_scenario
from pshdisc.domain import GridSpec
from pshdisc.envelope import SampledField
from pshdisc.errors import ParseError, RangeError, UnknownName

MINIMAL = """
[scenario]
structure = standard
center = 0, 0
radius = 1

[task validate]
"""

SMOKE = """
[scenario]
structure = standard
function = neg_sq_z1
seed = 3

[task validate]

[task solve-disc]
taylor = 0, 0; 0.3, 0.1j

[task translate]
taylor = 0, 0; 0.3, 0.1j
shift = 0.05, 0.02j

[task envelope]
degree = 1
starts = 2
max_evals = 60

[task envelope-field field]
half_width = 0.2
nodes = 3
"""


def _manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_minimal_config():
    sc = parse_scenario(MINIMAL)
    assert sc.structure == "standard" and sc.radius == 1.0
    assert [t.kind for t in sc.tasks] == ["validate"]
    assert np.all(sc.center == 0)


def test_zero_radius_is_a_range_error():
    with pytest.raises(RangeError) as err:
        parse_scenario(MINIMAL.replace("radius = 1", "radius = 0"))
    assert err.value.field == "scenario.radius"
    assert err.value.line == 5


def test_negative_amplitude_and_small_k():
    text = MINIMAL.replace("radius = 1", "radius = 1\namplitude = -0.1")
    with pytest.raises(RangeError) as err:
        parse_scenario(text)
    assert err.value.field == "scenario.amplitude"
    with pytest.raises(RangeError) as err:
        parse_scenario(MINIMAL + "\n[task pipeline]\nK = 1\n")
    assert err.value.field == "task pipeline.K"


def test_unknown_function_names_the_token():
    with pytest.raises(UnknownName) as err:
        parse_scenario(MINIMAL.replace("radius = 1", "radius = 1\nfunction = banana"))
    assert "banana" in str(err.value)


def test_unknown_task_and_key():
    with pytest.raises(UnknownName):
        parse_scenario(MINIMAL + "\n[task frobnicate]\n")
    with pytest.raises(UnknownName) as err:
        parse_scenario(MINIMAL.replace("[task validate]", "[task validate]\nsamples = 3"))
    assert err.value.field == "task validate.samples"


def test_malformed_text():
    with pytest.raises(ParseError):
        parse_scenario("radius = 1\n")
    with pytest.raises(ParseError):
        parse_scenario(MINIMAL.replace("center = 0, 0", "center = 0"))
    with pytest.raises(ParseError):
        parse_scenario(MINIMAL + "\n[task solve-disc]\n")          # missing taylor
    with pytest.raises(ParseError):
        parse_scenario("[scenario]\n")                               # no tasks


def test_smoke_scenario(tmp_path):
    sc = parse_scenario(SMOKE, base_dir=tmp_path)
    assert run_scenario(sc) == 0
    m = _manifest(tmp_path / "out")
    assert m["passed"] and m["exit_code"] == 0
    assert all(t["status"] == "passed" for t in m["tasks"])
    assert (tmp_path / "out" / "field.csv").exists()
    assert (tmp_path / "out" / "discs" / "solve-disc.json").exists()


def test_escalation_exit_code(tmp_path):
    text = """
[scenario]
structure = conjugated
perturbation = bump
amplitude = 0.8

[task solve-disc big]
taylor = 0, 0; 0.5, 0.3; 0.2, 0.1
degree = 24

[task validate]
mode_check = no
"""
    assert run_scenario(parse_scenario(text), tmp_path) == 1
    m = _manifest(tmp_path)
    err = m["tasks"][0]["error"]
    assert err["type"] == "NoConvergence" and err["stage"] == "solve-disc" and err["task"] == "big"
    # later tasks still run
    assert m["tasks"][1]["status"] in ("passed", "certification_failure")


def test_certification_failure_exit_code(tmp_path):
    text = MINIMAL.replace("radius = 1", "radius = 1\nfunction = neg_sq_z1") + "\n[task pipeline]\nK = 2\n"
    assert run_scenario(parse_scenario(text), tmp_path) == 2
    err = _manifest(tmp_path)["tasks"][1]["error"]
    assert err["type"] == "PshFailure" and err["stage"].startswith("input")


def test_byte_identical_reruns(tmp_path):
    outs = []
    for name in ("a", "b"):
        sc = parse_scenario(SMOKE, base_dir=tmp_path)
        assert run_scenario(sc, tmp_path / name, verbose=True) == 0
        outs.append(tmp_path / name)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert any(str(f).endswith(".csv") for f in files)
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_grid_file_function(tmp_path):
    grid = GridSpec([0, 0], 0.4, 5)
    nodes = grid.nodes()
    SampledField(grid, np.abs(nodes[..., 0]) ** 2).write_csv(tmp_path / "u.csv")
    f = read_field_csv(tmp_path / "u.csv")
    assert f.grid.shape == (5, 5) and f.grid.axes == (0, 1)
    assert np.allclose(f.values, np.abs(nodes[..., 0]) ** 2)
    text = """
[scenario]
function = grid
file = u.csv

[task envelope]
point = 0.1, 0
degree = 1
starts = 1
max_evals = 20
"""
    (tmp_path / "s.ini").write_text(text)
    sc = load_scenario(tmp_path / "s.ini")
    assert run_scenario(sc) == 0
    res = json.loads((tmp_path / "out" / "envelope.json").read_text())
    assert res["value"] <= res["f_at_p"]


def test_main_validate_and_run(tmp_path, capsys):
    (tmp_path / "s.ini").write_text(MINIMAL)
    assert main(["validate", str(tmp_path / "s.ini")]) == 0
    assert "ok" in capsys.readouterr().out
    (tmp_path / "bad.ini").write_text(MINIMAL.replace("radius = 1", "radius = -1"))
    assert main(["validate", str(tmp_path / "bad.ini")]) == 1
    assert main(["run", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "o")]) == 1
    assert _manifest(tmp_path / "o")["error"]["type"] == "RangeError"
    assert main(["run", str(tmp_path / "s.ini"), "--out", str(tmp_path / "ok"), "--seed", "5"]) == 0
    assert _manifest(tmp_path / "ok")["scenario"]["seed"] == 5


def test_module_entry_point(tmp_path):
    (tmp_path / "s.ini").write_text(MINIMAL)
    out = subprocess.run([sys.executable, "-m", "pshdisc", "validate", str(tmp_path / "s.ini")],
                         capture_output=True, text=True)
    assert out.returncode == 0

import json

import pytest

from fermicrit import cli
from fermicrit.state import load_density_matrix

SMALL = {"grid": {"n_per_axis": 32, "box_length": 32.0}, "centers": [[0.3, 0.2, 0.1]],
         "solver": {"max_iters": 500}}


def write_config(tmp_path, **overrides):
    cfg = {**SMALL, "output_dir": str(tmp_path / "out"), **overrides}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def test_print_config(capsys):
    assert cli.main(["print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads(json.dumps(cli.DEFAULT_CONFIG))


def test_minimize_writes_outputs(tmp_path, monkeypatch):
    monkeypatch.delenv("FERMICRIT_OUTPUT_DIR", raising=False)
    path = write_config(tmp_path, coupling={"a": 0.0})
    before = path.read_text()
    assert cli.main(["minimize", "--config", str(path)]) == 0
    out = tmp_path / "out"
    energy = json.loads((out / "energy.json").read_text())
    assert energy["multipliers"][0] == pytest.approx(-0.25, rel=0.1)
    assert (out / "trace.csv").exists()
    gamma = load_density_matrix(out / "ground_state.fcdm")
    assert gamma.rank == 1
    assert path.read_text() == before  # config untouched


def test_minimize_is_reproducible(tmp_path, monkeypatch):
    monkeypatch.delenv("FERMICRIT_OUTPUT_DIR", raising=False)
    blobs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        path = write_config(d, coupling={"a": 2.0}, particle_number=1.5)
        assert cli.main(["minimize", "--config", str(path)]) == 0
        blobs.append((d / "out" / "ground_state.fcdm").read_bytes())
    assert blobs[0] == blobs[1]


def test_output_dir_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FERMICRIT_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    path = write_config(tmp_path, coupling={"a": 0.0})
    assert cli.main(["minimize", "--config", str(path)]) == 0
    assert (tmp_path / "elsewhere" / "energy.json").exists()


def test_boundary_warning(tmp_path, monkeypatch, caplog):
    monkeypatch.delenv("FERMICRIT_OUTPUT_DIR", raising=False)
    path = write_config(tmp_path, grid={"n_per_axis": 16, "box_length": 12.0},
                        centers=[[0.0, 0.0, 0.0]], coupling={"a": 0.0})
    assert cli.main(["minimize", "--config", str(path)]) == 0
    assert "box boundary" in caplog.text


@pytest.mark.parametrize("overrides, needle", [
    ({"centers": [[0, 0, 0], [0, 0, 0]]}, "duplicate"),
    ({"grid": {"n_per_axis": 33}}, "n_per_axis"),
    ({"particle_number": -1}, "particle_number"),
    ({"bogus": 1}, "unknown"),
    ({"coupling": {"b": 1}}, "coupling"),
    ({"solver": {"no_such_knob": 1}}, "solver"),
])
def test_config_errors_exit_1(tmp_path, capsys, overrides, needle):
    path = write_config(tmp_path, **overrides)
    assert cli.main(["minimize", "--config", str(path)]) == 1
    assert needle in capsys.readouterr().err


def test_missing_config_file_exit_1(tmp_path):
    assert cli.main(["minimize", "--config", str(tmp_path / "nope.json")]) == 1


def test_blowup_needs_integer_particle_number(tmp_path):
    path = write_config(tmp_path, coupling={"eps_fractions": [0.3, 0.2], "a_star": 9.57})
    assert cli.main(["blowup", "--config", str(path)]) == 1


def test_nonexist_below_threshold_exit_1(tmp_path):
    path = write_config(tmp_path, coupling={"a": 1.0, "a_star": 9.57})
    assert cli.main(["nonexist", "--config", str(path)]) == 1


def test_verify_fast(tmp_path, capsys):
    assert cli.main(["verify", "--level", "fast", "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "verify.xml").exists() and (tmp_path / "verify.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_verify_bad_level(tmp_path):
    assert cli.main(["verify", "--level", "nope", "--output-dir", str(tmp_path)]) == 1

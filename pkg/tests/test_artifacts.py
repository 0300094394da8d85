import numpy as np
import pytest
from numpy.testing import assert_allclose

from dqpe.artifacts import RunDirectory
from dqpe.chem.geometry import Geometry, h2
from dqpe.errors import InputError, StateOverlapError


def test_csv_floats_roundtrip_exactly(tmp_path):
    run_dir = RunDirectory(tmp_path)
    values = [0.1 + 0.2, 1 / 3, np.float64(2.0) ** -40]
    run_dir.write_csv("values.csv", ({"index": i, "value": v} for i, v in enumerate(values)))
    rows = run_dir.read_csv("values.csv")
    assert [float(row["value"]) for row in rows] == [float(v) for v in values]
    assert [row["index"] for row in rows] == ["0", "1", "2"]


def test_csv_columns_and_flags(tmp_path):
    run_dir = RunDirectory(tmp_path)
    run_dir.write_csv(
        "flags.csv",
        [{"a": 1, "flag": True}, {"a": 2, "flag": np.bool_(False), "extra": "x"}],
    )
    text = (tmp_path / "flags.csv").read_text().splitlines()
    assert text[0] == "a,flag,extra"
    assert text[1] == "1,true,"
    assert text[2] == "2,false,x"


def test_csv_explicit_columns_leave_gaps_empty(tmp_path):
    run_dir = RunDirectory(tmp_path)
    run_dir.write_csv("gaps.csv", [{"b": 2}], columns=["a", "b"])
    assert run_dir.read_csv("gaps.csv") == [{"a": "", "b": "2"}]


def test_json_carries_version_and_numpy_values(tmp_path):
    run_dir = RunDirectory(tmp_path)
    run_dir.write_json("doc.json", {
        "array": np.arange(3),
        "count": np.int64(4),
        "theta": 0.5 + 0.25j,
        "path": tmp_path,
    })
    doc = run_dir.read_json("doc.json")
    assert doc["version"] == 1
    assert doc["array"] == [0, 1, 2]
    assert doc["count"] == 4
    assert doc["theta"] == [0.5, 0.25]
    assert doc["path"] == str(tmp_path)


def test_xyz_frames_are_readable(tmp_path):
    run_dir = RunDirectory(tmp_path)
    path = run_dir.write_xyz_frames("trace.xyz", [(h2(0.7), "iteration=0"), (h2(0.75), "iteration=1")])
    last = Geometry.from_xyz(path)
    assert_allclose(last.bond_lengths()[(0, 1)], 0.75, atol=1e-12)
    assert path.read_text().count("iteration=") == 2


def test_error_document(tmp_path):
    run_dir = RunDirectory(tmp_path)
    exc = StateOverlapError("overlap too small", overlap=0.05, weights=np.array([0.05, 0.95]))
    run_dir.write_error(exc)
    doc = run_dir.read_json("error.json")
    assert doc["error"] == "StateOverlapError"
    assert doc["message"] == "overlap too small"
    assert doc["details"] == {"overlap": 0.05, "weights": [0.05, 0.95]}
    assert exc.exit_code == 3


def test_directory_under_a_file_is_refused(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(InputError):
        RunDirectory(blocker / "run")


def test_unwritable_artifact_is_an_input_error(tmp_path):
    run_dir = RunDirectory(tmp_path)
    (tmp_path / "taken.json").mkdir()
    (tmp_path / "taken.csv").mkdir()
    with pytest.raises(InputError) as info:
        run_dir.write_json("taken.json", {"a": 1})
    assert info.value.details["path"] == str(tmp_path / "taken.json")
    with pytest.raises(InputError):
        run_dir.write_csv("taken.csv", [{"a": 1}])
    with pytest.raises(InputError):
        run_dir.write_xyz_frames("taken.csv", [(h2(0.7), "frame")])

import numpy as np
import pandas as pd
import pytest
from pyprism.errors import ParseError
from pyprism.formats import (
    parse_table,
    read_csv,
    read_manifest,
    read_matrix,
    read_observations,
    write_csv,
    write_manifest,
    write_matrix,
    write_observations,
)
from pyprism.model import MixingMatrix


def test_matrix_file_is_exact(tmp_path, rng):
    h = MixingMatrix(rng.uniform(size=(4, 3)) / 7.0)
    path = write_matrix(tmp_path / "h.txt", h)
    assert path.read_text().splitlines()[0] == "4 3"
    assert read_matrix(path) == h


def test_observations_file(tmp_path, rng):
    y = rng.normal(size=(5, 2)) * 1e-300
    assert np.array_equal(read_observations(write_observations(tmp_path / "y.txt", y)), y)


def test_no_temp_files_left(tmp_path):
    write_matrix(tmp_path / "h.txt", np.eye(2))
    assert [p.name for p in tmp_path.iterdir()] == ["h.txt"]


def test_creates_parent_directories(tmp_path):
    path = write_matrix(tmp_path / "a" / "b" / "h.txt", np.eye(2))
    assert path.exists()


@pytest.mark.parametrize(
    "text, line, message",
    [
        ("", 1, "empty file"),
        ("2\n1 2\n", 1, "two integers"),
        ("2 x\n", 1, "two integers"),
        ("2 2\n1 2\n", 3, "expected 2 rows"),
        ("2 2\n1 2\n3\n", 3, "expected 2 values"),
        ("1 2\n1 abc\n", 2, "not a real number"),
        ("1 2\n1 nan\n", 2, "finite"),
    ],
)
def test_parse_errors_carry_line(text, line, message):
    with pytest.raises(ParseError, match=message) as info:
        parse_table(text, "m.txt")
    assert info.value.line == line
    assert str(info.value).startswith(f"m.txt:{line}:")


def test_blank_lines_ignored():
    assert np.array_equal(parse_table("\n1 2\n\n3 4\n"), [[3.0, 4.0]])


def test_matrix_needs_two_columns(tmp_path):
    path = tmp_path / "h.txt"
    path.write_text("2 1\n1\n2\n")
    with pytest.raises(ParseError):
        read_matrix(path)


def test_manifest(tmp_path):
    path = write_manifest(tmp_path / "manifest.json", {"seed": 3, "alpha": np.ones(2), "snr_db": 10.0})
    assert read_manifest(path) == {"seed": 3, "alpha": [1.0, 1.0], "snr_db": 10.0}


def test_manifest_parse_error(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text('{\n  "seed": 3,\n  oops\n}\n')
    with pytest.raises(ParseError) as info:
        read_manifest(path)
    assert info.value.line == 3


def test_manifest_must_be_object(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("[1, 2]")
    with pytest.raises(ParseError, match="JSON object"):
        read_manifest(path)


def test_csv_floats_survive(tmp_path):
    frame = pd.DataFrame({"method": ["vca", "lisa"], "mse": [1.0 / 3.0, 2.0 ** -40]})
    path = write_csv(tmp_path / "r.csv", frame)
    assert path.read_text().splitlines()[0] == "method,mse"
    pd.testing.assert_frame_equal(read_csv(path), frame)

"""
Plain-text file formats.

Matrix file:   first line "d k", then d rows of k whitespace-separated reals.
Dataset file:  first line "N d", then N rows of d reals (one observation per row).
Manifest:      JSON object describing a generated dataset.

Reals are written with 17 significant digits so that reading a file back gives
the exact same doubles. All writes go to a temporary file in the target
directory that is then renamed over the destination.
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import orjson
import pandas as pd

from .errors import ParseError
from .model import MatrixLike, MixingMatrix, as_mixing_matrix

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
FLOAT_FORMAT = "%.17g"


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write ``payload`` to ``path`` through a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def format_table(values: np.ndarray) -> str:
    values = np.asarray(values, dtype=float)
    header = f"{values.shape[0]} {values.shape[1]}"
    rows = [" ".join(FLOAT_FORMAT % v for v in row) for row in values]
    return "\n".join([header, *rows]) + "\n"


def parse_table(text: str, source: str = "<string>") -> np.ndarray:
    """Parse a "rows cols" header followed by the rows; errors carry line numbers."""
    lines = text.splitlines()
    numbered = [(i + 1, line) for i, line in enumerate(lines) if line.strip()]
    if not numbered:
        raise ParseError(source, 1, "empty file, expected a 'rows cols' header")

    header_line, header = numbered[0]
    fields = header.split()
    if len(fields) != 2:
        raise ParseError(source, header_line, f"header must hold two integers, got {header.strip()!r}")
    try:
        n_rows, n_cols = int(fields[0]), int(fields[1])
    except ValueError:
        raise ParseError(source, header_line, f"header must hold two integers, got {header.strip()!r}") from None
    if n_rows < 1 or n_cols < 1:
        raise ParseError(source, header_line, f"header dimensions must be positive, got {n_rows} x {n_cols}")

    body = numbered[1:]
    if len(body) != n_rows:
        line = body[-1][0] + 1 if body else header_line + 1
        raise ParseError(source, line, f"expected {n_rows} rows, found {len(body)}")

    values = np.empty((n_rows, n_cols))
    for row, (line_no, line) in enumerate(body):
        tokens = line.split()
        if len(tokens) != n_cols:
            raise ParseError(source, line_no, f"expected {n_cols} values, found {len(tokens)}")
        try:
            values[row] = [float(token) for token in tokens]
        except ValueError as exc:
            raise ParseError(source, line_no, f"not a real number: {exc}") from None
        if not np.all(np.isfinite(values[row])):
            raise ParseError(source, line_no, "values must be finite")
    return values


def _read(path: PathLike) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(str(path), 1, f"not a text file: {exc}") from None


def write_matrix(path: PathLike, h: MatrixLike) -> Path:
    return atomic_write_text(path, format_table(as_mixing_matrix(h).entries))


def read_matrix(path: PathLike) -> MixingMatrix:
    values = parse_table(_read(path), str(path))
    if values.shape[1] < 2:
        raise ParseError(str(path), 1, f"mixing matrix needs k >= 2 columns, header says {values.shape[1]}")
    return MixingMatrix(values)


def write_observations(path: PathLike, observations: np.ndarray) -> Path:
    return atomic_write_text(path, format_table(observations))


def read_observations(path: PathLike) -> np.ndarray:
    return parse_table(_read(path), str(path))


def write_manifest(path: PathLike, manifest: Dict[str, Any]) -> Path:
    payload = orjson.dumps(manifest, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
    return atomic_write_bytes(path, payload + b"\n")


def read_manifest(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        manifest = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as exc:
        raise ParseError(str(path), exc.lineno, exc.msg) from None
    if not isinstance(manifest, dict):
        raise ParseError(str(path), 1, "manifest must be a JSON object")
    return manifest


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    """Deterministic CSV (fixed float format, no index)."""
    return atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")

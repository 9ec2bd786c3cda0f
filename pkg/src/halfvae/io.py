"""CSV and JSON persistence with lossless float formatting.

Floats are written with ``repr``, the shortest string that parses back to
the identical double, so every file round-trips bit for bit.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, PipelineIOError


def _fmt(v):
    return repr(float(v))


def write_json(path, payload):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")
    except OSError as exc:
        raise PipelineIOError(f"cannot write {path}: {exc}") from exc
    except ValueError as exc:
        raise PipelineIOError(f"refusing to write non-finite values to {path}") from exc


def read_json(path, what="file", producer=None):
    """Parse a JSON file; a missing file names the command that produces it."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        hint = f" (run `halfvae {producer}` first)" if producer else ""
        raise PipelineIOError(f"{what} not found: {path}{hint}") from None
    except OSError as exc:
        raise PipelineIOError(f"cannot read {what} {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        if what == "config":
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        raise PipelineIOError(f"{what} {path} is not valid JSON: {exc}") from None


def write_columns(path, header, columns):
    """Write equal-length columns under ``header``, one CSV row per index."""
    path = Path(path)
    columns = [np.asarray(c, dtype=np.float64) for c in columns]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in zip(*columns):
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise PipelineIOError(f"cannot write {path}: {exc}") from exc


def read_columns(path, what="file", producer=None):
    """Return ``(header, matrix)`` where ``matrix[i]`` is column ``i``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        hint = f" (run `halfvae {producer}` first)" if producer else ""
        raise PipelineIOError(f"{what} not found: {path}{hint}") from None
    except OSError as exc:
        raise PipelineIOError(f"cannot read {what} {path}: {exc}") from exc
    if not rows:
        raise PipelineIOError(f"{what} {path} is empty")
    header, body = rows[0], rows[1:]
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise PipelineIOError(f"{what} {path} has a non-numeric entry: {exc}") from None
    if values.size == 0:
        values = values.reshape(0, len(header))
    if values.ndim != 2 or values.shape[1] != len(header):
        raise PipelineIOError(f"{what} {path} has ragged rows")
    return header, values.T.copy()


def write_signals(path, prefix, mat):
    """Rows of ``mat`` become columns ``<prefix>_1 .. <prefix>_R``."""
    mat = np.asarray(mat, dtype=np.float64)
    write_columns(path, [f"{prefix}_{i + 1}" for i in range(mat.shape[0])], mat)


def read_signals(path, prefix, what="file", producer=None):
    header, mat = read_columns(path, what, producer)
    expected = [f"{prefix}_{i + 1}" for i in range(len(header))]
    if header != expected:
        raise PipelineIOError(f"{what} {path}: expected columns {expected}, found {header}")
    return mat

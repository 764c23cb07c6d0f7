"""CSV and JSON helpers with deterministic formatting."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "DataError",
    "read_matrix_csv",
    "write_matrix_csv",
    "write_rows_csv",
    "read_labels_csv",
    "write_json",
    "read_json",
    "fmt_float",
]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Unreadable or malformed input data (CLI exit code 3)."""


def fmt_float(x) -> str:
    """Shortest round-tripping representation; empty string for None."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV (rows = observations); a non-numeric first row is a header."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = None
    if not all(_is_number(c.strip()) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    width = len(rows[0])
    if header is not None and len(header) != width:
        raise DataError(f"{path}: header has {len(header)} columns but data has {width}")
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 1} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at data row {i + 1}, column {j + 1}"
                ) from None
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise DataError(f"{path}: non-finite value at data row {i + 1}, column {j + 1}")
    return out, header


def write_matrix_csv(path, M, header: Sequence[str] | None = None) -> None:
    M = np.atleast_2d(np.asarray(M))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in M:
            w.writerow([fmt_float(x) for x in row])


def write_rows_csv(path, header: Sequence[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt_float(c) for c in row])


def read_labels_csv(path) -> list[int]:
    M, _ = read_matrix_csv(path)
    labels = M.reshape(-1)
    if not np.all(labels == np.round(labels)):
        raise DataError(f"{path}: labels must be integers")
    return [int(x) for x in labels]


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None

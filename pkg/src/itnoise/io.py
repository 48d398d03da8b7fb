"""CSV and JSON output with reproducible formatting.

Floats are written with 17 significant digits so a file read back gives the
same binary values.  Every file is written to a temporary name in the target
directory and moved into place, so a reader never sees a half-written file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if value is None:
        return ""
    return str(value)


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write a CSV file and return its sha256 hex digest."""
    data = csv_bytes(header, rows)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def write_columns(path: Path | str, columns: dict) -> str:
    """Write equal-length array columns; keys become the header."""
    arrays = [np.atleast_1d(np.asarray(v)) for v in columns.values()]
    return write_csv(path, list(columns), zip(*arrays))


def read_csv(path: Path | str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value"):  # enums
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def json_bytes(payload) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


def write_json(path: Path | str, payload) -> str:
    data = json_bytes(payload)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def config_hash(payload) -> str:
    """Stable digest of a JSON-serialisable configuration."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(canon.encode()).hexdigest()

"""Deterministic CSV and JSON writers.

Numbers are written in fixed scientific notation with nine significant
digits, ``.`` as decimal separator and LF line endings, so that identical
results always give identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ExportError, PhysicsError

NUMBER_FORMAT = "{:.8e}"


class NonFiniteResultError(PhysicsError):
    """A result table holds NaN or infinity."""


@dataclass
class Table:
    """Named columns of equal length; the first column is the grid coordinate.

    ``columns`` maps a unit-annotated header (``delta_Hz``, ``eta_cold``)
    to a 1-D array of floats or a sequence of strings.
    """

    name: str
    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table {self.name!r}: columns differ in length {sorted(lengths)}")

    @property
    def rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def check_finite(self) -> None:
        keys = list(self.columns)
        first = self.columns[keys[0]]
        for key in keys:
            col = self.columns[key]
            if _is_text(col):
                continue
            arr = np.asarray(col, dtype=float)
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                i = int(bad[0])
                raise NonFiniteResultError(
                    f"table {self.name!r}: column {key!r} is {arr[i]} at row {i} ({keys[0]} = {_cell(first[i])})"
                )


def _is_text(col) -> bool:
    return len(col) > 0 and isinstance(col[0], str)


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if v == 0.0:
        v = 0.0  # drop the sign of negative zero
    return NUMBER_FORMAT.format(v)


def format_csv(table: Table) -> str:
    table.check_finite()
    keys = list(table.columns)
    lines = [",".join(keys)]
    cols = [table.columns[k] for k in keys]
    for i in range(table.rows):
        lines.append(",".join(_cell(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def _plain(value):
    """JSON-ready copy with floats in the table number format."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return None
        return float(_cell(v))
    return value


def format_json(table: Table, header: dict) -> str:
    table.check_finite()
    doc = {
        "manifest": _plain(header),
        "table": table.name,
        "columns": list(table.columns),
        "data": {k: _plain(list(v)) for k, v in table.columns.items()},
        "meta": _plain(table.meta),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def export(table: Table, fmt: str, directory, header: dict | None = None) -> Path:
    """Write ``table`` as ``<directory>/<name>.<fmt>`` and return the path."""
    if fmt == "csv":
        text = format_csv(table)
    elif fmt == "json":
        text = format_json(table, header or {})
    else:
        raise ExportError(f"unknown export format {fmt!r}")
    return write_text(Path(directory) / f"{table.name}.{fmt}", text)


def write_manifest(manifest: dict, directory) -> Path:
    text = json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n"
    return write_text(Path(directory) / "manifest.json", text)

"""Deterministic CSV and JSON writers for result files.

Reruns with the same inputs must produce byte-identical files, so floats are
formatted with a fixed precision, keys are sorted and line endings are LF.
"""

import json
import math
from collections.abc import Mapping, Sequence
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from fibag.errors import DataFormatError

FLOAT_FORMAT = "%.10g"


def _plain(value):
    """Convert numpy and enum values into JSON-native ones."""
    if isinstance(value, Mapping):
        return {str(_plain(k)): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # NaN and inf are not JSON
        return float(FLOAT_FORMAT % value) if math.isfinite(value) else None
    return value


def to_json_text(payload) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(payload, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json_text(payload), encoding="utf-8")
    return path


def write_csv(table: pd.DataFrame | Sequence[Mapping], path: Path) -> Path:
    frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(list(table))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


class MalformedTable(DataFormatError):
    """Raised when a result table cannot supply the columns a stage reads."""


def read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise MalformedTable(f"{path}: {exc}") from exc


def require_columns(table: pd.DataFrame, columns: Sequence[str], source: Path | str) -> None:
    missing = [c for c in columns if c not in table.columns]
    if missing:
        raise MalformedTable(f"{source} lacks column(s): {', '.join(missing)}")


def numeric_column(table: pd.DataFrame, column: str, source: Path | str) -> np.ndarray:
    values = pd.to_numeric(table[column], errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(bad.to_numpy().argmax())
        cell = table[column].iloc[row]
        raise MalformedTable(f"{source}: missing or non-numeric {column} {cell!r}")
    return values.to_numpy(dtype=float)

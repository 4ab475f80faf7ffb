"""JSON/CSV emission with fixed number formatting and atomic writes.

Floats are written with 17 significant digits so that every value round
trips exactly; non-finite values become ``null``.  Keys keep insertion order,
which the producers make deterministic.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = f"{x:.17g}"
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def dumps(obj, indent: int = 1) -> str:
    """Serialize ``obj`` to JSON with 17-significant-digit floats."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _fmt_float(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(k) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(_plain(obj), 0) + "\n"


def atomic_write_text(path, text: str) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps(obj))


def csv_text(header: list[str], columns: list) -> str:
    """Columns of possibly unequal length; missing cells are left empty."""
    n = max((len(c) for c in columns), default=0)
    lines = [",".join(header)]
    for i in range(n):
        row = []
        for c in columns:
            row.append(_fmt_float(float(c[i])).replace("null", "nan") if i < len(c) else "")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_csv(path, header: list[str], columns: list) -> Path:
    return atomic_write_text(path, csv_text(header, columns))


def emit_report(results: dict, schema_version: str = SCHEMA_VERSION) -> dict:
    """Normalize a results mapping to the report schema.

    The schema is ``{meta, islands, gaps, landau, fits}`` plus any extra
    sections present in ``results``; absent lists become ``[]``.
    """
    out = {
        "meta": {"schemaVersion": schema_version, **dict(results.get("meta", {}))},
        "islands": list(results.get("islands") or []),
        "gaps": list(results.get("gaps") or []),
        "landau": dict(results.get("landau") or {"predicted": [], "deviations": []}),
        "fits": list(results.get("fits") or []),
    }
    for k, v in results.items():
        if k not in out:
            out[k] = v
    return _plain(out)


def parse_report(text: str) -> dict:
    return json.loads(text)

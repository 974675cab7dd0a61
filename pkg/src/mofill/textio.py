"""Shared helpers for the line-oriented text formats."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List

import numpy as np


def fmt_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def parse_header(line: str, magic: str) -> Dict[str, str]:
    parts = line.strip().split()
    if len(parts) < 2 or parts[0] != magic or parts[1] != "v1":
        raise ValueError(f"expected header '{magic} v1', got {line.strip()!r}")
    out = {}
    for p in parts[2:]:
        k, _, v = p.partition("=")
        out[k] = v
    return out


def read_rows(lines: List[str], width: int, what: str) -> np.ndarray:
    rows = []
    for k, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        vals = line.split(",")
        if len(vals) != width:
            raise ValueError(f"{what} line {k}: expected {width} values, got {len(vals)}")
        rows.append([float(v) for v in vals])
    return np.array(rows, dtype=np.float64).reshape(-1, width)

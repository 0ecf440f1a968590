"""Deterministic trace and message output.

Every file starts with ``#``-prefixed metadata lines (seed, scenario
digest, tool version); the body is locale-free and byte-stable for a given
input.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".12g")


def meta_lines(seed, scenario_digest: str | None = None, **extra) -> list:
    lines = [f"tool: psdm {__version__}", f"seed: {int(seed)}"]
    if scenario_digest:
        lines.append(f"scenario_sha256: {scenario_digest}")
    lines += [f"{k}: {v}" for k, v in extra.items()]
    return lines


def write_csv(path, columns: dict, meta: list, first: str | None = "time_s") -> Path:
    """One row per index; ``columns`` must start with ``first`` when given."""
    names = list(columns)
    if not names or (first is not None and names[0] != first):
        raise ValueError(f"first column must be {first}")
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("all columns must have the same length")
    if any(np.iscomplexobj(c) for c in cols):
        raise ValueError("split complex probes into real columns first")
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*(c.tolist() for c in cols)):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Returns (meta dict, columns dict of float arrays)."""
    meta, header, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition(": ")
            meta[k] = v
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([float(x) for x in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return meta, {h: data[:, i] for i, h in enumerate(header)}


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # json emits bare Infinity/NaN, which strict parsers reject
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def write_json(path, obj, meta: list | None = None) -> Path:
    body = _clean(obj)
    if meta is not None:
        body = {"meta": dict(line.split(": ", 1) for line in meta), **body}
    path = Path(path)
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def write_jsonl(path, records, meta: list | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for line in meta or []:
            fh.write(f"# {line}\n")
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True, default=_jsonable) + "\n")
    return path


def read_jsonl(path) -> list:
    return [json.loads(line) for line in Path(path).read_text().splitlines()
            if line and not line.startswith("#")]

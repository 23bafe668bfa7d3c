"""Field dumps: JSON header + little-endian float64 payload, or plain CSV.

A dump ``stem`` produces ``stem.json`` (``dim, lo, hi, n_nodes, name`` plus
optional extra keys) and ``stem.bin`` (row-major values). The CSV variant
writes one row per node: coordinates then value, with ``repr`` floats so the
round trip is exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .mesh import Grid, ScalarField, build_grid

_DTYPE = np.dtype("<f8")


def _header(field: ScalarField, name: str, extra: dict | None) -> dict:
    g = field.grid
    head = {
        "dim": g.dim,
        "lo": list(g.lo),
        "hi": list(g.hi),
        "n_nodes": list(g.n_nodes),
        "name": name,
    }
    if g.unbounded_truncation:
        head["unbounded_truncation"] = True
    if extra:
        head.update(extra)
    return head


def _grid_from_header(head: dict) -> Grid:
    return build_grid(head["dim"], head["lo"], head["hi"], head["n_nodes"],
                      unbounded_truncation=head.get("unbounded_truncation", False))


def save_field(field: ScalarField, stem, name: str = "field", extra: dict | None = None) -> tuple[Path, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = stem.with_suffix(".json")
    bin_path = stem.with_suffix(".bin")
    json_path.write_text(json.dumps(_header(field, name, extra), indent=2, sort_keys=True) + "\n")
    bin_path.write_bytes(field.values.astype(_DTYPE).tobytes(order="C"))
    return json_path, bin_path


def load_field(stem) -> tuple[ScalarField, dict]:
    stem = Path(stem)
    head = json.loads(stem.with_suffix(".json").read_text())
    grid = _grid_from_header(head)
    vals = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=_DTYPE)
    if vals.size != grid.size:
        raise ValueError(f"payload has {vals.size} values, header implies {grid.size}")
    return ScalarField(grid, vals.astype(float)), head


def save_field_csv(field: ScalarField, path, name: str = "field") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = field.grid
    coords = [f"x{k}" for k in range(g.dim)]
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(_header(field, name, None), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(coords + [name])
        for pt, val in zip(g.points, field.values):
            w.writerow([repr(float(c)) for c in pt] + [repr(float(val))])
    return path


def load_field_csv(path) -> tuple[ScalarField, dict]:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("CSV field dump must start with a '# {header}' line")
        head = json.loads(first[2:])
        rows = list(csv.reader(fh))
    grid = _grid_from_header(head)
    vals = np.array([float(r[-1]) for r in rows[1:]])
    return ScalarField(grid, vals), head

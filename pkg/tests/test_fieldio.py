import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from indefconc.fieldio import load_field, load_field_csv, save_field, save_field_csv
from indefconc.mesh import ScalarField, build_grid

values = arrays(float, 12, elements=st.floats(allow_nan=False, allow_infinity=False, width=64))


@given(values)
def test_binary_round_trip_is_exact(tmp_path_factory, vals):
    g = build_grid(2, [-1.0, 0.0], [1.0, 0.3], [3, 4])
    stem = tmp_path_factory.mktemp("dump") / "f"
    save_field(ScalarField(g, vals), stem, name="u", extra={"n": 3})
    back, head = load_field(stem)
    assert back.grid == g
    assert np.array_equal(back.values, vals)
    assert head["name"] == "u" and head["n"] == 3


@given(values)
def test_csv_round_trip_is_exact(tmp_path_factory, vals):
    g = build_grid(1, 0.0, 1.0, 12)
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    save_field_csv(ScalarField(g, vals), path)
    back, _ = load_field_csv(path)
    assert np.array_equal(back.values, vals)


def test_header_layout(tmp_path):
    g = build_grid(1, -2.0, 2.0, 7, unbounded_truncation=True)
    json_path, bin_path = save_field(g.constant(1.5), tmp_path / "c")
    head = json.loads(json_path.read_text())
    assert head["dim"] == 1 and head["n_nodes"] == [7] and head["unbounded_truncation"] is True
    assert bin_path.stat().st_size == 7 * 8
    back, _ = load_field(tmp_path / "c")
    assert back.grid.unbounded_truncation


def test_payload_size_mismatch(tmp_path):
    g = build_grid(1, 0.0, 1.0, 5)
    save_field(g.constant(1.0), tmp_path / "f")
    (tmp_path / "f.bin").write_bytes(np.zeros(4).tobytes())
    with pytest.raises(ValueError):
        load_field(tmp_path / "f")


def test_csv_requires_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("x0,u\n0.5,1.0\n")
    with pytest.raises(ValueError):
        load_field_csv(p)

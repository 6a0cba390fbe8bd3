import re
from datetime import datetime

import numpy as np
import pytest

from congestion_mfc.exception.custom_exception import FieldFormatError
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid, VectorField
from congestion_mfc.utils.config_loader import locate_key, parse_config_text
from congestion_mfc.utils.field_io import (
    field_to_frame,
    read_field,
    read_spatial_slice,
    write_field,
    write_spatial_slice,
)
from congestion_mfc.utils.hashing import generate_run_id
from congestion_mfc.utils.report_io import format_report, parse_report
from congestion_mfc.utils.thread_pool import map_ordered


def test_field_file_keeps_grid_and_staggering(tmp_path, grid_2d, rng):
    z = VectorField(grid_2d, rng.normal(size=grid_2d.shape(Staggering.CELL_TIME) + (2,)))
    loaded = read_field(write_field(tmp_path / "z.mfc", z))
    assert isinstance(loaded, VectorField)
    assert loaded.grid == grid_2d
    np.testing.assert_array_equal(loaded.values, z.values)


def test_field_file_rejects_bad_input(tmp_path, small_grid):
    bad = tmp_path / "bad.mfc"
    bad.write_bytes(b"XXXXXXXX" + bytes(64))
    with pytest.raises(FieldFormatError):
        read_field(bad)

    truncated = tmp_path / "short.mfc"
    truncated.write_bytes(b"MFC")
    with pytest.raises(FieldFormatError):
        read_field(truncated)

    with pytest.raises(FieldFormatError):
        read_field(tmp_path / "absent.mfc")

    path = write_spatial_slice(tmp_path / "m0.mfc", small_grid, np.ones(small_grid.nx))
    with pytest.raises(FieldFormatError):
        read_field(path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FieldFormatError):
        read_spatial_slice(path)


def test_field_frame_layout(small_grid):
    values = np.arange(np.prod(small_grid.shape(Staggering.NODE_TIME)), dtype=float)
    phi = SpaceTimeField(small_grid, values.reshape(small_grid.shape(Staggering.NODE_TIME)), Staggering.NODE_TIME)
    frame = field_to_frame(phi)
    assert len(frame) == values.size
    assert list(frame.columns) == ["t", "x0", "value"]
    assert frame["t"].iloc[-1] == pytest.approx(small_grid.T)


def test_report_parsing():
    text = format_report(
        {
            "solver": {"converged": False, "iterations": 12, "final_gap": 0.1, "note": None},
            "certificate.clauses": {"hjb": True},
        }
    )
    report = parse_report("# comment\n" + text)
    assert report["solver"] == {"converged": False, "iterations": 12, "final_gap": 0.1, "note": None}
    assert report["certificate.clauses"] == {"hjb": True}
    assert parse_report("[a]\nvalues = 1, 2.5\n")["a"]["values"] == [1, 2.5]
    with pytest.raises(ValueError):
        parse_report("[a]\nnot a pair\n")


def test_locate_key_lines():
    text = "model:\n  alpha: 0.5\ngrid:\n  nx: 8\n  nt: 4\n"
    assert locate_key(text, ("grid", "nt")) == 5
    assert locate_key(text, ("model", "missing")) == 1
    assert locate_key("a: [1\n", ("a",)) is None
    assert parse_config_text("") == {}


def test_run_id_format():
    run_id = generate_run_id("config", now=datetime(2025, 3, 7, 14, 5))
    assert run_id == generate_run_id("config", now=datetime(2025, 3, 7, 14, 5))
    assert re.fullmatch(r"run_07_mar_2025_02-05_pm_[0-9a-f]{8}", run_id)
    assert generate_run_id("other", now=datetime(2025, 3, 7, 14, 5)) != run_id


def test_map_ordered_keeps_order():
    assert map_ordered(lambda x: x * x, range(50)) == [x * x for x in range(50)]


def test_grid_equality_survives_file_header(tmp_path):
    grid = TorusGrid(d=1, nx=12, nt=6, T=0.5)
    m = SpaceTimeField(grid, np.ones(grid.shape(Staggering.CELL_TIME)), Staggering.CELL_TIME)
    loaded = read_field(write_field(tmp_path / "m.mfc", m))
    assert loaded.grid == grid
    assert loaded.staggering == Staggering.CELL_TIME


def test_one_dimensional_flux_keeps_its_component_axis(tmp_path, small_grid, rng):
    z = VectorField(small_grid, rng.normal(size=small_grid.shape(Staggering.CELL_TIME) + (1,)))
    loaded = read_field(write_field(tmp_path / "z.mfc", z))
    assert isinstance(loaded, VectorField)
    assert loaded.values.shape == (small_grid.nt, small_grid.nx, 1)
    np.testing.assert_array_equal(loaded.values, z.values)

    m = SpaceTimeField(small_grid, z.values[..., 0], Staggering.CELL_TIME)
    assert isinstance(read_field(write_field(tmp_path / "m.mfc", m)), SpaceTimeField)

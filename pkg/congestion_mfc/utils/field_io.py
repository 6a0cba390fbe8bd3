from __future__ import annotations

from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from congestion_mfc.exception.custom_exception import FieldFormatError
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.src.grid.torus import (
    SpaceTimeField,
    Staggering,
    TorusGrid,
    VectorField,
)

MAGIC = b"MFCFIELD"
VERSION = 1

# Fixed-size little-endian header, followed by a row-major float64 payload
HEADER_DTYPE = np.dtype(
    [
        ("magic", "S8"),
        ("version", "<u4"),
        ("d", "<u4"),
        ("nx", "<u4"),
        ("nt", "<u4"),
        ("T", "<f8"),
        ("staggering", "S16"),
        ("components", "<u4"),
        ("vector", "<u4"),
    ]
)

PathLike = Union[str, Path]


def _payload_shape(
    grid: TorusGrid, staggering: Staggering, components: int, vector: bool
) -> Tuple[int, ...]:
    # vector fields keep their component axis even when d = 1
    shape = grid.shape(staggering)
    return shape + (components,) if vector else shape


def write_array(
    path: PathLike,
    grid: TorusGrid,
    values: np.ndarray,
    staggering: Staggering,
    components: int = 1,
    vector: bool = False,
) -> Path:
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    expected = _payload_shape(grid, staggering, components, vector)
    if values.shape != expected:
        raise FieldFormatError(
            f"Refusing to write field | shape={values.shape} | expected={expected}"
        )

    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["d"] = grid.d
    header["nx"] = grid.nx
    header["nt"] = grid.nt
    header["T"] = grid.T
    header["staggering"] = staggering.value.encode("ascii")
    header["components"] = components
    header["vector"] = int(vector)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(values).astype("<f8").tobytes())
    log.debug("Field written | path=%s | staggering=%s", path, staggering.value)
    return path


def read_array(path: PathLike) -> Tuple[TorusGrid, np.ndarray, Staggering, bool]:
    path = Path(path)
    if not path.exists():
        raise FieldFormatError(f"Field file not found | path={path}")
    raw = path.read_bytes()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise FieldFormatError(f"Truncated field header | path={path}")

    header = np.frombuffer(raw[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != MAGIC:
        raise FieldFormatError(f"Bad magic in field file | path={path}")
    if int(header["version"]) != VERSION:
        raise FieldFormatError(
            f"Unsupported field file version | path={path} | version={int(header['version'])}"
        )
    try:
        grid = TorusGrid(
            d=int(header["d"]), nx=int(header["nx"]), nt=int(header["nt"]), T=float(header["T"])
        )
        staggering = Staggering(bytes(header["staggering"]).decode("ascii").rstrip("\x00"))
    except ValueError as e:
        raise FieldFormatError(f"Invalid field header | path={path}", e) from e

    components = int(header["components"])
    vector = bool(header["vector"])
    if vector and components != grid.d:
        raise FieldFormatError(
            f"Vector field components do not match d | path={path} | components={components} | d={grid.d}"
        )
    shape = _payload_shape(grid, staggering, components, vector)
    payload = np.frombuffer(raw[HEADER_DTYPE.itemsize :], dtype="<f8")
    if payload.size != int(np.prod(shape)):
        raise FieldFormatError(
            f"Payload size does not match header | path={path} | size={payload.size} "
            f"| expected={int(np.prod(shape))}"
        )
    return grid, payload.reshape(shape).astype(np.float64), staggering, vector


def write_field(path: PathLike, field: Union[SpaceTimeField, VectorField]) -> Path:
    if isinstance(field, VectorField):
        return write_array(
            path, field.grid, field.values, Staggering.CELL_TIME, field.grid.d, vector=True
        )
    return write_array(path, field.grid, field.values, field.staggering)


def read_field(path: PathLike) -> Union[SpaceTimeField, VectorField]:
    grid, values, staggering, vector = read_array(path)
    if staggering == Staggering.SPATIAL:
        raise FieldFormatError(f"Expected a space-time field, found a spatial slice | path={path}")
    if vector:
        return VectorField(grid, values)
    return SpaceTimeField(grid, values, staggering)


def write_spatial_slice(path: PathLike, grid: TorusGrid, values: np.ndarray) -> Path:
    return write_array(path, grid, values, Staggering.SPATIAL)


def read_spatial_slice(path: PathLike) -> np.ndarray:
    _, values, staggering, vector = read_array(path)
    if staggering != Staggering.SPATIAL or vector:
        raise FieldFormatError(f"Expected a scalar spatial slice | path={path}")
    return values


def field_to_frame(field: Union[SpaceTimeField, VectorField]) -> pd.DataFrame:
    """Long-format table: t, x0 [, x1], value columns."""
    grid = field.grid
    if isinstance(field, VectorField):
        times = grid.time_cells()
        columns = [field.values[..., i] for i in range(grid.d)]
        names = [f"value{i}" for i in range(grid.d)]
    else:
        times = grid.time_nodes() if field.staggering == Staggering.NODE_TIME else grid.time_cells()
        columns = [field.values]
        names = ["value"]

    coords = grid.node_coordinates().reshape(-1, grid.d)
    n_space = coords.shape[0]
    data = {"t": np.repeat(times, n_space)}
    for i in range(grid.d):
        data[f"x{i}"] = np.tile(coords[:, i], len(times))
    for name, col in zip(names, columns):
        data[name] = col.reshape(-1)
    return pd.DataFrame(data)


def export_csv(path: PathLike, field: Union[SpaceTimeField, VectorField]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field_to_frame(field).to_csv(path, index=False)
    log.debug("Field CSV exported | path=%s", path)
    return path

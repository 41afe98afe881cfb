from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from gaugefuse_core.errors import ConfigError, DataFormatError, GridRangeError

DEFAULT_SNAP_TOLERANCE_DEG = 0.05


@dataclass(frozen=True)
class GridSpec:
    """Rectangular region of interest split into ``n_rows`` x ``n_cols`` cells.

    Row 0 is the northernmost band and column 0 the westernmost one. Cells are
    half-open: closed on their north and west edges.
    """

    lat_north: float
    lat_south: float
    lon_east: float
    lon_west: float
    n_rows: int
    n_cols: int

    def __post_init__(self) -> None:
        if not self.lat_north > self.lat_south:
            raise ConfigError(
                f"invalid grid: lat_north ({self.lat_north}) must exceed lat_south ({self.lat_south})"
            )
        if not self.lon_east > self.lon_west:
            raise ConfigError(
                f"invalid grid: lon_east ({self.lon_east}) must exceed lon_west ({self.lon_west})"
            )
        if self.n_rows < 1 or self.n_cols < 1:
            raise ConfigError(
                f"invalid grid: need at least one row and column, got {self.n_rows}x{self.n_cols}"
            )

    @property
    def cell_height(self) -> float:
        return (self.lat_north - self.lat_south) / self.n_rows

    @property
    def cell_width(self) -> float:
        return (self.lon_east - self.lon_west) / self.n_cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def node_lat(self, row: int) -> float:
        if row == self.n_rows:
            return self.lat_south
        return self.lat_north - row * self.cell_height

    def node_lon(self, col: int) -> float:
        if col == self.n_cols:
            return self.lon_east
        return self.lon_west + col * self.cell_width

    def to_dict(self) -> dict[str, float | int]:
        return {
            "lat_north": self.lat_north,
            "lat_south": self.lat_south,
            "lon_east": self.lon_east,
            "lon_west": self.lon_west,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
        }


@dataclass(frozen=True, order=True)
class CellIndex:
    row: int
    col: int


@dataclass(frozen=True)
class GridNode:
    lat: float
    lon: float


def iter_cells(spec: GridSpec) -> Iterator[CellIndex]:
    for row in range(spec.n_rows):
        for col in range(spec.n_cols):
            yield CellIndex(row, col)


def cell_of(lat: float, lon: float, spec: GridSpec) -> CellIndex | None:
    if not (spec.lat_south < lat <= spec.lat_north):
        return None
    if not (spec.lon_west <= lon < spec.lon_east):
        return None
    row = math.floor((spec.lat_north - lat) / spec.cell_height)
    col = math.floor((lon - spec.lon_west) / spec.cell_width)
    # float rounding can push a point hugging the south/east edge one step too far
    row = min(row, spec.n_rows - 1)
    col = min(col, spec.n_cols - 1)
    return CellIndex(row, col)


def _check_cell(cell: CellIndex, spec: GridSpec) -> None:
    if not (0 <= cell.row < spec.n_rows and 0 <= cell.col < spec.n_cols):
        raise GridRangeError(
            f"cell ({cell.row}, {cell.col}) is out of range for a {spec.n_rows}x{spec.n_cols} grid"
        )


def cell_corners(cell: CellIndex, spec: GridSpec) -> tuple[GridNode, GridNode, GridNode, GridNode]:
    """Return the NW, NE, SW and SE nodes bounding ``cell``."""
    _check_cell(cell, spec)
    north = spec.node_lat(cell.row)
    south = spec.node_lat(cell.row + 1)
    west = spec.node_lon(cell.col)
    east = spec.node_lon(cell.col + 1)
    return (
        GridNode(north, west),
        GridNode(north, east),
        GridNode(south, west),
        GridNode(south, east),
    )


def cell_center(cell: CellIndex, spec: GridSpec) -> GridNode:
    _check_cell(cell, spec)
    lat = spec.lat_north - (cell.row + 0.5) * spec.cell_height
    lon = spec.lon_west + (cell.col + 0.5) * spec.cell_width
    return GridNode(lat, lon)


@dataclass(frozen=True)
class Lattice:
    """Regular node lattice of a background field."""

    lat0: float
    lon0: float
    dlat: float
    dlon: float
    nlat: int
    nlon: int

    def lat_at(self, index: int) -> float:
        return self.lat0 + index * self.dlat

    def lon_at(self, index: int) -> float:
        return self.lon0 + index * self.dlon


def _snap(value: float, origin: float, step: float, count: int, tolerance: float) -> int | None:
    index = round((value - origin) / step)
    if not 0 <= index < count:
        return None
    if abs(origin + index * step - value) > tolerance:
        return None
    return index


@dataclass(frozen=True)
class CornerLattice:
    """Lattice indices of every cell-corner node of a grid spec.

    ``lat_index[r]`` is the lattice row of node row ``r`` (0..n_rows) and
    ``lon_index[c]`` the lattice column of node column ``c`` (0..n_cols).
    """

    spec: GridSpec
    lat_index: np.ndarray
    lon_index: np.ndarray

    @classmethod
    def build(
        cls,
        spec: GridSpec,
        lattice: Lattice,
        tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
    ) -> CornerLattice:
        lat_index = []
        for row in range(spec.n_rows + 1):
            lat = spec.node_lat(row)
            found = _snap(lat, lattice.lat0, lattice.dlat, lattice.nlat, tolerance)
            if found is None:
                raise DataFormatError(
                    f"cannot snap corner latitude {lat:.4f} to the background lattice",
                    hint=f"no lattice node within {tolerance} degrees",
                )
            lat_index.append(found)
        lon_index = []
        for col in range(spec.n_cols + 1):
            lon = spec.node_lon(col)
            found = _snap(lon, lattice.lon0, lattice.dlon, lattice.nlon, tolerance)
            if found is None:
                raise DataFormatError(
                    f"cannot snap corner longitude {lon:.4f} to the background lattice",
                    hint=f"no lattice node within {tolerance} degrees",
                )
            lon_index.append(found)
        return cls(
            spec=spec,
            lat_index=np.asarray(lat_index, dtype=np.intp),
            lon_index=np.asarray(lon_index, dtype=np.intp),
        )

    def node_values(self, field: np.ndarray) -> np.ndarray:
        """Sample a ``(..., nlat, nlon)`` field at the corner nodes -> ``(..., n_rows+1, n_cols+1)``."""
        return field[..., self.lat_index[:, None], self.lon_index[None, :]]

    def corner_max(self, field: np.ndarray) -> np.ndarray:
        nodes = self.node_values(field)
        return np.maximum.reduce(
            [
                nodes[..., :-1, :-1],
                nodes[..., :-1, 1:],
                nodes[..., 1:, :-1],
                nodes[..., 1:, 1:],
            ]
        )

    def northwest(self, field: np.ndarray) -> np.ndarray:
        return self.node_values(field)[..., :-1, :-1]

"""BEV grid geometry: voxelization, cell sets, motion fields, unit conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned crop range and voxel sizes of the BEV grid.

    Row index runs along X, column index along Y, layer index along Z.
    Each voxel covers the half-open interval [min + i*cell, min + (i+1)*cell).
    """

    x_min: float = -32.0
    x_max: float = 32.0
    y_min: float = -32.0
    y_max: float = 32.0
    z_min: float = -3.0
    z_max: float = 2.0
    cell_x: float = 0.25
    cell_y: float = 0.25
    cell_z: float = 0.4

    def __post_init__(self):
        if min(self.cell_x, self.cell_y, self.cell_z) <= 0:
            raise ValueError("cell sizes must be strictly positive")
        for n, name in ((self.rows, "X"), (self.cols, "Y"), (self.layers, "Z")):
            if n < 1:
                raise ValueError(f"grid has no voxels along {name}")

    @property
    def rows(self) -> int:
        return int(round((self.x_max - self.x_min) / self.cell_x))

    @property
    def cols(self) -> int:
        return int(round((self.y_max - self.y_min) / self.cell_y))

    @property
    def layers(self) -> int:
        return int(round((self.z_max - self.z_min) / self.cell_z))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.rows, self.cols, self.layers)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "z_min": self.z_min, "z_max": self.z_max,
            "cell_x": self.cell_x, "cell_y": self.cell_y, "cell_z": self.cell_z,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class PointCloud:
    """Points in meters, already synchronized to the current frame's coordinates."""

    points: np.ndarray  # (N, 3) float
    timestamp_index: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)


@dataclass
class BevMap:
    """Binary occupancy grid: 1 where a voxel holds at least one point."""

    occupancy: np.ndarray  # (H, W, C) uint8 in {0, 1}
    frame_index: int = 0

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        if occ.ndim != 3:
            raise ValueError("occupancy must be (H, W, C)")
        if occ.dtype != np.uint8:
            occ = occ.astype(np.uint8)
        if occ.max(initial=0) > 1:
            raise ValueError("occupancy values must be 0 or 1")
        self.occupancy = occ

    @property
    def pillar_mask(self) -> np.ndarray:
        """(H, W) bool, True where the pillar column has any occupied voxel."""
        return self.occupancy.any(axis=2)


@dataclass
class BevSequence:
    """Ordered frames over one grid; the last frame is the current sweep."""

    frames: list[BevMap]
    spec: GridSpec
    horizon_seconds: float = 1.0

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("sequence needs at least one frame")
        shape = self.spec.shape
        for f in self.frames:
            if f.occupancy.shape != shape:
                raise ValueError("all frames must match the grid shape")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def current(self) -> BevMap:
        return self.frames[-1]


@dataclass
class MotionField:
    """Per-cell 2D displacement over the prediction horizon, in cell units."""

    displacement: np.ndarray  # (H, W, 2) float
    validity: np.ndarray      # (H, W) bool

    def __post_init__(self):
        disp = np.asarray(self.displacement, dtype=np.float64)
        valid = np.asarray(self.validity, dtype=bool)
        if disp.ndim != 3 or disp.shape[2] != 2:
            raise ValueError("displacement must be (H, W, 2)")
        if valid.shape != disp.shape[:2]:
            raise ValueError("validity mask must be (H, W)")
        self.displacement = disp
        self.validity = valid


@dataclass
class CellSet:
    """Integer (row, col) coordinates of non-empty BEV cells of one frame."""

    coords: np.ndarray  # (N, 2) int
    source_frame: int = 0

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        self.coords = c

    def __len__(self) -> int:
        return len(self.coords)


def voxelize(cloud: PointCloud, spec: GridSpec) -> BevMap:
    """Bin points into the occupancy grid; points outside the crop are dropped.

    Half-open binning: a point exactly on the maximum edge of the crop falls
    outside and is dropped.
    """
    occ = np.zeros(spec.shape, dtype=np.uint8)
    pts = cloud.points
    if len(pts):
        mins = np.array([spec.x_min, spec.y_min, spec.z_min])
        cells = np.array([spec.cell_x, spec.cell_y, spec.cell_z])
        idx = np.floor((pts - mins) / cells).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(spec.shape)), axis=1)
        idx = idx[inside]
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return BevMap(occ, frame_index=cloud.timestamp_index)


def nonempty_cells(bev: BevMap) -> CellSet:
    """Pillar columns with at least one occupied voxel, in row-major order."""
    coords = np.argwhere(bev.pillar_mask)
    return CellSet(coords, source_frame=bev.frame_index)


def warp_cells(cells: CellSet, motion: MotionField) -> np.ndarray:
    """Add each cell's displacement to its coordinates.

    Returns real-valued (N, 2) coordinates; they may leave the grid.
    """
    rows, cols = cells.coords[:, 0], cells.coords[:, 1]
    if not np.all(motion.validity[rows, cols]):
        raise ValueError("unlabeled cell: motion invalid at a queried cell")
    return cells.coords.astype(np.float64) + motion.displacement[rows, cols]


def meters_to_cells(v, spec: GridSpec) -> np.ndarray:
    """Convert an (x, y) displacement in meters to cell units."""
    return np.asarray(v, dtype=np.float64) / np.array([spec.cell_x, spec.cell_y])


def cells_to_meters(v, spec: GridSpec) -> np.ndarray:
    """Inverse of meters_to_cells."""
    return np.asarray(v, dtype=np.float64) * np.array([spec.cell_x, spec.cell_y])


def cell_height_extents(bev: BevMap, spec: GridSpec, cells: CellSet) -> tuple[np.ndarray, np.ndarray]:
    """Min and max occupied-voxel center heights (meters) for each given cell."""
    rows, cols = cells.coords[:, 0], cells.coords[:, 1]
    pillars = bev.occupancy[rows, cols]  # (N, C)
    if not np.all(pillars.any(axis=1)):
        raise ValueError("height query on an empty pillar")
    layers = np.arange(spec.layers)
    centers = spec.z_min + (layers + 0.5) * spec.cell_z
    lo_idx = np.argmax(pillars, axis=1)
    hi_idx = spec.layers - 1 - np.argmax(pillars[:, ::-1], axis=1)
    return centers[lo_idx], centers[hi_idx]

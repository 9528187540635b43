"""Synthetic rigid-body scenes with exact ground-truth motion, plus metrics.

Boxes translate at constant velocity over a flat ground plane; every frame is
a voxelized point-cloud snapshot, so the true per-cell displacement over the
prediction horizon is known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .grid import (BevMap, BevSequence, CellSet, GridSpec, MotionField,
                   PointCloud, nonempty_cells, voxelize)

SMALL_GRID = GridSpec(x_min=-10.0, x_max=10.0, y_min=-10.0, y_max=10.0,
                      z_min=-1.0, z_max=1.0, cell_x=0.5, cell_y=0.5, cell_z=0.5)

SLOW_SPEED_LIMIT = 5.0  # m/s boundary between the slow and fast buckets
STATIC_SPEED_LIMIT = 0.2  # below this a cell counts as static


@dataclass
class SceneConfig:
    grid: GridSpec = field(default_factory=lambda: SMALL_GRID)
    n_objects: int = 3
    static_fraction: float = 0.3
    slow_fraction: float = 0.4
    fast_fraction: float = 0.3
    footprint_cells: tuple[float, float] = (2.0, 4.0)
    object_z_range: tuple[float, float] = (-0.4, 0.6)
    ground_z: float = -0.8
    ground_density: float = 3.0   # points per square meter
    object_density: float = 30.0
    noise_sigma: float = 0.02     # meters
    sweep_dt: float = 0.15
    t_frames: int = 5
    horizon_seconds: float = 1.0
    seed: int = 0

    def __post_init__(self):
        total = self.static_fraction + self.slow_fraction + self.fast_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError("speed fractions must sum to 1")
        if self.t_frames < 1:
            raise ValueError("need at least one frame")


@dataclass
class SceneObject:
    velocity_mps: np.ndarray     # (2,)
    current_cells: CellSet
    future_cells: CellSet

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity_mps))


@dataclass
class SynthScene:
    seq: BevSequence
    future: BevMap
    gt: MotionField
    ground_mask: np.ndarray      # (H, W) bool
    objects: list[SceneObject]


@dataclass
class BucketStats:
    mean: float
    median: float
    count: int


@dataclass
class EvalReport:
    """Per speed-bucket mean/median L2 error in meters over the horizon."""

    static: BucketStats | None
    slow: BucketStats | None
    fast: BucketStats | None

    def as_dict(self) -> dict:
        out = {}
        for name in ("static", "slow", "fast"):
            b = getattr(self, name)
            out[name] = None if b is None else {
                "mean": b.mean, "median": b.median, "count": b.count}
        return out


def _sample_velocity(rng: np.random.Generator, cfg: SceneConfig) -> np.ndarray:
    bucket = rng.choice(3, p=[cfg.static_fraction, cfg.slow_fraction, cfg.fast_fraction])
    if bucket == 0:
        speed = 0.0
    elif bucket == 1:
        speed = rng.uniform(0.5, 4.5)
    else:
        speed = rng.uniform(5.0, 6.5)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return speed * np.array([np.cos(angle), np.sin(angle)])


def generate(cfg: SceneConfig) -> SynthScene:
    """Build one scene: T past/current frames plus the horizon-future frame."""
    rng = np.random.default_rng(cfg.seed)
    spec = cfg.grid
    t = cfg.t_frames
    frame_times = [-(t - 1 - i) * cfg.sweep_dt for i in range(t)]
    all_times = frame_times + [cfg.horizon_seconds]

    # object base point sets at the current frame (time 0)
    objects = []
    margin = 0.5
    for _ in range(cfg.n_objects):
        vel = _sample_velocity(rng, cfg)
        lx = rng.uniform(*cfg.footprint_cells) * spec.cell_x
        ly = rng.uniform(*cfg.footprint_cells) * spec.cell_y
        placed = False
        for _ in range(100):
            cx = rng.uniform(spec.x_min + margin + lx / 2, spec.x_max - margin - lx / 2)
            cy = rng.uniform(spec.y_min + margin + ly / 2, spec.y_max - margin - ly / 2)
            ok = True
            for tt in (min(all_times), max(all_times)):
                px, py = cx + vel[0] * tt, cy + vel[1] * tt
                if not (spec.x_min + margin <= px - lx / 2 and px + lx / 2 <= spec.x_max - margin
                        and spec.y_min + margin <= py - ly / 2 and py + ly / 2 <= spec.y_max - margin):
                    ok = False
            if ok:
                placed = True
                break
        if not placed:
            raise RuntimeError("could not place object inside the grid; shrink speeds or enlarge the grid")
        n_pts = max(10, int(cfg.object_density * lx * ly))
        base = np.column_stack([
            rng.uniform(cx - lx / 2, cx + lx / 2, n_pts),
            rng.uniform(cy - ly / 2, cy + ly / 2, n_pts),
            rng.uniform(*cfg.object_z_range, size=n_pts),
        ])
        objects.append((vel, base))

    area = (spec.x_max - spec.x_min) * (spec.y_max - spec.y_min)
    n_ground = max(4, int(cfg.ground_density * area))
    ground_base = np.column_stack([
        rng.uniform(spec.x_min, spec.x_max, n_ground),
        rng.uniform(spec.y_min, spec.y_max, n_ground),
        np.full(n_ground, cfg.ground_z),
    ])

    def snapshot(time: float, index: int) -> tuple[BevMap, list[np.ndarray], np.ndarray]:
        """Voxelized frame plus the per-object and ground points used."""
        obj_pts = []
        for vel, base in objects:
            shift = np.array([vel[0] * time, vel[1] * time, 0.0])
            pts = base + shift + rng.normal(0.0, cfg.noise_sigma, base.shape)
            obj_pts.append(pts)
        gpts = ground_base + rng.normal(0.0, cfg.noise_sigma, ground_base.shape)
        merged = np.vstack(obj_pts + [gpts]) if obj_pts else gpts
        return voxelize(PointCloud(merged, index), spec), obj_pts, gpts

    frames = []
    current_obj_pts: list[np.ndarray] = []
    current_ground: np.ndarray | None = None
    for i, time in enumerate(frame_times):
        bev, obj_pts, gpts = snapshot(time, i)
        frames.append(bev)
        if i == t - 1:
            current_obj_pts, current_ground = obj_pts, gpts
    future, future_obj_pts, _ = snapshot(cfg.horizon_seconds, t)

    seq = BevSequence(frames, spec, cfg.horizon_seconds)
    current = seq.current

    disp = np.zeros((spec.rows, spec.cols, 2))
    object_mask = np.zeros((spec.rows, spec.cols), dtype=bool)
    scene_objects = []
    cell_scale = np.array([spec.cell_x, spec.cell_y])
    for (vel, _), pts_now, pts_future in zip(objects, current_obj_pts, future_obj_pts):
        mask_now = voxelize(PointCloud(pts_now), spec).pillar_mask
        mask_future = voxelize(PointCloud(pts_future), spec).pillar_mask
        disp[mask_now] = vel * cfg.horizon_seconds / cell_scale
        object_mask |= mask_now
        scene_objects.append(SceneObject(
            np.asarray(vel, dtype=np.float64),
            CellSet(np.argwhere(mask_now), t - 1),
            CellSet(np.argwhere(mask_future), t),
        ))

    ground_mask = voxelize(PointCloud(current_ground), spec).pillar_mask & ~object_mask
    gt = MotionField(disp, current.pillar_mask)
    return SynthScene(seq, future, gt, ground_mask, scene_objects)


def evaluate(pred: MotionField, gt: MotionField, spec: GridSpec,
             horizon_seconds: float = 1.0,
             static_limit: float = STATIC_SPEED_LIMIT) -> EvalReport:
    """Speed-bucketed mean/median L2 error in meters over the horizon.

    Cells bucket by ground-truth speed: static below ``static_limit``, fast at
    or above 5 m/s, slow in between. Empty buckets report as absent. Medians
    of even-count buckets are the mean of the two central values.
    """
    if pred.displacement.shape != gt.displacement.shape:
        raise ValueError("prediction and ground truth shapes differ")
    valid = gt.validity
    scale = np.array([spec.cell_x, spec.cell_y])
    gt_m = gt.displacement[valid] * scale
    pred_m = pred.displacement[valid] * scale
    speed = np.sqrt((gt_m ** 2).sum(axis=1)) / horizon_seconds
    err = np.sqrt(((pred_m - gt_m) ** 2).sum(axis=1))

    def bucket(mask: np.ndarray) -> BucketStats | None:
        if not mask.any():
            return None
        e = err[mask]
        return BucketStats(float(e.mean()), float(np.median(e)), int(mask.sum()))

    return EvalReport(
        static=bucket(speed < static_limit),
        slow=bucket((speed >= static_limit) & (speed < SLOW_SPEED_LIMIT)),
        fast=bucket(speed >= SLOW_SPEED_LIMIT),
    )


def save_scene(path, scene: SynthScene) -> None:
    spec = scene.seq.spec
    write_container(
        path,
        arrays={
            "frames": np.stack([f.occupancy for f in scene.seq.frames]),
            "future": scene.future.occupancy,
            "gt_displacement": scene.gt.displacement.astype(np.float32),
            "gt_validity": scene.gt.validity.astype(np.uint8),
            "ground_mask": scene.ground_mask.astype(np.uint8),
        },
        units={"frames": "occupancy", "future": "occupancy",
               "gt_displacement": "cells", "gt_validity": "bool",
               "ground_mask": "bool"},
        horizon_seconds=scene.seq.horizon_seconds,
        meta={"grid": spec.to_dict(), "kind": "scene"},
    )


def load_scene(path) -> SynthScene:
    arrays, header = read_container(path)
    spec = GridSpec.from_dict(header["meta"]["grid"])
    horizon = header["arrays"][0]["horizon_seconds"]
    frames = [BevMap(f, i) for i, f in enumerate(arrays["frames"])]
    seq = BevSequence(frames, spec, float(horizon))
    gt = MotionField(arrays["gt_displacement"].astype(np.float64),
                     arrays["gt_validity"].astype(bool))
    return SynthScene(seq, BevMap(arrays["future"], len(frames)), gt,
                      arrays["ground_mask"].astype(bool), [])

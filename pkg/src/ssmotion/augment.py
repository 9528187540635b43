"""Weak and strong augmentations: flips, temporal sub-sampling, BEVMix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (BevMap, BevSequence, CellSet, GridSpec, MotionField,
                   cell_height_extents, nonempty_cells)

GROUND_TAU = 0.15  # meters; plane inlier threshold


@dataclass
class MixPair:
    """Foreground/background samples sharing one grid and sequence length."""

    foreground: tuple[BevSequence, MotionField]
    background: tuple[BevSequence, MotionField]

    def __post_init__(self):
        fseq, bseq = self.foreground[0], self.background[0]
        if fseq.spec != bseq.spec or len(fseq) != len(bseq):
            raise ValueError("mix pair must share grid spec and sequence length")


def flip_map(bev: BevMap, axis: str) -> BevMap:
    if axis == "none":
        return BevMap(bev.occupancy.copy(), bev.frame_index)
    ax = {"x": 0, "y": 1}[axis]
    return BevMap(np.flip(bev.occupancy, axis=ax).copy(), bev.frame_index)


def random_flip(seq: BevSequence, motion: MotionField, axis: str = "random",
                seed: int | None = None) -> tuple[BevSequence, MotionField]:
    """Mirror occupancy and motion along a grid axis.

    ``axis='x'`` mirrors rows and negates the row displacement component;
    ``'y'`` does the same for columns; ``'none'`` is the identity;
    ``'random'`` picks one of the three with the given seed.
    """
    if axis == "random":
        axis = np.random.default_rng(seed).choice(["none", "x", "y"])
    if axis not in ("none", "x", "y"):
        raise ValueError(f"unknown flip axis {axis!r}")
    frames = [flip_map(f, axis) for f in seq.frames]
    disp = motion.displacement.copy()
    valid = motion.validity.copy()
    if axis != "none":
        ax = {"x": 0, "y": 1}[axis]
        disp = np.flip(disp, axis=ax).copy()
        disp[:, :, ax] = -disp[:, :, ax]
        valid = np.flip(valid, axis=ax).copy()
    return (BevSequence(frames, seq.spec, seq.horizon_seconds),
            MotionField(disp, valid))


def temporal_sample(seq: BevSequence, motion: MotionField) -> tuple[BevSequence, MotionField]:
    """Stride-2 temporal sub-sampling producing a double-speed sample.

    Keeps frames 1, 3, ..., T, front-pads with copies of the first frame to
    restore the original length, and doubles every displacement. Requires an
    odd T so the final (current) frame survives the stride.
    """
    t = len(seq)
    if t < 3 or t % 2 == 0:
        raise ValueError("stride-2 sampling misses current frame: T must be odd and >= 3")
    sampled = seq.frames[::2]
    pad = [BevMap(seq.frames[0].occupancy.copy(), seq.frames[0].frame_index)
           for _ in range(t - len(sampled))]
    frames = pad + [BevMap(f.occupancy.copy(), f.frame_index) for f in sampled]
    return (BevSequence(frames, seq.spec, seq.horizon_seconds),
            MotionField(motion.displacement * 2.0, motion.validity.copy()))


def fit_ground_plane(points: np.ndarray, tau: float = GROUND_TAU,
                     n_trials: int = 64, seed: int = 0) -> np.ndarray | None:
    """Robust consensus plane z = a*x + b*y + c over candidate points.

    Random minimal samples score by inlier count within ``tau``; the best
    model is refit by least squares on its inliers. Returns None for fewer
    than 3 candidates.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < 3:
        return None
    rng = np.random.default_rng(seed)
    xy1 = np.column_stack([points[:, 0], points[:, 1], np.ones(len(points))])
    z = points[:, 2]
    best = None
    best_inliers = -1
    for _ in range(n_trials):
        pick = rng.choice(len(points), size=3, replace=False)
        try:
            coef = np.linalg.solve(xy1[pick], z[pick])
        except np.linalg.LinAlgError:
            continue
        inliers = int(np.sum(np.abs(xy1 @ coef - z) <= tau))
        if inliers > best_inliers:
            best_inliers = inliers
            best = coef
    if best is None:
        return None
    mask = np.abs(xy1 @ best - z) <= tau
    if mask.sum() >= 3:
        best, *_ = np.linalg.lstsq(xy1[mask], z[mask], rcond=None)
    return best


def ground_remove(cells: CellSet, min_heights: np.ndarray,
                  max_heights: np.ndarray | None = None,
                  tau: float = GROUND_TAU, seed: int = 0) -> tuple[CellSet, np.ndarray, bool]:
    """Drop cells whose occupied extent sits on the fitted ground plane.

    Returns (kept cells, removed mask over the input cells, fitted flag). A
    degenerate input (< 3 cells) is a no-op with ``fitted=False``.
    """
    min_heights = np.asarray(min_heights, dtype=np.float64)
    if max_heights is None:
        max_heights = min_heights
    max_heights = np.asarray(max_heights, dtype=np.float64)
    if len(min_heights) != len(cells) or len(max_heights) != len(cells):
        raise ValueError("height arrays must align with the cell set")
    coords = cells.coords.astype(np.float64)
    plane = fit_ground_plane(
        np.column_stack([coords, min_heights]), tau=tau, seed=seed)
    if plane is None:
        return cells, np.zeros(len(cells), dtype=bool), False
    plane_z = np.column_stack([coords, np.ones(len(cells))]) @ plane
    removed = (np.abs(min_heights - plane_z) <= tau) & (np.abs(max_heights - plane_z) <= tau)
    kept = CellSet(cells.coords[~removed], cells.source_frame)
    return kept, removed, True


def ground_remove_map(bev: BevMap, spec: GridSpec, tau: float = GROUND_TAU,
                      seed: int = 0) -> CellSet:
    """Non-empty cells of a BEV map with ground-plane cells removed."""
    cells = nonempty_cells(bev)
    if len(cells) == 0:
        return cells
    lo, hi = cell_height_extents(bev, spec, cells)
    kept, _, _ = ground_remove(cells, lo, hi, tau=tau, seed=seed)
    return kept


def bevmix(pair: MixPair, seed: int = 0, tau: float = GROUND_TAU) -> tuple[BevSequence, MotionField]:
    """Overlay the ground-removed foreground onto the background sequence.

    The mix starts as the background. For every frame t, each ground-removed
    foreground cell's whole pillar overwrites the background pillar at that
    cell; at the final frame only, the label map is overwritten the same way.
    Label validity is recomputed from the mixed current frame so every
    non-empty cell carries whichever label (foreground wins) applies.
    """
    (fseq, fmot), (bseq, bmot) = pair.foreground, pair.background
    spec = bseq.spec
    mix_frames = [BevMap(f.occupancy.copy(), f.frame_index) for f in bseq.frames]
    mix_disp = bmot.displacement.copy()
    mix_valid = bmot.validity.copy()
    t_last = len(fseq) - 1
    for t, fg_frame in enumerate(fseq.frames):
        fg_cells = ground_remove_map(fg_frame, spec, tau=tau, seed=seed)
        if len(fg_cells) == 0:
            continue
        r, c = fg_cells.coords[:, 0], fg_cells.coords[:, 1]
        mix_frames[t].occupancy[r, c] = fg_frame.occupancy[r, c]
        if t == t_last:
            mix_disp[r, c] = fmot.displacement[r, c]
            mix_valid[r, c] = fmot.validity[r, c]
    mix_valid &= mix_frames[-1].occupancy.any(axis=2)
    return (BevSequence(mix_frames, spec, bseq.horizon_seconds),
            MotionField(mix_disp, mix_valid))

"""Pseudo-label reliability scoring, selection, and re-generation.

The pipeline warps current-frame cells by the predicted pseudo motion, matches
them against next-frame cells with entropic optimal transport, scores each
pseudo label by its distance to the transport-derived auxiliary label, keeps
labels scoring below the threshold, and rebuilds the rest from nearby kept
labels under a local-consistency gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transport
from .grid import BevMap, CellSet, MotionField, nonempty_cells, warp_cells

PROV_SELECTED = 0
PROV_REGENERATED = 1


@dataclass
class ReliabilityReport:
    """Split of scored cells into reliable (< mu) and unreliable (>= mu)."""

    delta_m: np.ndarray      # (N,) nonnegative, cell units
    reliable_idx: np.ndarray
    unreliable_idx: np.ndarray
    mu: float


@dataclass
class RegenConfig:
    k: int = 5
    beta: float = 10.0
    gamma: float = 0.6
    theta_w: float = 5.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.beta <= 0 or self.theta_w <= 0:
            raise ValueError("beta and theta_w must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass
class RefineConfig:
    """Hyperparameters of the full select-and-regenerate pipeline."""

    mu: float = 1.0
    theta_c: float = transport.DEFAULT_THETA_C
    epsilon: float = transport.DEFAULT_EPSILON
    max_iters: int = transport.DEFAULT_MAX_ITERS
    marginal_tol: float = transport.DEFAULT_MARGINAL_TOL
    regen: RegenConfig = field(default_factory=RegenConfig)
    cell_cap: int = 4096  # above this, OT is solved on spatial tiles


@dataclass
class RefinedLabels:
    """Surviving cell indices with their final pseudo-motion vectors."""

    kept_idx: np.ndarray    # indices into the scored cell ordering
    motion: np.ndarray      # (len(kept_idx), 2) cell units
    provenance: np.ndarray  # PROV_SELECTED or PROV_REGENERATED per entry

    def __len__(self) -> int:
        return len(self.kept_idx)


def score_reliability(pseudo: np.ndarray, auxiliary: np.ndarray) -> np.ndarray:
    """Euclidean distance between each pseudo label and its auxiliary label."""
    pseudo = np.asarray(pseudo, dtype=np.float64)
    auxiliary = np.asarray(auxiliary, dtype=np.float64)
    if pseudo.shape != auxiliary.shape:
        raise ValueError("pseudo and auxiliary label arrays differ in shape")
    d = pseudo - auxiliary
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])


def select(delta_m: np.ndarray, mu: float) -> ReliabilityReport:
    """Strict split: reliable iff delta_m < mu."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    delta_m = np.asarray(delta_m, dtype=np.float64)
    idx = np.arange(len(delta_m))
    reliable = delta_m < mu
    return ReliabilityReport(delta_m, idx[reliable], idx[~reliable], mu)


class _BucketIndex:
    """Uniform-grid spatial hash over 2D points, bucket side = query radius."""

    def __init__(self, points: np.ndarray, radius: float):
        self.points = points
        self.radius = radius
        self.buckets: dict[tuple[int, int], list[int]] = {}
        keys = np.floor(points / radius).astype(np.int64)
        for i, (kx, ky) in enumerate(keys):
            self.buckets.setdefault((int(kx), int(ky)), []).append(i)

    def query(self, point: np.ndarray) -> np.ndarray:
        """Indices of all points within one bucket ring of the query point.

        Guaranteed to contain every point closer than the bucket radius.
        """
        kx, ky = (int(v) for v in np.floor(point / self.radius))
        out: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                out.extend(self.buckets.get((kx + dx, ky + dy), ()))
        return np.array(sorted(out), dtype=np.int64)


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    # Identical values short-circuit to that value, keeping weighted means of
    # uniform neighborhoods exact. Accumulation is a plain left-to-right loop
    # (K is tiny) so results are reproducible across array layouts.
    if np.all(values == values[0]):
        return float(values[0])
    num = 0.0
    den = 0.0
    for v, w in zip(values.tolist(), weights.tolist()):
        num += v * w
        den += w
    return num / den


def _relative_difference(neighbor_labels: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """abs((M_K - M_mean) / M_mean) with a defined zero-mean convention.

    Where a mean component is exactly zero, the entry is 0 if the neighbor
    agrees exactly and +inf otherwise, so disagreement around a zero mean
    drives the consistency score to zero.
    """
    dif = np.empty_like(neighbor_labels)
    for c in range(2):
        m = mean[c]
        dev = neighbor_labels[:, c] - m
        if m == 0.0:
            dif[:, c] = np.where(dev == 0.0, 0.0, np.inf)
        else:
            dif[:, c] = np.abs(dev / m)
    return dif


def regenerate(report: ReliabilityReport, pseudo: np.ndarray, cells: CellSet,
               cfg: RegenConfig) -> RefinedLabels:
    """Rebuild unreliable labels from reliable neighbors.

    Output starts as the reliable cells with their labels untouched. For each
    unreliable cell: distances to all reliable cells, K nearest (distance ties
    broken by lower cell index), neighbors kept only while strictly closer
    than beta, weights exp(-D/theta_w), re-generated label = weighted mean of
    neighbor labels, and a consistency score H = exp(-mean of the per-axis
    weighted relative differences). The cell survives iff H > gamma. The
    neighbor pool stays fixed to the reliable set; re-generated cells never
    feed later queries.
    """
    pseudo = np.asarray(pseudo, dtype=np.float64)
    coords = cells.coords.astype(np.float64)
    rel = report.reliable_idx
    kept = list(rel)
    motion = [pseudo[i] for i in rel]
    provenance = [PROV_SELECTED] * len(rel)

    if len(rel):
        index = _BucketIndex(coords[rel], cfg.beta)
        for i in report.unreliable_idx:
            cand = index.query(coords[i])
            if len(cand) == 0:
                continue
            d = coords[rel[cand]] - coords[i]
            dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
            order = np.lexsort((rel[cand], dist))[:cfg.k]
            within = dist[order] < cfg.beta
            picked = cand[order[within]]
            if len(picked) == 0:
                continue
            dist_k = dist[order[within]]
            labels_k = pseudo[rel[picked]]
            w = np.exp(-dist_k / cfg.theta_w)
            mean = np.array([_weighted_mean(labels_k[:, 0], w),
                             _weighted_mean(labels_k[:, 1], w)])
            dif = _relative_difference(labels_k, mean)
            h = np.exp(-(_weighted_mean(dif[:, 0], w) + _weighted_mean(dif[:, 1], w)) / 2.0)
            if h > cfg.gamma:
                kept.append(i)
                motion.append(mean)
                provenance.append(PROV_REGENERATED)

    return RefinedLabels(
        np.array(kept, dtype=np.int64),
        np.array(motion, dtype=np.float64).reshape(-1, 2),
        np.array(provenance, dtype=np.int64),
    )


def _tiled_auxiliary(warped: np.ndarray, source: CellSet, targets: CellSet,
                     cfg: RefineConfig, margin: float) -> np.ndarray:
    """Blockwise transport for frames with too many cells for one dense solve.

    The grid is split into square tiles sized so each holds roughly
    ``cell_cap`` sources; targets are taken from the tile expanded by
    ``margin``. Sources whose expanded tile holds no target get an infinite
    auxiliary distance (scored unreliable downstream).
    """
    coords = source.coords.astype(np.float64)
    span = max(np.ptp(coords[:, 0]), np.ptp(coords[:, 1])) + 1.0
    density = len(source) / max(span * span, 1.0)
    tile = max(1.0, np.sqrt(cfg.cell_cap / max(density, 1e-12)))
    aux = np.full((len(source), 2), np.inf)
    tgt = targets.coords.astype(np.float64)
    keys = np.floor(coords / tile).astype(np.int64)
    for key in sorted({(int(a), int(b)) for a, b in keys}):
        sel = np.flatnonzero((keys[:, 0] == key[0]) & (keys[:, 1] == key[1]))
        lo = np.array(key, dtype=np.float64) * tile - margin
        hi = (np.array(key, dtype=np.float64) + 1.0) * tile + margin
        tmask = np.all((tgt >= lo) & (tgt < hi), axis=1)
        if not tmask.any():
            continue
        sub_targets = CellSet(targets.coords[tmask], targets.source_frame)
        cost = transport.build_cost(warped[sel], sub_targets, cfg.theta_c)
        plan = transport.sinkhorn(cost, cfg.epsilon, cfg.max_iters, cfg.marginal_tol)
        sub_source = CellSet(source.coords[sel], source.source_frame)
        aux[sel] = transport.auxiliary_labels(plan, sub_source, sub_targets)
    return aux


def compute_auxiliary(pseudo: np.ndarray, source: CellSet, targets: CellSet,
                      cfg: RefineConfig) -> np.ndarray:
    """Warp-and-match auxiliary labels for each source cell."""
    warped = source.coords.astype(np.float64) + pseudo
    if max(len(source), len(targets)) <= cfg.cell_cap:
        cost = transport.build_cost(warped, targets, cfg.theta_c)
        plan = transport.sinkhorn(cost, cfg.epsilon, cfg.max_iters, cfg.marginal_tol)
        return transport.auxiliary_labels(plan, source, targets)
    margin = cfg.mu + float(np.abs(pseudo).max(initial=0.0))
    return _tiled_auxiliary(warped, source, targets, cfg, margin)


def refine(pseudo_motion: MotionField, current: BevMap, future: BevMap,
           cfg: RefineConfig | None = None,
           return_diagnostics: bool = False):
    """Full pipeline from a predicted motion field to refined labels.

    Returns (cells, refined) where ``cells`` is the scored cell ordering the
    refined indices refer to. With ``return_diagnostics`` a dict holding
    ``delta_m`` and ``auxiliary`` is appended.
    """
    cfg = cfg or RefineConfig()
    cells = nonempty_cells(current)
    if len(cells) == 0:
        raise ValueError("current frame has no cells to refine")
    targets = nonempty_cells(future)
    if len(targets) == 0:
        raise ValueError("future frame has no cells to match against")
    rows, cols = cells.coords[:, 0], cells.coords[:, 1]
    if not np.all(pseudo_motion.validity[rows, cols]):
        raise ValueError("unlabeled cell: pseudo motion invalid on a non-empty cell")
    pseudo = pseudo_motion.displacement[rows, cols]
    aux = compute_auxiliary(pseudo, cells, targets, cfg)
    delta = score_reliability(pseudo, aux)
    report = select(delta, cfg.mu)
    refined = regenerate(report, pseudo, cells, cfg.regen)
    if return_diagnostics:
        return cells, refined, {"delta_m": delta, "auxiliary": aux, "report": report}
    return cells, refined


def labels_to_field(cells: CellSet, refined: RefinedLabels, shape: tuple[int, int]) -> MotionField:
    """Scatter refined labels back onto the grid as a sparse motion field."""
    disp = np.zeros((shape[0], shape[1], 2))
    valid = np.zeros(shape, dtype=bool)
    picked = cells.coords[refined.kept_idx]
    disp[picked[:, 0], picked[:, 1]] = refined.motion
    valid[picked[:, 0], picked[:, 1]] = True
    return MotionField(disp, valid)

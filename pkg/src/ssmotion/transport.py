"""Entropic optimal transport between warped cells and next-frame cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CellSet

DEFAULT_THETA_C = 3.0
DEFAULT_EPSILON = 0.03
DEFAULT_MAX_ITERS = 100
DEFAULT_MARGINAL_TOL = 1e-6

# rescale the scaling vectors into the potentials once they exceed this
_STABILITY_GUARD = 1e100


class SinkhornError(RuntimeError):
    pass


@dataclass
class CostMatrix:
    """Pairwise matching cost 1 - exp(-d^2 / theta_c), in [0, 1)."""

    values: np.ndarray  # (N_src, N_tgt)
    theta_c: float


@dataclass
class TransportPlan:
    """Soft matching with uniform marginals 1/N_src and 1/N_tgt."""

    pi: np.ndarray
    epsilon: float
    iterations_used: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)
    dual_trace: list[float] = field(default_factory=list)


def build_cost(warped: np.ndarray, targets: CellSet, theta_c: float = DEFAULT_THETA_C) -> CostMatrix:
    """Cost between warped source coordinates and target cell coordinates."""
    warped = np.asarray(warped, dtype=np.float64).reshape(-1, 2)
    if len(warped) == 0 or len(targets) == 0:
        raise ValueError("no cells to match")
    if theta_c <= 0:
        raise ValueError("theta_c must be positive")
    diff = warped[:, None, :] - targets.coords[None, :, :].astype(np.float64)
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return CostMatrix(1.0 - np.exp(-d2 / theta_c), theta_c)


def sinkhorn(cost: CostMatrix, epsilon: float = DEFAULT_EPSILON,
             max_iters: int = DEFAULT_MAX_ITERS,
             marginal_tol: float = DEFAULT_MARGINAL_TOL,
             track_objective: bool = False) -> TransportPlan:
    """Iterative scaling solver for the entropy-regularized matching problem.

    Row marginals are fixed to 1/N_src, column marginals to 1/N_tgt. Scaling
    vectors are periodically absorbed into log-domain potentials so large
    dynamic ranges do not overflow. Stops when the largest marginal violation
    drops below ``marginal_tol``; otherwise returns with ``converged=False``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    C = cost.values
    n, m = C.shape
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    f = np.zeros(n)  # absorbed log-domain potentials
    g = np.zeros(m)
    u = np.ones(n)
    v = np.ones(m)

    def kernel():
        return np.exp(-(C - f[:, None] - g[None, :]) / epsilon)

    K = kernel()
    if np.any(K.sum(axis=1) == 0.0) or np.any(K.sum(axis=0) == 0.0):
        raise SinkhornError("epsilon too small: scaling kernel underflowed")

    trace: list[float] = []
    dual_trace: list[float] = []
    converged = False
    it = 0
    kv = K @ v
    for it in range(1, max_iters + 1):
        u = a / kv
        v = b / (K.T @ u)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise SinkhornError("epsilon too small: scaling vectors underflowed")
        if max(np.abs(u).max(), np.abs(v).max()) > _STABILITY_GUARD:
            f = f + epsilon * np.log(u)
            g = g + epsilon * np.log(v)
            u = np.ones(n)
            v = np.ones(m)
            K = kernel()
        kv = K @ v
        if track_objective:
            pi = u[:, None] * K * v[None, :]
            trace.append(float(np.sum(C * pi)))
            # dual of the entropic problem; exact blockwise maximization makes
            # this trace monotone non-decreasing, unlike the primal <C, pi>
            ft = f + epsilon * np.log(u)
            gt = g + epsilon * np.log(v)
            dual_trace.append(float(ft @ a + gt @ b - epsilon * pi.sum()))
        # column marginals are exact right after the v update, so only the
        # row violation needs checking
        if np.abs(u * kv - a).max() < marginal_tol:
            converged = True
            break
    pi = u[:, None] * K * v[None, :]
    return TransportPlan(pi, epsilon, it, converged, trace, dual_trace)


def auxiliary_labels(plan: TransportPlan, source: CellSet, targets: CellSet) -> np.ndarray:
    """Barycentric target coordinate under the plan, minus the source coordinate.

    Each row of the plan is normalized to sum to one before taking the
    barycenter, turning the soft matching into a per-source expected target.
    """
    pi = plan.pi
    if pi.shape != (len(source), len(targets)):
        raise ValueError("plan dimensions do not match the cell sets")
    row_sums = pi.sum(axis=1, keepdims=True)
    if np.any(row_sums == 0.0):
        raise ValueError("isolated source cell: zero transport mass in a row")
    bary = (pi / row_sums) @ targets.coords.astype(np.float64)
    return bary - source.coords.astype(np.float64)

"""p-Wasserstein distances between equal-weight empirical measures.

Equal weights reduce optimal transport to a linear assignment problem, solved
exactly up to N_max points; beyond that the sliced (random-projection)
surrogate provides a scalable, seed-deterministic metric trend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

N_MAX_EXACT = 512


@dataclass
class TransportPlan:
    """Optimal permutation matching and its cost."""

    assignment: np.ndarray  # assignment[i] = index in B matched to A[i]
    cost: float  # the returned distance, (mean_i |a_i - b_sigma(i)|^p)^(1/p)
    p: float

    def __post_init__(self):
        srt = np.sort(self.assignment)
        if not np.array_equal(srt, np.arange(len(self.assignment))):
            raise ValueError("assignment must be a permutation")


def _as_cloud(obj, phase: str = "position") -> np.ndarray:
    """Accept an (n, d) array or an Ensemble; phase picks which coordinates."""
    if hasattr(obj, "positions"):
        if phase == "position":
            return obj.positions
        if phase == "velocity":
            return obj.velocities
        if phase == "full":
            return np.hstack([obj.positions, obj.velocities])
        raise ValueError(f"unknown phase {phase!r}")
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def wasserstein_exact(A, B, p: float = 2.0, phase: str = "position") -> Tuple[float, TransportPlan]:
    """Exact W_p between two equal-size point clouds via optimal assignment.

    distance = (min_sigma (1/N) sum_i |a_i - b_sigma(i)|^p)^(1/p). Symmetric,
    zero iff the multisets coincide.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    a = _as_cloud(A, phase)
    b = _as_cloud(B, phase)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n > N_MAX_EXACT:
        raise ValueError(f"N = {n} exceeds N_max = {N_MAX_EXACT}; use sliced_wasserstein")
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    cost_matrix = dist**p
    rows, cols = linear_sum_assignment(cost_matrix)
    sigma = np.empty(n, dtype=np.int64)
    sigma[rows] = cols
    total = float(cost_matrix[rows, cols].sum())
    distance = (total / n) ** (1.0 / p)
    return distance, TransportPlan(assignment=sigma, cost=distance, p=p)


def wasserstein_1d(a: np.ndarray, b: np.ndarray, p: float = 2.0) -> float:
    """W_p on the line: monotone (sorted) matching is optimal."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    sa = np.sort(a)
    sb = np.sort(b)
    return float(np.mean(np.abs(sa - sb) ** p) ** (1.0 / p))


def sliced_wasserstein(A, B, p: float = 2.0, n_projections: int = 128, seed: int = 0, phase: str = "position") -> float:
    """Random-projection surrogate: (mean over directions of W_p(proj)^p)^(1/p).

    Deterministic per seed. In one dimension every direction is +-1 and the
    value equals wasserstein_1d exactly.
    """
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    a = _as_cloud(A, phase)
    b = _as_cloud(B, phase)
    if a.shape[1] != b.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError("shape mismatch")
    d = a.shape[1]
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_projections, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    acc = 0.0
    for theta in g:
        acc += wasserstein_1d(a @ theta, b @ theta, p) ** p
    return float((acc / n_projections) ** (1.0 / p))


def stability_ratio(trajA, trajB, p: float = 2.0, phase: str = "position") -> List[Tuple[float, float]]:
    """W_p(A(t), B(t)) / W_p(A(t0), B(t0)) at each aligned snapshot time.

    Bounded ratios over a finite horizon are the finite-in-time stability
    statement for the flow.
    """
    snaps_a = trajA.snapshots
    snaps_b = trajB.snapshots
    if len(snaps_a) != len(snaps_b):
        raise ValueError("trajectories have different snapshot counts")
    out: List[Tuple[float, float]] = []
    w0 = None
    for (ta, ea), (tb, eb) in zip(snaps_a, snaps_b):
        if abs(ta - tb) > 1e-9 * max(1.0, abs(ta)):
            raise ValueError(f"snapshot times misaligned: {ta} vs {tb}")
        w, _ = wasserstein_exact(ea, eb, p, phase=phase)
        if w0 is None:
            if w == 0.0:
                raise ValueError("initial Wasserstein distance is zero")
            w0 = w
        out.append((ta, w / w0))
    return out

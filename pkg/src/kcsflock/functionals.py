"""Scalar diagnostics of an ensemble or trajectory.

Flocking moments (velocity variance about the conserved mean, spatial
cohesion about the free-streaming center of mass), polynomial and exponential
moments, tail masses over the effective region, the kinetic-energy dissipation
rate, the communication-weight floor, and the trajectory deviation functional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .model import Ensemble, ModelParams, comm_weight
from .regimes import RegimeSpec

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_OVERFLOW_LIMIT = 1e300


@dataclass(frozen=True)
class DiagnosticsConfig:
    """What to record at every snapshot.

    moment_order is the D used for the D-th moments; alpha switches on the
    exponential mass; regime (when present) supplies the effective radius at
    which the tail masses are taken. x_ref / v_ref are the initial center of
    mass and mean velocity, filled in by the integrator.
    """

    params: ModelParams
    moment_order: float = 4.0
    alpha: Optional[float] = None
    regime: Optional[RegimeSpec] = None
    x_ref: Optional[np.ndarray] = None
    v_ref: Optional[np.ndarray] = None


@dataclass
class DiagnosticRecord:
    """One snapshot's worth of functionals; optional entries are None when not configured."""

    t: float
    momentum: np.ndarray
    velocity_variance: float
    spatial_cohesion: float
    moment_D_velocity: float
    moment_D_position: float
    exp_mass_alpha: Optional[float]
    tail_mass_position: Optional[float]
    tail_mass_velocity: Optional[float]
    max_speed: float
    dissipation_rate: float
    effective_radius: Optional[float]

    def __post_init__(self):
        for name in ("tail_mass_position", "tail_mass_velocity"):
            val = getattr(self, name)
            if val is not None and not (-1e-12 <= val <= 1.0 + 1e-12):
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.dissipation_rate > 1e-12:
            raise ValueError(f"dissipation_rate must be <= 0, got {self.dissipation_rate}")


def velocity_variance(ens: Ensemble, v_ref: np.ndarray) -> float:
    """(1/N) sum |v_i - v_ref|^2, the alignment functional about v_ref."""
    v_ref = np.asarray(v_ref, dtype=np.float64)
    if v_ref.shape != (ens.dim,):
        raise ValueError("v_ref dimension mismatch")
    dv = ens.velocities - v_ref[None, :]
    return float(np.mean(np.sum(dv * dv, axis=1)))


def spatial_cohesion(ens: Ensemble, x_ref: np.ndarray, v_ref: np.ndarray, t: float) -> float:
    """(1/N) sum |x_i - x_ref - t v_ref|^2: spread about the free-streaming center."""
    x_ref = np.asarray(x_ref, dtype=np.float64)
    v_ref = np.asarray(v_ref, dtype=np.float64)
    if x_ref.shape != (ens.dim,) or v_ref.shape != (ens.dim,):
        raise ValueError("reference dimension mismatch")
    dx = ens.positions - (x_ref + t * v_ref)[None, :]
    return float(np.mean(np.sum(dx * dx, axis=1)))


def _radii(ens: Ensemble, which: str) -> np.ndarray:
    if which == "position":
        return np.linalg.norm(ens.positions, axis=1)
    if which == "velocity":
        return np.linalg.norm(ens.velocities, axis=1)
    raise ValueError(f"which must be 'position' or 'velocity', got {which!r}")


def p_moment(ens: Ensemble, which: str, D: float) -> float:
    """(1/N) sum |x_i|^D or |v_i|^D."""
    if D < 1:
        raise ValueError("D must be >= 1")
    return float(np.mean(_radii(ens, which) ** D))


def exp_weighted_mass(ens: Ensemble, which: str, alpha: float) -> float:
    """(1/N) sum e^(alpha w_i), w = |x|, |v| or |x| + |v|."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if which == "both":
        w = _radii(ens, "position") + _radii(ens, "velocity")
    else:
        w = _radii(ens, which)
    with np.errstate(over="ignore"):
        terms = np.exp(alpha * w)
    if np.any(terms > _OVERFLOW_LIMIT) or not np.all(np.isfinite(terms)):
        raise OverflowError("exponential mass term exceeds 1e300")
    return float(np.mean(terms))


def tail_mass(ens: Ensemble, which: str, R: float) -> float:
    """Fraction of samples with radius strictly greater than R."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    return float(np.mean(_radii(ens, which) > R))


if _HAVE_NUMBA:
    from .model import _weight_mode

    @numba.njit(cache=True)
    def _pair_dissipation_sum(x, v, beta, mode):  # pragma: no cover - compiled
        n, d = x.shape
        e = -0.5 * beta
        total = 0.0
        for i in range(n):
            s = 0.0
            for j in range(i + 1, n):
                r2 = 0.0
                dv2 = 0.0
                for k in range(d):
                    dx = x[j, k] - x[i, k]
                    r2 += dx * dx
                    dvk = v[j, k] - v[i, k]
                    dv2 += dvk * dvk
                b = 1.0 + r2
                if mode == 0:
                    w = 1.0
                elif mode == 1:
                    w = 1.0 / np.sqrt(b)
                elif mode == 2:
                    w = 1.0 / np.sqrt(np.sqrt(b))
                elif mode == 3:
                    w = 1.0 / np.sqrt(np.sqrt(np.sqrt(b)))
                elif mode == 4:
                    w = 1.0 / (np.sqrt(np.sqrt(b)) * np.sqrt(np.sqrt(np.sqrt(b))))
                else:
                    w = b**e
                s += w * dv2
            total += s
        return total


def _pair_dissipation_numpy(x: np.ndarray, v: np.ndarray, beta: float) -> float:
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    dv2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
    phi = (1.0 + sq) ** (-0.5 * beta)
    return 0.5 * float(np.sum(phi * dv2))


def dissipation_rate(ens: Ensemble, params: ModelParams) -> float:
    """Instantaneous kinetic-energy decay rate.

    Returns -(kappa/N^2) sum_{i != j} phi(|x_i - x_j|) |v_i - v_j|^2 (computed
    over unordered pairs and doubled), which equals d/dt velocity_variance
    along the flow. Always <= 0.
    """
    x, v = ens.positions, ens.velocities
    if _HAVE_NUMBA:
        s = _pair_dissipation_sum(x, v, params.beta, _weight_mode(params.beta))
    else:
        s = _pair_dissipation_numpy(x, v, params.beta)
    return -2.0 * params.kappa * s / ens.n**2


def phi_floor(R: float, beta: float) -> float:
    """phi(2R): lower bound of the weight over any pair inside the R-ball."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    return comm_weight(2.0 * R, beta)


def effective_radius(regime: RegimeSpec, t: float) -> float:
    """Radius of the ball concentrating almost all mass at time t.

    Regimes 1 and 2: C1 (1 + t)^gamma. Regime 3: (1/alpha + 1) p_inf + t/alpha.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if regime.regime in (1, 2):
        if regime.C1 is None:
            raise ValueError("effective radius needs the C1 constant")
        return regime.C1 * (1.0 + t) ** regime.gamma
    return (1.0 / regime.alpha + 1.0) * regime.p_inf + t / regime.alpha


def default_C1(ens: Ensemble) -> float:
    """Effective-region constant: 99th-percentile initial radius plus one.

    Makes the t = 0 position tail mass at R_x(0) = C1 about 1% without tuning.
    """
    return float(np.quantile(np.linalg.norm(ens.positions, axis=1), 0.99)) + 1.0


def compute_record(ens: Ensemble, t: float, cfg: DiagnosticsConfig) -> DiagnosticRecord:
    """Evaluate every configured functional on one snapshot."""
    x_ref = cfg.x_ref if cfg.x_ref is not None else np.zeros(ens.dim)
    v_ref = cfg.v_ref if cfg.v_ref is not None else np.zeros(ens.dim)
    exp_mass = None
    if cfg.alpha is not None:
        try:
            exp_mass = exp_weighted_mass(ens, "position", cfg.alpha)
        except OverflowError:
            exp_mass = None
    r_eff = None
    tail_x = None
    tail_v = None
    if cfg.regime is not None:
        r_eff = effective_radius(cfg.regime, max(t, 0.0))
        tail_x = tail_mass(ens, "position", r_eff)
        tail_v = tail_mass(ens, "velocity", r_eff)
    return DiagnosticRecord(
        t=t,
        momentum=ens.mean_velocity(),
        velocity_variance=velocity_variance(ens, v_ref),
        spatial_cohesion=spatial_cohesion(ens, x_ref, v_ref, t),
        moment_D_velocity=p_moment(ens, "velocity", cfg.moment_order),
        moment_D_position=p_moment(ens, "position", cfg.moment_order),
        exp_mass_alpha=exp_mass,
        tail_mass_position=tail_x,
        tail_mass_velocity=tail_v,
        max_speed=float(np.max(np.linalg.norm(ens.velocities, axis=1))),
        dissipation_rate=dissipation_rate(ens, cfg.params),
        effective_radius=r_eff,
    )


def delta_functional(trajA, trajB) -> List[Tuple[float, float]]:
    """Deviation between two flows started from the same samples.

    At each common snapshot time, Delta(t) = (1/N) sum_i (|X_i^A - X_i^B| +
    |V_i^A - V_i^B|), pairing sample i with sample i (both characteristics
    issue from the same initial point). Exactly zero at t0 and for identical
    trajectories.
    """
    if trajA.init_digest != trajB.init_digest:
        raise ValueError("trajectories do not share the same initial ensemble")
    times_b = {}
    for k, (t, ens) in enumerate(trajB.snapshots):
        times_b[round(t, 12)] = ens
    out: List[Tuple[float, float]] = []
    for t, ens_a in trajA.snapshots:
        key = round(t, 12)
        if key not in times_b:
            continue
        ens_b = times_b[key]
        dx = np.linalg.norm(ens_a.positions - ens_b.positions, axis=1)
        dv = np.linalg.norm(ens_a.velocities - ens_b.velocities, axis=1)
        out.append((t, float(np.mean(dx + dv))))
    if not out:
        raise ValueError("trajectories share no snapshot times")
    return out

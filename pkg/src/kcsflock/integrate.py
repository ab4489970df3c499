"""Fixed-step RK4 integration of the alignment dynamics.

The right-hand side is globally smooth and sub-linear in v, so a classical
fixed-step scheme is adequate; fixed steps also make trajectory pairing and
convergence-order measurement exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .model import Ensemble, ModelParams, cs_acceleration
from .functionals import DiagnosticsConfig, DiagnosticRecord, compute_record

_OVERFLOW = 1e100


class IntegrationError(RuntimeError):
    """Non-finite or overflowing state detected during a run."""

    def __init__(self, message: str, step: Optional[int] = None, time: Optional[float] = None):
        super().__init__(message)
        self.step = step
        self.time = time


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid: [t0, t_end] at step dt, snapshots every snapshot_stride steps."""

    t0: float
    t_end: float
    dt: float
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.t_end < self.t0:
            raise ValueError("t_end must be >= t0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end > self.t0 and self.dt > (self.t_end - self.t0) * (1 + 1e-12):
            raise ValueError("dt must not exceed the grid span")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt)) if self.t_end > self.t0 else 0

    def time_at(self, step: int) -> float:
        return self.t0 + step * self.dt

    def refined(self, refine: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.t_end, self.dt / refine, self.snapshot_stride * refine)


@dataclass
class Trajectory:
    """Snapshots of the evolving ensemble plus per-snapshot diagnostics."""

    grid: TimeGrid
    params: ModelParams
    init_digest: str
    snapshots: List[Tuple[float, Ensemble]] = field(default_factory=list)
    diagnostics: List[DiagnosticRecord] = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def series(self, name: str) -> List[Tuple[float, float]]:
        """(t, value) pairs for a scalar diagnostic field, skipping absent entries."""
        out = []
        for rec in self.diagnostics:
            val = getattr(rec, name)
            if val is not None:
                out.append((rec.t, float(val)))
        return out


def _check_finite(ens: Ensemble, step: int, t: float) -> None:
    for arr, label in ((ens.positions, "position"), (ens.velocities, "velocity")):
        if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > _OVERFLOW):
            raise IntegrationError(
                f"non-finite or overflowing {label} state at step {step}, t = {t:g}",
                step=step,
                time=t,
            )


def step_rk4(ens: Ensemble, params: ModelParams, dt: float) -> Ensemble:
    """One classical RK4 step of dx/dt = v, dv/dt = alignment force."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        return _step_rk4_raw(ens, params, dt)


def _step_rk4_raw(ens: Ensemble, params: ModelParams, dt: float) -> Ensemble:
    x0, v0 = ens.positions, ens.velocities

    k1x = v0
    k1v = cs_acceleration(ens, params)
    e2 = Ensemble(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
    k2x = e2.velocities
    k2v = cs_acceleration(e2, params)
    e3 = Ensemble(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
    k3x = e3.velocities
    k3v = cs_acceleration(e3, params)
    e4 = Ensemble(x0 + dt * k3x, v0 + dt * k3v)
    k4x = e4.velocities
    k4v = cs_acceleration(e4, params)

    x1 = x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    out = Ensemble(x1, v1)
    _check_finite(out, step=-1, t=float("nan"))
    return out


def default_dt(params: ModelParams) -> float:
    """1e-2 * min(1, 1/kappa): at least ~50 steps per relaxation e-fold."""
    return 1e-2 * min(1.0, 1.0 / params.kappa) if params.kappa > 0 else 1e-2


def integrate(
    ens: Ensemble,
    params: ModelParams,
    grid: TimeGrid,
    diag: Optional[DiagnosticsConfig] = None,
) -> Trajectory:
    """March the ensemble over the grid, capturing snapshots and diagnostics.

    Snapshots (and the O(N^2) diagnostics) are taken every snapshot_stride
    steps plus always at the first and final step.
    """
    if diag is None:
        diag = DiagnosticsConfig(params=params)
    if diag.x_ref is None or diag.v_ref is None:
        diag = DiagnosticsConfig(
            params=diag.params,
            moment_order=diag.moment_order,
            alpha=diag.alpha,
            regime=diag.regime,
            x_ref=ens.mean_position() if diag.x_ref is None else diag.x_ref,
            v_ref=ens.mean_velocity() if diag.v_ref is None else diag.v_ref,
        )

    traj = Trajectory(grid=grid, params=params, init_digest=ens.digest())
    state = ens.copy()
    traj.snapshots.append((grid.t0, state.copy()))
    traj.diagnostics.append(compute_record(state, grid.t0, diag))

    n_steps = grid.n_steps
    for step in range(1, n_steps + 1):
        t = grid.time_at(step)
        try:
            state = step_rk4(state, params, grid.dt)
        except IntegrationError as err:
            raise IntegrationError(
                f"integration failed at step {step}, t = {t:g}: {err}", step=step, time=t
            ) from err
        _check_finite(state, step, t)
        if step % grid.snapshot_stride == 0 or step == n_steps:
            traj.snapshots.append((t, state.copy()))
            traj.diagnostics.append(compute_record(state, t, diag))
    return traj


def paired_integrate(
    ens: Ensemble,
    params: ModelParams,
    grid: TimeGrid,
    refine: int,
    diag: Optional[DiagnosticsConfig] = None,
) -> Tuple[Trajectory, Trajectory]:
    """The same initial ensemble integrated at dt and dt/refine.

    The fine grid's snapshot stride is scaled by refine so snapshot times
    align step-for-step with the coarse run.
    """
    if refine < 2:
        raise ValueError("refine must be >= 2")
    coarse = integrate(ens, params, grid, diag)
    fine = integrate(ens, params, grid.refined(refine), diag)
    return coarse, fine

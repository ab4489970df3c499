"""Verdicts from diagnostic time series.

Fits decay exponents, builds the theoretical one-sided envelopes for each
regime, and checks tail-mass, dissipation-identity and conservation bounds.
The envelope constants are never taken from theory (they are unknowable O(1)
factors); they are fitted at the first post-burn-in snapshot and the check is
one-sided from there on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .functionals import effective_radius, exp_weighted_mass, p_moment
from .regimes import RegimeSpec

DEFAULT_BURN_IN = 1.0
DEFAULT_TOLERANCE = 0.05


@dataclass
class RateFit:
    """Least-squares decay fit over a time window."""

    exponent: float
    log_prefactor: float
    r_squared: float
    window: Tuple[float, float]


@dataclass
class EnvelopeVerdict:
    """Outcome of a one-sided bound check."""

    kind: str  # power_law | exponential | boundedness | tail_bound
    theoretical_exponent_or_rate: float
    fitted_constant: float
    violation_count: int
    max_relative_violation: float
    n_checked: int = 0
    passed: bool = True


def theoretical_exponent(spec: RegimeSpec) -> float:
    """Algebraic decay exponent of the velocity variance for the regime.

    Regimes 1 and 2: 1 - (D/2 (gamma - 1) + beta gamma); regime 3: -2 kappa.
    The regime-2 value is derived (evaluated at a default moment order), not a
    stated rate.
    """
    if spec.regime in (1, 2):
        return 1.0 - (0.5 * spec.D * (spec.gamma - 1.0) + spec.beta * spec.gamma)
    return -2.0 * spec.kappa


def _clean_series(series: Sequence[Tuple[float, float]], window: Optional[Tuple[float, float]]):
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, value) pairs")
    t, y = arr[:, 0], arr[:, 1]
    if window is not None:
        lo, hi = window
        mask = (t >= lo) & (t <= hi)
        t, y = t[mask], y[mask]
    else:
        window = (float(t.min()), float(t.max())) if len(t) else (0.0, 0.0)
    if len(t) < 8:
        raise ValueError("need at least 8 points in the fit window")
    if np.any(y <= 0):
        raise ValueError("series values must be positive for a log fit")
    return t, y, (float(window[0]), float(window[1]))


def _lsq_fit(u: np.ndarray, logy: np.ndarray, window) -> RateFit:
    slope, intercept = np.polyfit(u, logy, 1)
    pred = slope * u + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(exponent=float(slope), log_prefactor=float(intercept), r_squared=min(r2, 1.0), window=window)


def fit_power_exponent(series, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """Slope of log(value) against log(1 + t) over the window."""
    t, y, window = _clean_series(series, window)
    return _lsq_fit(np.log1p(t), np.log(y), window)


def fit_exponential_rate(series, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """Slope of log(value) against t over the window."""
    t, y, window = _clean_series(series, window)
    return _lsq_fit(t, np.log(y), window)


def _envelope_values(t: np.ndarray, exponent_or_rate: float, kind: str) -> np.ndarray:
    if kind == "power_law":
        return (1.0 + t) ** exponent_or_rate
    if kind == "exponential":
        return np.exp(exponent_or_rate * t)
    raise ValueError(f"unknown envelope kind {kind!r}")


def envelope_check(
    series,
    exponent_or_rate: float,
    kind: str = "power_law",
    burn_in: float = DEFAULT_BURN_IN,
    tolerance: float = DEFAULT_TOLERANCE,
    max_violation_fraction: float = 0.0,
) -> EnvelopeVerdict:
    """One-sided bound value(t) <= C (1 + tolerance) envelope(t).

    C is fitted at the first post-burn-in point so the check carries the
    envelope's shape, not its unknowable constant. Passes when the fraction of
    violating snapshots is at most max_violation_fraction.
    """
    arr = np.asarray(series, dtype=np.float64)
    t, y = arr[:, 0], arr[:, 1]
    mask = t >= burn_in
    if not np.any(mask):
        raise ValueError("no snapshots beyond burn_in")
    t, y = t[mask], y[mask]
    env = _envelope_values(t, exponent_or_rate, kind)
    C = float(y[0] / env[0])
    allowed = C * (1.0 + tolerance) * env
    rel = (y - allowed) / np.where(allowed > 0, allowed, 1.0)
    violations = int(np.sum(rel > 0))
    max_rel = float(np.max(rel)) if len(rel) else 0.0
    n = len(t) - 1  # the anchor point cannot violate by construction
    passed = violations <= max_violation_fraction * max(n, 1)
    return EnvelopeVerdict(
        kind=kind,
        theoretical_exponent_or_rate=exponent_or_rate,
        fitted_constant=C,
        violation_count=violations,
        max_relative_violation=max_rel,
        n_checked=len(t),
        passed=passed,
    )


def boundedness_check(series, burn_in: float = DEFAULT_BURN_IN) -> EnvelopeVerdict:
    """No sustained growth: last-quartile mean <= 1.1 x mid-quartile mean.

    Reports the post-burn-in sup via fitted_constant and the growth ratio via
    max_relative_violation.
    """
    arr = np.asarray(series, dtype=np.float64)
    t, y = arr[:, 0], arr[:, 1]
    mask = t >= burn_in
    if not np.any(mask):
        raise ValueError("no snapshots beyond burn_in")
    y = y[mask]
    n = len(y)
    sup = float(np.max(y))
    mid = y[n // 4 : max(3 * n // 4, n // 4 + 1)]
    last = y[3 * n // 4 :]
    mid_mean = float(np.mean(mid))
    last_mean = float(np.mean(last))
    ratio = last_mean / mid_mean if mid_mean > 0 else math.inf
    passed = ratio <= 1.1
    return EnvelopeVerdict(
        kind="boundedness",
        theoretical_exponent_or_rate=0.0,
        fitted_constant=sup,
        violation_count=0 if passed else 1,
        max_relative_violation=ratio,
        n_checked=n,
        passed=passed,
    )


def tail_bound_check(traj, spec: RegimeSpec, slack: float = 1e-12) -> EnvelopeVerdict:
    """Effective-region tail mass against the initial moment budget.

    Regimes 1 and 2: tail(R_x(t)) <= 2^(D-1) M_p (1 + t)^D / R_x(t)^D with the
    empirical budget M_p of the sampled initial ensemble. Regime 3:
    tail(R_x(t)) <= M_e e^(alpha p_inf t - alpha R_x(t)) with the empirical
    spatial-exponential budget.
    """
    recs = [r for r in traj.diagnostics if r.tail_mass_position is not None]
    if not recs:
        raise ValueError("trajectory diagnostics carry no tail masses for this regime")
    _, init = traj.snapshots[0]
    t0 = traj.snapshots[0][0]
    if spec.regime in (1, 2):
        m_hat = p_moment(init, "position", spec.D) + p_moment(init, "velocity", spec.D)
        exponent = float(spec.D)
    else:
        m_hat = exp_weighted_mass(init, "position", spec.alpha)
        exponent = -2.0 * spec.kappa
    violations = 0
    max_rel = -math.inf
    for rec in recs:
        t = rec.t - t0
        r_x = rec.effective_radius if rec.effective_radius is not None else effective_radius(spec, t)
        if spec.regime in (1, 2):
            bound = 2.0 ** (spec.D - 1.0) * m_hat * (1.0 + t) ** spec.D / r_x**spec.D
        else:
            bound = m_hat * math.exp(spec.alpha * spec.p_inf * t - spec.alpha * r_x)
        rel = (rec.tail_mass_position - bound) / max(bound, 1e-300)
        max_rel = max(max_rel, rel)
        if rel > slack:
            violations += 1
    return EnvelopeVerdict(
        kind="tail_bound",
        theoretical_exponent_or_rate=exponent,
        fitted_constant=float(m_hat),
        violation_count=violations,
        max_relative_violation=float(max_rel),
        n_checked=len(recs),
        passed=violations == 0,
    )


def _verdict_dict(v: EnvelopeVerdict) -> Dict:
    return {
        "kind": v.kind,
        "theoretical_exponent_or_rate": v.theoretical_exponent_or_rate,
        "fitted_constant": v.fitted_constant,
        "violation_count": v.violation_count,
        "max_relative_violation": v.max_relative_violation,
        "n_checked": v.n_checked,
        "passed": v.passed,
    }


def conservation_residuals(traj) -> Dict:
    """Momentum drift and center-of-mass transport error over the run."""
    recs = traj.diagnostics
    t0 = recs[0].t
    p0 = recs[0].momentum
    drift = max(float(np.max(np.abs(r.momentum - p0))) for r in recs)
    com_err = 0.0
    _, init = traj.snapshots[0]
    x_c0 = init.mean_position()
    v_c0 = init.mean_velocity()
    for t, ens in traj.snapshots:
        expected = x_c0 + (t - t0) * v_c0
        com_err = max(com_err, float(np.max(np.abs(ens.mean_position() - expected))))
    return {"momentum_drift": drift, "com_transport_error": com_err}


def dissipation_identity_residual(traj, rel_floor: float = 1e-3, resolution_limit: float = 0.5) -> Dict:
    """Centered finite difference of the velocity variance vs the recorded
    dissipation rate, relative to the rate scale; interior snapshots only.

    A snapshot enters the check only when it is resolvable: the local decay
    rate lambda = |rate|/variance times the snapshot spacing must not exceed
    resolution_limit (a centered difference at lambda*h carries an intrinsic
    error of about (lambda h)^2/6, which swamps the identity beyond that),
    and the rate must be above rel_floor of the peak (otherwise both sides
    vanish and the quotient is noise). n_resolved counts usable snapshots.
    """
    recs = traj.diagnostics
    empty = {"max_relative_residual": 0.0, "n_checked": 0, "n_above_floor": 0, "n_interior": 0}
    if len(recs) < 3:
        return empty
    rates = np.array([r.dissipation_rate for r in recs])
    scale = float(np.max(np.abs(rates)))
    if scale == 0.0:
        return {**empty, "n_interior": len(recs) - 2}
    worst = 0.0
    checked = 0
    above_floor = 0
    for k in range(1, len(recs) - 1):
        if abs(rates[k]) < rel_floor * scale:
            continue
        above_floor += 1
        h_half = 0.5 * (recs[k + 1].t - recs[k - 1].t)
        var_k = max(recs[k].velocity_variance, 1e-300)
        lam = abs(rates[k]) / var_k
        if lam * h_half > resolution_limit:
            continue
        h = recs[k + 1].t - recs[k - 1].t
        fd = (recs[k + 1].velocity_variance - recs[k - 1].velocity_variance) / h
        worst = max(worst, float(abs(fd - rates[k]) / abs(rates[k])))
        checked += 1
    return {
        "max_relative_residual": worst,
        "n_checked": checked,
        "n_above_floor": above_floor,
        "n_interior": len(recs) - 2,
    }


def gronwall_report(traj, spec: RegimeSpec, burn_in: float = DEFAULT_BURN_IN, tolerance: float = DEFAULT_TOLERANCE, max_violation_fraction: float = 0.02) -> Dict:
    """Bundle every regime check into one pass/fail report.

    Sections: velocity-variance envelope, spatial-cohesion boundedness,
    tail-mass bound, dissipation-identity residual, conservation residuals.
    """
    if not traj.diagnostics:
        raise ValueError("trajectory has no diagnostics")
    vv = traj.series("velocity_variance")
    sc = traj.series("spatial_cohesion")
    exponent = theoretical_exponent(spec)
    env = envelope_check(
        vv, exponent, kind="power_law", burn_in=burn_in, tolerance=tolerance,
        max_violation_fraction=max_violation_fraction,
    )
    cohesion = boundedness_check(sc, burn_in=burn_in)
    tail = tail_bound_check(traj, spec)
    dissip = dissipation_identity_residual(traj)
    cons = conservation_residuals(traj)
    dissip_pass = bool(dissip["n_checked"] == 0 or dissip["max_relative_residual"] <= DEFAULT_TOLERANCE)
    cons_pass = bool(cons["momentum_drift"] < 1e-9 and cons["com_transport_error"] < 1e-7)
    overall = bool(env.passed and cohesion.passed and tail.passed and dissip_pass and cons_pass)
    fit = None
    try:
        t_last = vv[-1][0]
        fit = fit_power_exponent(vv, window=(max(burn_in, t_last / 3.0), t_last))
    except ValueError:
        pass
    return {
        "theoretical_exponent": exponent,
        "fitted_exponent": None if fit is None else fit.exponent,
        "fit_r_squared": None if fit is None else fit.r_squared,
        "velocity_envelope": _verdict_dict(env),
        "spatial_cohesion": _verdict_dict(cohesion),
        "tail_bound": _verdict_dict(tail),
        "dissipation_identity": {**dissip, "passed": dissip_pass},
        "conservation": {**cons, "passed": cons_pass},
        "passed": overall,
    }

"""Experiment orchestration.

Subcommands: simulate, verify, rates, stability, uniqueness. Each takes
--config <path> (a flat `key = value` file with dotted keys) plus --set
overrides, and writes CSV/JSON reports into the output directory.

Exit codes: 0 pass, 1 check failure, 2 numerical failure, 3 I/O, 4 config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import Ensemble, ModelParams
from .sampler import InitSpec, sample_ensemble
from .integrate import TimeGrid, Trajectory, IntegrationError, integrate, paired_integrate
from .functionals import DiagnosticsConfig, default_C1, delta_functional
from .regimes import RegimeSpec
from .transport import N_MAX_EXACT, sliced_wasserstein, stability_ratio
from . import analysis

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3
EXIT_CONFIG = 4


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class RunConfig:
    model: ModelParams
    init: InitSpec
    grid: TimeGrid
    regime: Optional[RegimeSpec]
    n_particles: int
    seed: int
    outputs: str
    emit_plots: bool
    moment_order: float
    raw: Dict[str, str]


def parse_config_text(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(cfg: Dict[str, str], key: str, conv, default=None, required: bool = False):
    if key not in cfg:
        if required:
            raise ConfigError(key, "missing required key")
        return default
    try:
        return conv(cfg[key])
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(key, str(err)) from err


def _to_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_KNOWN_KEYS = {
    "model.kappa", "model.beta",
    "init.variant", "init.dim", "init.D", "init.alpha", "init.p_inf",
    "init.scale", "init.recenter",
    "grid.t0", "grid.t_end", "grid.dt", "grid.snapshot_stride",
    "regime.id", "regime.gamma", "regime.D", "regime.alpha", "regime.p_inf", "regime.C1",
    "run.n_particles", "run.seed", "run.moment_order",
    "output.dir", "output.plots",
}


def build_run_config(cfg: Dict[str, str]) -> RunConfig:
    for key in cfg:
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
    try:
        model = ModelParams(
            kappa=_get(cfg, "model.kappa", float, required=True),
            beta=_get(cfg, "model.beta", float, required=True),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("model.beta" if "beta" in str(err) else "model.kappa", str(err)) from err

    variant = _get(cfg, "init.variant", str, required=True)
    try:
        init = InitSpec(
            variant=variant,
            dim=_get(cfg, "init.dim", int, default=2),
            D=_get(cfg, "init.D", float),
            alpha=_get(cfg, "init.alpha", float),
            p_inf=_get(cfg, "init.p_inf", float),
            scale=_get(cfg, "init.scale", float, default=1.0),
            recenter=_get(cfg, "init.recenter", _to_bool, default=True),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("init.variant", str(err)) from err

    try:
        grid = TimeGrid(
            t0=_get(cfg, "grid.t0", float, default=0.0),
            t_end=_get(cfg, "grid.t_end", float, required=True),
            dt=_get(cfg, "grid.dt", float, required=True),
            snapshot_stride=_get(cfg, "grid.snapshot_stride", int, default=1),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("grid.dt", str(err)) from err

    regime = None
    if "regime.id" in cfg:
        try:
            regime = RegimeSpec(
                regime=_get(cfg, "regime.id", int, required=True),
                beta=model.beta,
                kappa=model.kappa,
                gamma=_get(cfg, "regime.gamma", float),
                D=_get(cfg, "regime.D", float),
                alpha=_get(cfg, "regime.alpha", float),
                p_inf=_get(cfg, "regime.p_inf", float),
                C1=_get(cfg, "regime.C1", float),
            )
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("regime.id", str(err)) from err
        _check_consistency(init, regime)

    n_particles = _get(cfg, "run.n_particles", int, default=256)
    if n_particles < 1:
        raise ConfigError("run.n_particles", "must be >= 1")
    moment_order = _get(cfg, "run.moment_order", float, default=None)
    if moment_order is None:
        if regime is not None and regime.D is not None:
            moment_order = regime.D
        elif init.variant == "polynomial":
            moment_order = init.D
        else:
            moment_order = 4.0

    return RunConfig(
        model=model,
        init=init,
        grid=grid,
        regime=regime,
        n_particles=n_particles,
        seed=_get(cfg, "run.seed", int, default=0),
        outputs=_get(cfg, "output.dir", str, default="out"),
        emit_plots=_get(cfg, "output.plots", _to_bool, default=False),
        moment_order=moment_order,
        raw=dict(cfg),
    )


def _check_consistency(init: InitSpec, regime: RegimeSpec) -> None:
    if regime.regime == 1 and init.variant != "polynomial":
        raise ConfigError("regime.id", "regime 1 requires init.variant = polynomial")
    if regime.regime == 2 and init.variant != "exponential":
        raise ConfigError("regime.id", "regime 2 requires init.variant = exponential")
    if regime.regime == 3 and init.variant != "compact":
        raise ConfigError("regime.id", "regime 3 requires init.variant = compact")
    if regime.regime == 1 and init.D is not None and regime.D is not None and init.D != regime.D:
        raise ConfigError("regime.D", f"disagrees with init.D ({init.D} vs {regime.D})")
    if regime.alpha is not None and init.alpha is not None and regime.alpha != init.alpha:
        raise ConfigError("regime.alpha", f"disagrees with init.alpha ({init.alpha} vs {regime.alpha})")
    if regime.p_inf is not None and init.p_inf is not None and regime.p_inf != init.p_inf:
        raise ConfigError("regime.p_inf", f"disagrees with init.p_inf ({init.p_inf} vs {regime.p_inf})")


# --- output writers -------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_diagnostics_csv(path: str, traj: Trajectory) -> None:
    dim = traj.snapshots[0][1].dim
    cols = (
        ["t"]
        + [f"momentum_{k}" for k in range(dim)]
        + [
            "velocity_variance", "spatial_cohesion", "moment_D_velocity",
            "moment_D_position", "exp_mass_alpha", "tail_mass_position",
            "tail_mass_velocity", "max_speed", "dissipation_rate", "effective_radius",
        ]
    )
    lines = [",".join(cols)]
    for rec in traj.diagnostics:
        row = [_fmt(rec.t)]
        row += [_fmt(m) for m in rec.momentum]
        row += [
            _fmt(rec.velocity_variance), _fmt(rec.spatial_cohesion),
            _fmt(rec.moment_D_velocity), _fmt(rec.moment_D_position),
            _fmt(rec.exp_mass_alpha), _fmt(rec.tail_mass_position),
            _fmt(rec.tail_mass_velocity), _fmt(rec.max_speed),
            _fmt(rec.dissipation_rate), _fmt(rec.effective_radius),
        ]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ensemble_csv(path: str, ens: Ensemble) -> None:
    cols = [f"x_{k}" for k in range(ens.dim)] + [f"v_{k}" for k in range(ens.dim)]
    lines = [",".join(cols)]
    for i in range(ens.n):
        row = [_fmt(v) for v in ens.positions[i]] + [_fmt(v) for v in ens.velocities[i]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path: str, payload: Dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _diag_config(run: RunConfig, ens: Ensemble) -> DiagnosticsConfig:
    regime = run.regime
    if regime is not None and regime.regime in (1, 2) and regime.C1 is None:
        regime = regime.with_C1(default_C1(ens))
    return DiagnosticsConfig(
        params=run.model,
        moment_order=run.moment_order,
        alpha=run.init.alpha,
        regime=regime,
        x_ref=ens.mean_position(),
        v_ref=ens.mean_velocity(),
    )


def _prepare(run: RunConfig) -> Tuple[Ensemble, DiagnosticsConfig]:
    ens = sample_ensemble(run.init, run.n_particles, run.seed)
    return ens, _diag_config(run, ens)


def _plot_decay(outdir: str, traj: Trajectory, regime: Optional[RegimeSpec]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    vv = np.array(traj.series("velocity_variance"))
    sc = np.array(traj.series("spatial_cohesion"))

    fig, ax = plt.subplots()
    ax.loglog(1.0 + vv[:, 0], vv[:, 1], label="velocity variance")
    if regime is not None and len(vv) > 1:
        e = analysis.theoretical_exponent(regime)
        anchor = vv[min(np.searchsorted(vv[:, 0], 1.0), len(vv) - 1)]
        C = anchor[1] / (1.0 + anchor[0]) ** e
        ax.loglog(1.0 + vv[:, 0], C * (1.0 + vv[:, 0]) ** e, "--", label=f"envelope (1+t)^{e:g}")
    ax.set_xlabel("1 + t")
    ax.set_ylabel("velocity variance")
    ax.legend()
    fig.savefig(os.path.join(outdir, "velocity_variance.png"), dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots()
    ax.plot(sc[:, 0], sc[:, 1])
    ax.set_xlabel("t")
    ax.set_ylabel("spatial cohesion")
    fig.savefig(os.path.join(outdir, "spatial_cohesion.png"), dpi=120)
    plt.close(fig)


# --- commands -------------------------------------------------------------

def cmd_simulate(run: RunConfig) -> int:
    t_start = time.monotonic()
    ens, diag = _prepare(run)
    try:
        traj = integrate(ens, run.model, run.grid, diag)
    except IntegrationError as err:
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.monotonic() - t_start
    try:
        os.makedirs(run.outputs, exist_ok=True)
        write_diagnostics_csv(os.path.join(run.outputs, "diagnostics.csv"), traj)
        write_ensemble_csv(os.path.join(run.outputs, "ensemble_final.csv"), traj.snapshots[-1][1])
        cons = analysis.conservation_residuals(traj)
        write_json(
            os.path.join(run.outputs, "summary.json"),
            {
                "config": run.raw,
                "n_snapshots": len(traj.snapshots),
                "momentum_drift": cons["momentum_drift"],
                "com_transport_error": cons["com_transport_error"],
                "init_digest": traj.init_digest,
            },
        )
        if run.emit_plots:
            _plot_decay(run.outputs, traj, run.regime)
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"simulate: {len(traj.snapshots)} snapshots in {wall:.2f} s -> {run.outputs}", file=sys.stderr)
    return EXIT_OK


def _monotone_violations(series: List[Tuple[float, float]], rel_slack: float) -> int:
    vals = [v for _, v in series]
    scale = max(abs(v) for v in vals) or 1.0
    return sum(1 for a, b in zip(vals, vals[1:]) if b - a > rel_slack * scale)


def cmd_verify(run: RunConfig) -> int:
    ens, diag = _prepare(run)
    try:
        traj = integrate(ens, run.model, run.grid, diag)
    except IntegrationError as err:
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL

    cons = analysis.conservation_residuals(traj)
    dissip = analysis.dissipation_identity_residual(traj)
    max_speed_slack = 10.0 * run.grid.dt**5 + 1e-12
    checks = {
        "momentum_conservation": {
            "residual": cons["momentum_drift"],
            "passed": cons["momentum_drift"] < 1e-11,
        },
        "com_transport": {
            "residual": cons["com_transport_error"],
            "passed": cons["com_transport_error"] < 1e-9,
        },
        "energy_monotone": {
            "violations": _monotone_violations(traj.series("velocity_variance"), 1e-10),
            "passed": _monotone_violations(traj.series("velocity_variance"), 1e-10) == 0,
        },
        "moment_D_monotone": {
            "violations": _monotone_violations(traj.series("moment_D_velocity"), 1e-9),
            "passed": _monotone_violations(traj.series("moment_D_velocity"), 1e-9) == 0,
        },
        "max_speed_monotone": {
            "violations": _monotone_violations(traj.series("max_speed"), max_speed_slack),
            "passed": _monotone_violations(traj.series("max_speed"), max_speed_slack) == 0,
        },
        # no resolvable snapshot while the rate is active means the run is too
        # coarse to confirm the identity, which counts as a failure here
        "dissipation_identity": {
            "residual": dissip["max_relative_residual"],
            "n_checked": dissip["n_checked"],
            "n_above_floor": dissip["n_above_floor"],
            "passed": bool(
                dissip["n_above_floor"] == 0
                or (dissip["n_checked"] > 0 and dissip["max_relative_residual"] <= 0.05)
            ),
        },
    }
    if run.regime is not None:
        regime = diag.regime
        tail = analysis.tail_bound_check(traj, regime)
        checks["tail_bound"] = {
            "violations": tail.violation_count,
            "max_relative_violation": tail.max_relative_violation,
            "passed": tail.passed,
        }
    all_pass = all(c["passed"] for c in checks.values())
    try:
        os.makedirs(run.outputs, exist_ok=True)
        write_json(os.path.join(run.outputs, "verify.json"), {"checks": checks, "passed": all_pass})
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    for name, c in checks.items():
        print(f"verify: {name}: {'PASS' if c['passed'] else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if all_pass else EXIT_CHECK_FAILED


def cmd_rates(run: RunConfig) -> int:
    if run.regime is None:
        print("rates requires a regime section in the config", file=sys.stderr)
        return EXIT_CONFIG
    ens, diag = _prepare(run)
    try:
        traj = integrate(ens, run.model, run.grid, diag)
    except IntegrationError as err:
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    report = analysis.gronwall_report(traj, diag.regime)
    try:
        os.makedirs(run.outputs, exist_ok=True)
        write_json(os.path.join(run.outputs, "rates.json"), report)
        if run.emit_plots:
            _plot_decay(run.outputs, traj, diag.regime)
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    print(
        f"rates: theoretical exponent {report['theoretical_exponent']:g}, "
        f"fitted {report['fitted_exponent']}, passed={report['passed']}",
        file=sys.stderr,
    )
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def cmd_stability(run: RunConfig, perturbation: float, p: float = 2.0, allow_sliced: bool = False) -> int:
    if perturbation <= 0:
        print("perturbation must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if run.n_particles > N_MAX_EXACT and not allow_sliced:
        print(
            f"n_particles = {run.n_particles} exceeds the exact-transport limit "
            f"{N_MAX_EXACT}; rerun with --allow-sliced",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    ens, diag = _prepare(run)
    rng = np.random.default_rng(run.seed + 1)
    jitter = rng.uniform(-perturbation, perturbation, size=ens.velocities.shape)
    perturbed = Ensemble(ens.positions.copy(), ens.velocities + jitter)
    try:
        traj_a = integrate(ens, run.model, run.grid, diag)
        traj_b = integrate(perturbed, run.model, run.grid, diag)
    except IntegrationError as err:
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    if run.n_particles > N_MAX_EXACT:
        w0 = None
        series = []
        for (t, ea), (_, eb) in zip(traj_a.snapshots, traj_b.snapshots):
            w = sliced_wasserstein(ea, eb, p=p, n_projections=128, seed=run.seed, phase="full")
            if w0 is None:
                if w == 0.0:
                    print("zero initial sliced distance", file=sys.stderr)
                    return EXIT_NUMERICAL
                w0 = w
            series.append((t, w / w0))
    else:
        series = stability_ratio(traj_a, traj_b, p=p, phase="full")
    payload = {
        "p": p,
        "perturbation": perturbation,
        "series": [[t, r] for t, r in series],
        "max_ratio": max(r for _, r in series),
    }
    try:
        os.makedirs(run.outputs, exist_ok=True)
        write_json(os.path.join(run.outputs, "stability.json"), payload)
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"stability: max ratio {payload['max_ratio']:g}", file=sys.stderr)
    return EXIT_OK


def cmd_uniqueness(run: RunConfig, refine: int) -> int:
    if refine < 2:
        print("refine must be >= 2", file=sys.stderr)
        return EXIT_CONFIG
    ens, diag = _prepare(run)
    try:
        coarse, fine = paired_integrate(ens, run.model, run.grid, refine, diag)
        finer = integrate(ens, run.model, run.grid.refined(refine * refine), diag)
    except IntegrationError as err:
        print(f"integration failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    delta_1 = delta_functional(coarse, fine)
    delta_2 = delta_functional(fine, finer)
    max_1 = max(v for _, v in delta_1)
    max_2 = max(v for _, v in delta_2)
    if max_2 == 0.0:
        order = float("inf") if max_1 == 0.0 else 0.0
    else:
        order = float(np.log(max_1 / max_2) / np.log(refine))
    passed = order >= 3.5 or (max_1 == 0.0 and max_2 == 0.0)
    payload = {
        "refine": refine,
        "delta_coarse_vs_fine": [[t, v] for t, v in delta_1],
        "delta_fine_vs_finer": [[t, v] for t, v in delta_2],
        "max_delta_coarse": max_1,
        "max_delta_fine": max_2,
        "observed_order": order,
        "passed": passed,
    }
    try:
        os.makedirs(run.outputs, exist_ok=True)
        write_json(os.path.join(run.outputs, "uniqueness.json"), payload)
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"uniqueness: observed order {order:g}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


# --- entry point ----------------------------------------------------------

def load_run_config(path: str, overrides: Sequence[str]) -> RunConfig:
    try:
        with open(path) as fh:
            cfg = parse_config_text(fh.read())
    except OSError as err:
        raise ConfigError(path, f"cannot read config: {err}") from err
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    return build_run_config(cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    threads = os.environ.get("KCSFLOCK_THREADS")
    if threads is not None:
        import numba

        try:
            numba.set_num_threads(int(threads))
        except ValueError as err:
            print(f"KCSFLOCK_THREADS: {err}", file=sys.stderr)
            return EXIT_CONFIG

    parser = argparse.ArgumentParser(prog="kcsflock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")

    add_common(sub.add_parser("simulate", help="sample, integrate, dump diagnostics"))
    add_common(sub.add_parser("verify", help="run the conservation/monotonicity suite"))
    add_common(sub.add_parser("rates", help="fit decay rates against the regime envelope"))
    p_stab = sub.add_parser("stability", help="transport-distance stability of a perturbed run")
    add_common(p_stab)
    p_stab.add_argument("--perturbation", type=float, default=1e-3)
    p_stab.add_argument("--p", type=float, default=2.0)
    p_stab.add_argument("--allow-sliced", action="store_true")
    p_uni = sub.add_parser("uniqueness", help="deviation between dt and dt/refine integrations")
    add_common(p_uni)
    p_uni.add_argument("--refine", type=int, default=2)

    args = parser.parse_args(argv)
    try:
        run = load_run_config(args.config, args.overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "simulate":
        return cmd_simulate(run)
    if args.command == "verify":
        return cmd_verify(run)
    if args.command == "rates":
        return cmd_rates(run)
    if args.command == "stability":
        return cmd_stability(run, args.perturbation, p=args.p, allow_sliced=args.allow_sliced)
    if args.command == "uniqueness":
        return cmd_uniqueness(run, args.refine)
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

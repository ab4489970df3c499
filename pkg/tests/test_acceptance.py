"""End-to-end acceptance gate.

Each test exercises one headline guarantee at full scale and prints a single
PASS/FAIL line. The two N = 4096 decay runs take a few minutes each; they are
shared module-scoped fixtures so the file stays runnable in one go.
"""

import itertools

import numpy as np
import pytest

from kcsflock import (
    Ensemble,
    InitSpec,
    ModelParams,
    RegimeSpec,
    TimeGrid,
    boundedness_check,
    delta_functional,
    envelope_check,
    integrate,
    paired_integrate,
    sample_ensemble,
    stability_ratio,
    tail_bound_check,
    wasserstein_exact,
)
from kcsflock.analysis import conservation_residuals
from kcsflock.cli import main as cli_main
from kcsflock.functionals import DiagnosticsConfig, default_C1


def report(capfd, num, label, passed):
    line = f"acceptance {num:2d} [{'PASS' if passed else 'FAIL'}] {label}"
    with capfd.disabled():
        print(line, flush=True)
    assert passed, line


@pytest.fixture(scope="module")
def aligned_run():
    """N = 512 all-to-all run: beta = 0, kappa = 1, t in [0, 5], dt = 1e-3."""
    init = InitSpec("exponential", dim=2, alpha=1.0)
    ens = sample_ensemble(init, 512, 12345)
    params = ModelParams(1.0, 0.0)
    diag = DiagnosticsConfig(
        params=params, moment_order=4.0, alpha=1.0,
        x_ref=ens.mean_position(), v_ref=ens.mean_velocity(),
    )
    traj = integrate(ens, params, TimeGrid(0.0, 5.0, 1e-3, snapshot_stride=100), diag)
    return ens, params, traj


@pytest.fixture(scope="module")
def regime1_run():
    """N = 4096 heavy-tail run: beta = 0.25, gamma = 2, D = 8, t in [0, 50]."""
    init = InitSpec("polynomial", dim=2, D=8.0)
    ens = sample_ensemble(init, 4096, 12345)
    params = ModelParams(1.0, 0.25)
    regime = RegimeSpec(regime=1, beta=0.25, kappa=1.0, gamma=2.0, D=8.0)
    regime = regime.with_C1(default_C1(ens))
    diag = DiagnosticsConfig(
        params=params, moment_order=8.0, regime=regime,
        x_ref=ens.mean_position(), v_ref=ens.mean_velocity(),
    )
    traj = integrate(ens, params, TimeGrid(0.0, 50.0, 0.1, snapshot_stride=10), diag)
    return traj, regime


@pytest.fixture(scope="module")
def regime3_run():
    """N = 4096 compact-velocity run: beta = 1, kappa = 1.25, t in [0, 50]."""
    init = InitSpec("compact", dim=2, alpha=1.0, p_inf=1.0)
    ens = sample_ensemble(init, 4096, 999)
    params = ModelParams(1.25, 1.0)
    regime = RegimeSpec(regime=3, beta=1.0, kappa=1.25, alpha=1.0, p_inf=1.0)
    diag = DiagnosticsConfig(
        params=params, moment_order=4.0, alpha=1.0, regime=regime,
        x_ref=ens.mean_position(), v_ref=ens.mean_velocity(),
    )
    traj = integrate(ens, params, TimeGrid(0.0, 50.0, 0.08, snapshot_stride=12), diag)
    return traj, regime


def test_01_exact_exponential_law(aligned_run, capfd):
    _, _, traj = aligned_run
    series = traj.series("velocity_variance")
    v0 = series[0][1]
    worst = max(abs(v - v0 * np.exp(-2.0 * t)) / (v0 * np.exp(-2.0 * t)) for t, v in series)
    report(capfd, 1, f"variance tracks e^(-2 kappa t), max rel err {worst:.2e} < 1e-6", worst < 1e-6)


def test_02_momentum_and_com_conservation(aligned_run, capfd):
    _, _, traj = aligned_run
    cons = conservation_residuals(traj)
    ok = cons["momentum_drift"] < 1e-11 and cons["com_transport_error"] < 1e-9
    report(
        capfd,
        2,
        f"momentum drift {cons['momentum_drift']:.2e} < 1e-11, "
        f"c.o.m. error {cons['com_transport_error']:.2e} < 1e-9",
        ok,
    )


def test_03_monotonicity_sweep(capfd):
    rng = np.random.default_rng(20260823)
    combos = list(itertools.product([0.0, 0.25, 0.5, 1.0], [0.5, 1.0, 2.0]))
    violations = 0
    for k in range(20):
        beta, kappa = combos[rng.integers(len(combos))]
        init = InitSpec("exponential", dim=2, alpha=1.0)
        ens = sample_ensemble(init, 64, int(rng.integers(1 << 30)))
        params = ModelParams(kappa, beta)
        diag = DiagnosticsConfig(params=params, moment_order=4.0)
        traj = integrate(ens, params, TimeGrid(0.0, 2.0, 0.01, snapshot_stride=5), diag)
        for name in ("velocity_variance", "moment_D_velocity", "max_speed"):
            vals = [v for _, v in traj.series(name)]
            scale = max(vals)
            violations += sum(1 for a, b in zip(vals, vals[1:]) if b - a > 1e-9 * scale)
    report(capfd, 3, f"monotone decay over 20-config sweep, {violations} violations", violations == 0)


def test_04_two_particle_closed_form(capfd):
    ens = Ensemble(np.array([[0.0], [0.0]]), np.array([[1.0], [-1.0]]))
    params = ModelParams(1.0, 0.0)
    traj = integrate(ens, params, TimeGrid(0.0, 1.0, 1e-3, snapshot_stride=1000))
    _, final = traj.snapshots[-1]
    dv = abs(final.velocities[0, 0] - final.velocities[1, 0])
    err = abs(dv - 2.0 * np.exp(-1.0))
    report(capfd, 4, f"two-particle relative velocity error {err:.2e} < 1e-9", err < 1e-9)


def test_05_regime1_envelope(regime1_run, capfd):
    traj, regime = regime1_run
    env = envelope_check(
        traj.series("velocity_variance"), -3.5,
        burn_in=1.0, tolerance=0.05, max_violation_fraction=0.02,
    )
    cohesion = boundedness_check(traj.series("spatial_cohesion"), burn_in=1.0)
    ok = env.passed and cohesion.passed
    report(
        capfd,
        5,
        f"(1+t)^-3.5 envelope: {env.violation_count}/{env.n_checked} violations, "
        f"cohesion bounded: {cohesion.passed}",
        ok,
    )


def test_06_regime3_envelope_and_exponential_tail(regime3_run, capfd):
    traj, regime = regime3_run
    env = envelope_check(
        traj.series("velocity_variance"), -2.5,
        burn_in=1.0, tolerance=0.05, max_violation_fraction=0.02,
    )
    tail = tail_bound_check(traj, regime)
    ok = env.passed and tail.violation_count == 0
    report(
        capfd,
        6,
        f"(1+t)^-2.5 envelope: {env.violation_count}/{env.n_checked} violations, "
        f"exponential tail bound: {tail.violation_count}/{tail.n_checked} violations",
        ok,
    )


def test_07_regime1_tail_mass_bound(regime1_run, capfd):
    traj, regime = regime1_run
    tail = tail_bound_check(traj, regime)
    report(
        capfd,
        7,
        f"polynomial tail bound at R_x(t) = C1 (1+t)^2: "
        f"{tail.violation_count}/{tail.n_checked} violations",
        tail.violation_count == 0,
    )


def test_08_wasserstein_exactness_and_stability(aligned_run, capfd):
    from test_transport import brute_force_wp

    rng = np.random.default_rng(2)
    exact_ok = True
    for _ in range(200):
        n = int(rng.integers(2, 7))
        dim = int(rng.integers(1, 4))
        p = float(rng.choice([1.0, 2.0, 3.0]))
        a = rng.standard_normal((n, dim))
        b = rng.standard_normal((n, dim))
        d, _ = wasserstein_exact(a, b, p)
        if abs(d - brute_force_wp(a, b, p)) > 1e-10 * max(d, 1.0):
            exact_ok = False

    ens, params, _ = aligned_run
    rng2 = np.random.default_rng(77)
    jitter = rng2.uniform(-1e-3, 1e-3, size=ens.velocities.shape)
    perturbed = Ensemble(ens.positions.copy(), ens.velocities + jitter)
    grid = TimeGrid(0.0, 5.0, 0.01, snapshot_stride=50)
    traj_a = integrate(ens.copy(), params, grid)
    traj_b = integrate(perturbed, params, grid)
    ratios = stability_ratio(traj_a, traj_b, p=2.0, phase="full")
    max_ratio = max(r for _, r in ratios)
    ok = exact_ok and max_ratio < 10.0
    report(
        capfd,
        8,
        f"exact W_p matches brute force on 200 instances: {exact_ok}, "
        f"stability ratio max {max_ratio:.3f} < 10",
        ok,
    )


def test_09_richardson_order(capfd):
    rng = np.random.default_rng(6)
    ens = Ensemble(rng.standard_normal((32, 2)), rng.standard_normal((32, 2)))
    params = ModelParams(1.0, 0.5)
    grid = TimeGrid(0.0, 1.0, 0.05, snapshot_stride=5)
    coarse, fine = paired_integrate(ens, params, grid, refine=2)
    finer = integrate(ens, params, grid.refined(4))
    m1 = max(v for _, v in delta_functional(coarse, fine))
    m2 = max(v for _, v in delta_functional(fine, finer))
    order = np.log(m1 / m2) / np.log(2.0)
    same = integrate(ens, params, grid)
    zero = max(v for _, v in delta_functional(coarse, same))
    ok = order >= 3.5 and zero == 0.0
    report(
        capfd,
        9,
        f"Richardson order {order:.2f} >= 3.5, identical-run delta {zero} == 0",
        ok,
    )


def test_10_byte_identical_reruns(tmp_path, capfd):
    import os

    cfg = os.path.join(os.path.dirname(__file__), "..", "configs", "small_exponential.cfg")
    outdir = str(tmp_path / "run")
    args = [
        "simulate", "--config", cfg,
        "--set", f"output.dir={outdir}",
        "--set", "run.n_particles=128",
    ]
    assert cli_main(args) == 0
    names = ("diagnostics.csv", "ensemble_final.csv", "summary.json")
    first = {n: open(os.path.join(outdir, n), "rb").read() for n in names}
    assert cli_main(args) == 0
    identical = all(open(os.path.join(outdir, n), "rb").read() == first[n] for n in names)
    report(capfd, 10, f"rerun outputs byte-identical: {identical}", identical)

import numpy as np
import pytest

from kcsflock import (
    Ensemble,
    IntegrationError,
    ModelParams,
    TimeGrid,
    integrate,
    paired_integrate,
    step_rk4,
)
from kcsflock.sampler import InitSpec, sample_exponential


def two_particle_line():
    # d=1, counter-propagating pair at the origin
    return Ensemble(np.zeros((2, 1)), np.array([[1.0], [-1.0]]))


class TestTimeGrid:
    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, -0.1)
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 2.0)

    def test_degenerate_span_allowed(self):
        grid = TimeGrid(0.0, 0.0, 0.1)
        assert grid.n_steps == 0

    def test_step_count(self):
        assert TimeGrid(0.0, 1.0, 0.1).n_steps == 10


class TestStepRK4:
    def test_rest_ensemble_is_fixed_point(self):
        rng = np.random.default_rng(0)
        ens = Ensemble(rng.standard_normal((6, 2)), np.zeros((6, 2)))
        out = step_rk4(ens, ModelParams(1.0, 0.5), 0.1)
        assert np.array_equal(out.positions, ens.positions)
        assert np.array_equal(out.velocities, ens.velocities)

    def test_two_particle_closed_form(self):
        # v difference obeys dv/dt = -kappa dv when phi == 1: dv(t) = 2 e^{-t}
        ens = two_particle_line()
        params = ModelParams(1.0, 0.0)
        state = ens
        dt = 1e-3
        for _ in range(1000):
            state = step_rk4(state, params, dt)
        dv = state.velocities[0, 0] - state.velocities[1, 0]
        assert abs(dv - 2.0 * np.exp(-1.0)) < 1e-10

    def test_one_step_error_shrinks_16x(self):
        rng = np.random.default_rng(4)
        ens = Ensemble(rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
        params = ModelParams(1.0, 0.5)

        def err_against_reference(dt):
            coarse = step_rk4(ens, params, dt)
            fine = ens
            for _ in range(8):
                fine = step_rk4(fine, params, dt / 8)
            return np.max(np.abs(coarse.velocities - fine.velocities))

        e1 = err_against_reference(0.2)
        e2 = err_against_reference(0.1)
        assert 8 < e1 / e2 < 40  # ~16x for a 5th-order local error

    def test_overflow_guard(self):
        ens = Ensemble(np.full((2, 1), 1e99), np.full((2, 1), 1e99))
        huge = Ensemble(ens.positions, ens.velocities * 1e10)
        with pytest.raises((IntegrationError, ValueError)):
            step_rk4(huge, ModelParams(1.0, 0.0), 1e200)


class TestIntegrate:
    def test_degenerate_grid_single_snapshot(self):
        ens = two_particle_line()
        traj = integrate(ens, ModelParams(1.0, 0.0), TimeGrid(0.0, 0.0, 0.1))
        assert len(traj.snapshots) == 1
        t, snap = traj.snapshots[0]
        assert t == 0.0
        assert np.array_equal(snap.velocities, ens.velocities)

    def test_snapshot_count(self):
        ens = two_particle_line()
        traj = integrate(ens, ModelParams(1.0, 0.0), TimeGrid(0.0, 1.0, 0.1, snapshot_stride=3))
        # steps 3, 6, 9 plus forced final step 10 plus the initial snapshot
        assert [round(t, 10) for t, _ in traj.snapshots] == [0.0, 0.3, 0.6, 0.9, 1.0]

    def test_momentum_conserved_along_run(self):
        spec = InitSpec("exponential", dim=2, alpha=1.0)
        ens = sample_exponential(spec, 256, 3)
        traj = integrate(ens, ModelParams(1.0, 0.5), TimeGrid(0.0, 10.0, 0.01, snapshot_stride=100))
        p0 = traj.diagnostics[0].momentum
        for rec in traj.diagnostics:
            assert np.max(np.abs(rec.momentum - p0)) < 1e-11

    def test_monotone_diagnostics(self):
        spec = InitSpec("exponential", dim=2, alpha=1.0)
        ens = sample_exponential(spec, 128, 5)
        traj = integrate(ens, ModelParams(2.0, 0.25), TimeGrid(0.0, 5.0, 0.005, snapshot_stride=50))
        vv = [r.velocity_variance for r in traj.diagnostics]
        mv = [r.moment_D_velocity for r in traj.diagnostics]
        ms = [r.max_speed for r in traj.diagnostics]
        assert all(b - a <= 1e-10 * max(vv) for a, b in zip(vv, vv[1:]))
        assert all(b - a <= 1e-9 * max(mv) for a, b in zip(mv, mv[1:]))
        slack = 10 * 0.005**5 + 1e-12
        assert all(b - a <= slack for a, b in zip(ms, ms[1:]))

    def test_center_of_mass_transport(self):
        spec = InitSpec("exponential", dim=2, alpha=1.0, recenter=False)
        ens = sample_exponential(spec, 64, 9)
        traj = integrate(ens, ModelParams(1.0, 0.5), TimeGrid(0.0, 10.0, 0.01, snapshot_stride=200))
        x0 = ens.mean_position()
        v0 = ens.mean_velocity()
        for t, snap in traj.snapshots:
            assert np.max(np.abs(snap.mean_position() - x0 - t * v0)) < 1e-9


class TestPairedIntegrate:
    def test_refine_one_rejected(self):
        ens = two_particle_line()
        with pytest.raises(ValueError):
            paired_integrate(ens, ModelParams(1.0, 0.0), TimeGrid(0.0, 1.0, 0.1), refine=1)

    def test_shared_digest_and_aligned_times(self):
        rng = np.random.default_rng(1)
        ens = Ensemble(rng.standard_normal((16, 2)), rng.standard_normal((16, 2)))
        coarse, fine = paired_integrate(
            ens, ModelParams(1.0, 0.5), TimeGrid(0.0, 1.0, 0.125, snapshot_stride=2), refine=2
        )
        assert coarse.init_digest == fine.init_digest
        assert [t for t, _ in coarse.snapshots] == [t for t, _ in fine.snapshots]

import numpy as np
import pytest

from cns2d import (ConfigError, ControlTrajectory, DivergenceError, DivFreeField, ForcingSpec,
                   InputError, RandomFieldSpec, SolverConfig, energy_identity_residual,
                   export_trajectory, inner_H, load_trajectory, make_grid, norms, random_field,
                   rhs_galerkin, solve_state, step, tangent_project, truncate)
from cns2d.linearization import loglog_slope


class TestLinearLimit:
    def test_heat_decay_single_mode(self, grid8):
        # with convection and constraint off each mode decays like exp(-nu |k|^2 t)
        u0 = DivFreeField.single_mode(grid8, (1, 2), 0.3)
        cfg = SolverConfig(grid8, dt=0.01, horizon=0.5, nu=0.7, convection=False, constraint=False)
        tr = solve_state(u0, cfg)
        expected = u0.coeffs * np.exp(-0.7 * 5 * 0.5)
        assert np.max(np.abs(tr[-1].coeffs - expected)) < 1e-14

    def test_heat_decay_mixture(self, grid8, field_factory):
        u0 = field_factory(grid8, seed=2)
        cfg = SolverConfig(grid8, dt=0.05, horizon=1.0, convection=False, constraint=False)
        tr = solve_state(u0, cfg)
        expected = u0.coeffs * np.exp(-grid8.ksq)
        assert np.max(np.abs(tr[-1].coeffs - expected)) < 1e-14


class TestEquilibria:
    @pytest.mark.parametrize("k", [(1, 0), (1, 1), (2, -1)])
    def test_unit_single_mode_is_stationary(self, grid16, k):
        # B(e) = 0 and -A e + |grad e|^2 e = (|k|^2 - |k|^2) e on the sphere
        e = DivFreeField.single_mode(grid16, k, np.exp(0.3j))
        tr = solve_state(e, SolverConfig(grid16, dt=1e-3, horizon=0.2))
        assert norms(tr[-1] - e).h < 1e-12

    def test_shell_superposition_is_stationary(self, grid16):
        # Laplacian eigenfunctions of one shell: B(u) is a gradient and Leray kills it
        u = DivFreeField.single_mode(grid16, (1, 0), 0.6) + DivFreeField.single_mode(grid16, (0, 1), 0.8j)
        u = u * (1 / norms(u).h)
        tr = solve_state(u, SolverConfig(grid16, dt=1e-3, horizon=0.2))
        assert norms(tr[-1] - u).h < 1e-12

    def test_zero_stays_zero(self, grid8):
        tr = solve_state(DivFreeField.zeros(grid8), SolverConfig(grid8, dt=0.01, horizon=0.1))
        assert np.all(tr.coeffs == 0)


class TestRightHandSide:
    def test_tangent_on_sphere(self, grid16, field_factory):
        u = field_factory(grid16, seed=3)
        g = tangent_project(u, field_factory(grid16, seed=4))
        r = rhs_galerkin(u, g)
        assert abs(inner_H(r, u)) < 1e-12 * norms(r).h

    def test_inward_inside_ball(self, grid16, field_factory):
        # d|u|^2/dt = 2 |u|_V^2 (|u|^2 - 1) when unforced
        u = field_factory(grid16, seed=3, normalize=0.5)
        r = rhs_galerkin(u, DivFreeField.zeros(grid16))
        assert 2 * inner_H(r, u) == pytest.approx(2 * norms(u).v ** 2 * (0.25 - 1), rel=1e-12)


class TestIntegrator:
    def test_step_matches_solve(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1)
        cfg = SolverConfig(grid16, dt=1e-2, horizon=3e-2)
        u = u0
        for i in range(3):
            u = step(u, i * cfg.dt, cfg, i)
        assert np.array_equal(u.coeffs, solve_state(u0, cfg)[-1].coeffs)

    def test_fourth_order_in_time(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1)
        g = field_factory(grid16, seed=2)
        forcing = ForcingSpec.tangent_constant(g)
        ref = solve_state(u0, SolverConfig(grid16, dt=1 / 1280, horizon=0.25, forcing=forcing,
                                           store_stride=320))[-1]
        dts = [1 / 20, 1 / 40, 1 / 80]
        errs = [norms(solve_state(u0, SolverConfig(grid16, dt=dt, horizon=0.25,
                                                   forcing=forcing))[-1] - ref).h for dt in dts]
        assert loglog_slope(dts, errs) == pytest.approx(4.0, abs=0.3)

    def test_store_stride(self, grid8, field_factory):
        u0 = field_factory(grid8, seed=1)
        full = solve_state(u0, SolverConfig(grid8, dt=0.01, horizon=0.1))
        thin = solve_state(u0, SolverConfig(grid8, dt=0.01, horizon=0.1, store_stride=5))
        assert np.allclose(thin.times, [0, 0.05, 0.1])
        assert np.array_equal(thin.coeffs, full.coeffs[::5])

    def test_renormalize_pins_the_sphere(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1)
        tr = solve_state(u0, SolverConfig(grid16, dt=0.05, horizon=1.0, renormalize=True))
        assert np.max(np.abs(tr.norm_series("H") - 1)) < 1e-14

    def test_rough_data_with_large_step_diverges(self):
        grid = make_grid(32)
        u0 = random_field(RandomFieldSpec(3, 0.0, 1.0), grid)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError) as err:
            solve_state(u0, SolverConfig(grid, dt=0.1, horizon=2.0))
        assert err.value.step < 20

    def test_nonfinite_control_reports_step(self, grid8):
        times = np.linspace(0, 0.1, 11)
        coeffs = np.zeros((11,) + grid8.shape, dtype=complex)
        coeffs[5:] = np.nan
        U = ControlTrajectory(grid8, times, coeffs)
        cfg = SolverConfig(grid8, dt=0.01, horizon=0.1, forcing=ForcingSpec.from_control(U))
        with np.errstate(all="ignore"), pytest.raises(DivergenceError) as err:
            solve_state(DivFreeField.single_mode(grid8, (1, 0)), cfg)
        assert err.value.step == 4


class TestInvariants:
    def test_sphere_invariant_with_forcing(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1)
        g = field_factory(grid16, seed=2)
        tr = solve_state(u0, SolverConfig(grid16, dt=1e-3, horizon=0.3,
                                          forcing=ForcingSpec.tangent_constant(g)))
        assert np.max(np.abs(tr.norm_series("H") - 1)) < 1e-9

    def test_energy_identity_inside_ball(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1, normalize=0.5)
        tr = solve_state(u0, SolverConfig(grid16, dt=1e-3, horizon=0.3))
        assert np.max(energy_identity_residual(tr)) < 1e-4

    def test_energy_identity_with_other_viscosity(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1, normalize=0.5)
        tr = solve_state(u0, SolverConfig(grid16, dt=1e-3, horizon=0.3, nu=0.5))
        assert np.max(energy_identity_residual(tr)) < 1e-4

    def test_ball_norm_decreases(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=5, normalize=0.9)
        h = solve_state(u0, SolverConfig(grid16, dt=1e-3, horizon=0.3)).norm_series("H")
        assert np.all(np.diff(h) < 0) and h[-1] < 0.9

    def test_outside_ball_rejected(self, grid8, field_factory):
        u0 = field_factory(grid8, seed=1, normalize=1.01)
        with pytest.raises(InputError):
            solve_state(u0, SolverConfig(grid8, dt=0.01, horizon=0.1))


class TestUniquenessProxy:
    def test_deterministic(self, grid16, field_factory):
        u0 = field_factory(grid16, seed=1)
        cfg = SolverConfig(grid16, dt=1e-3, horizon=0.1)
        assert np.array_equal(solve_state(u0, cfg).coeffs, solve_state(u0, cfg).coeffs)

    def test_continuous_dependence(self, grid16, field_factory):
        # halving a small perturbation of the data halves the separation
        u0 = field_factory(grid16, seed=1)
        d = tangent_project(u0, field_factory(grid16, seed=9))
        cfg = SolverConfig(grid16, dt=1e-3, horizon=0.2, renormalize=True)
        base = solve_state(u0, cfg)[-1]
        seps = []
        for eps in (1e-4, 5e-5):
            v = u0 + d * eps
            seps.append(norms(solve_state(v * (1 / norms(v).h), cfg)[-1] - base).h)
        assert seps[0] / seps[1] == pytest.approx(2.0, rel=1e-3)


class TestTruncate:
    def test_keeps_low_modes(self, grid16, field_factory):
        u = field_factory(grid16, seed=1)
        t = truncate(u, 2)
        low = np.maximum(np.abs(grid16.k1), np.abs(grid16.k2)) <= 2
        assert np.array_equal(t.coeffs[low], u.coeffs[low])
        assert np.all(t.coeffs[~low] == 0)

    def test_full_cutoff_is_identity(self, grid16, field_factory):
        u = field_factory(grid16, seed=1)
        assert np.array_equal(truncate(u, grid16.K).coeffs, u.coeffs)

    def test_bad_cutoff(self, grid8, field_factory):
        with pytest.raises(InputError):
            truncate(field_factory(grid8), grid8.K + 1)


class TestSolverConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0.0, horizon=1.0), dict(dt=0.1, horizon=-1.0),
                                    dict(dt=0.3, horizon=1.0), dict(dt=2.0, horizon=1.0),
                                    dict(dt=0.1, horizon=1.0, nu=0.0),
                                    dict(dt=0.1, horizon=1.0, store_stride=3),
                                    dict(dt=0.1, horizon=1.0, store_stride=0)])
    def test_rejects(self, grid8, kw):
        with pytest.raises(ConfigError):
            SolverConfig(grid8, **kw)

    def test_step_count_tolerance(self, grid8):
        cfg = SolverConfig(grid8, dt=0.1, horizon=0.3)
        assert cfg.n_steps == 3 and len(cfg.times) == 4

    def test_control_must_cover_horizon(self, grid8):
        U = ControlTrajectory(grid8, [0.0, 0.05], np.zeros((2,) + grid8.shape, dtype=complex))
        with pytest.raises(ConfigError):
            SolverConfig(grid8, dt=0.01, horizon=0.1, forcing=ForcingSpec.from_control(U))

    def test_unknown_forcing(self):
        with pytest.raises(ConfigError):
            ForcingSpec("wind")

    def test_replace(self, grid8):
        cfg = SolverConfig(grid8, dt=0.1, horizon=1.0)
        assert cfg.replace(dt=0.05).n_steps == 20


class TestExport:
    def test_round_trip(self, tmp_path, grid8, field_factory):
        u0 = field_factory(grid8, seed=1)
        tr = solve_state(u0, SolverConfig(grid8, dt=0.01, horizon=0.05))
        export_trajectory(tr, tmp_path / "run")
        back = load_trajectory(tmp_path / "run")
        assert np.array_equal(back.coeffs, tr.coeffs)
        assert np.array_equal(back.times, tr.times)
        assert back.config.to_dict() == tr.config.to_dict()
        assert (tmp_path / "run" / "series.csv").read_text().startswith("t,norm_H")

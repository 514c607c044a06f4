import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughdrift import besov, solve
from roughdrift.besov import GridFunction
from roughdrift.drift import DriftSpec, mollify
from roughdrift.errors import BoxExitError, ConfigurationError
from roughdrift.fbm import FbmConfig, GridPath, sample_fbm, sample_fbm_batch
from roughdrift.solve import SolveConfig


def _const(lat, c):
    return GridFunction(lat, np.broadcast_to(np.asarray(c, float), lat.shape + (lat.dim,)).copy())


class TestInterpolate:
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3))
    @settings(max_examples=30, deadline=None)
    def test_affine_is_exact(self, a, b):
        lat = besov.SpatialLattice(2, 4.0, 64)
        x = lat.coordinates()
        f = GridFunction(lat, (a * x[..., 0] + b * x[..., 1])[..., None])
        pts = np.array([[0.123, -1.77], [2.5, 3.1], [-3.9, 0.0]])
        vals, inside = solve.interpolate(f, pts)
        assert inside.all()
        np.testing.assert_allclose(vals[:, 0], a * pts[:, 0] + b * pts[:, 1], atol=1e-12)

    def test_outside_is_nan(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        vals, inside = solve.interpolate(_const(lat, 1.0), np.array([[0.0], [5.0]]))
        assert inside.tolist() == [True, False]
        assert np.isnan(vals[1]).all()

    def test_nearest(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        f = GridFunction(lat, lat.axis())
        vals, _ = solve.interpolate(f, np.array([[lat.axis()[10] + 0.3 * lat.spacing]]), "nearest")
        assert vals[0, 0] == lat.axis()[10]


class TestSolveConfig:
    def test_rejects(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        f = _const(lat, 1.0)
        with pytest.raises(ConfigurationError):
            SolveConfig([0.0, 0.0], f)
        with pytest.raises(ConfigurationError):
            SolveConfig([0.0], f, interpolation="cubic")
        with pytest.raises(ConfigurationError):
            SolveConfig([0.0], f, substeps=0)


class TestEuler:
    def test_zero_drift(self, small_fbm):
        lat = besov.SpatialLattice(1, 20.0, 256)
        B, _ = sample_fbm_batch(small_fbm, 0, range(4))
        sol = solve.euler_solve_batch(SolveConfig([0.5], _const(lat, 0.0)), B, small_fbm.times)
        assert np.all(sol.K == 0)
        np.testing.assert_array_equal(sol.X, 0.5 + B)
        assert sol.ok.all()

    @pytest.mark.parametrize("substeps", [1, 3])
    def test_constant_drift(self, small_fbm, substeps):
        lat = besov.SpatialLattice(1, 20.0, 256)
        B, _ = sample_fbm_batch(small_fbm, 0, range(4))
        sol = solve.euler_solve_batch(SolveConfig([0.0], _const(lat, 0.7), substeps=substeps), B, small_fbm.times)
        np.testing.assert_allclose(sol.K[:, :, 0], np.broadcast_to(0.7 * small_fbm.times, (4, 257)), atol=1e-12)

    def test_box_exit(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        t = np.linspace(0, 1, 11)
        B = np.zeros((2, 11, 1))
        B[1, 6:] = 5.0
        sol = solve.euler_solve_batch(SolveConfig([0.0], _const(lat, 0.0)), B, t)
        assert sol.exit_index.tolist() == [-1, 6]
        assert np.isnan(sol.K[1, 7:]).all() and not np.isnan(sol.K[0]).any()
        kept = sol.restrict(sol.ok)
        assert kept.n_paths == 1

    def test_box_exit_at_last_point(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        t = np.linspace(0, 1, 5)
        B = np.zeros((1, 5, 1))
        B[0, -1] = 3.0
        sol = solve.euler_solve_batch(SolveConfig([0.0], _const(lat, 0.0)), B, t)
        assert sol.exit_index[0] == 4 and np.isnan(sol.K[0, -1]).all()

    def test_nonuniform_grid(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        with pytest.raises(ConfigurationError):
            solve.euler_solve_batch(SolveConfig([0.0], _const(lat, 0.0)), np.zeros((1, 3, 1)), [0, 0.1, 0.5])

    def test_single_path_raises_on_exit(self):
        lat = besov.SpatialLattice(1, 1.0, 64)
        t = np.linspace(0, 1, 5)
        B = GridPath(t, np.array([0, 0, 4.0, 0, 0]), "B")
        with pytest.raises(BoxExitError, match="t=0.5"):
            solve.euler_solve(SolveConfig([0.0], _const(lat, 0.0)), B)

    def test_nonnegative_drift_gives_monotone_k(self, dirac_drift):
        cfg = FbmConfig(0.3, 512)
        B, _ = sample_fbm_batch(cfg, 2, range(50))
        sol = solve.euler_solve_batch(SolveConfig([0.0], dirac_drift), B, cfg.times)
        assert np.all(np.diff(sol.K, axis=1) >= 0)

    def test_solution_path(self, dirac_drift, small_fbm):
        B = sample_fbm(small_fbm, (0, 3))
        path = solve.euler_solve(SolveConfig([0.0], dirac_drift), B)
        np.testing.assert_allclose(path.X.values, path.K.values + B.values)
        assert path.B_ref == (0, 3)
        Bb, _ = sample_fbm_batch(small_fbm, 0, [3])
        batch = solve.euler_solve_batch(SolveConfig([0.0], dirac_drift), Bb, small_fbm.times)
        row = solve.solution_from_batch(batch, 0, 0.3, (0, 3))
        np.testing.assert_array_equal(row.K.values, path.K.values)

    def test_random_control_is_superadditive(self, dirac_drift, small_fbm):
        path = solve.euler_solve(SolveConfig([0.0], dirac_drift), sample_fbm(small_fbm, (0, 1)))
        t = small_fbm.times
        lam = lambda a, b: solve.random_control(path.K, t[a], t[b])  # noqa: E731
        assert lam(0, 200) >= lam(0, 90) + lam(90, 200) - 1e-15
        with pytest.raises(ValueError):
            lam(5, 1)


class TestRefinement:
    def test_richardson_shrinks(self):
        lat = besov.SpatialLattice(1, 20.0, 2**12)
        f = mollify(DriftSpec.dirac(1), 0.05, lat)
        cfg = FbmConfig(0.3, 1024)
        B = sample_fbm(cfg, (0, 0))
        fine = solve.richardson_check(SolveConfig([0.0], f), B, factor=2)
        coarse_B = GridPath(B.times[::4], B.values[::4], "B")
        coarse = solve.richardson_check(SolveConfig([0.0], f), coarse_B, factor=2)
        assert fine < coarse

    def test_plan_steps_stops(self):
        lat = besov.SpatialLattice(1, 20.0, 2**12)
        f = mollify(DriftSpec.dirac(1), 0.05, lat)
        n, history = solve.plan_steps(SolveConfig([0.0], f), FbmConfig(0.3, 64), 0, n_paths=8, rtol=5e-2,
                                      max_steps=1024)
        assert n == history[-1][0] and n <= 1024
        assert history[-1][1] < 5e-2 or n == 1024

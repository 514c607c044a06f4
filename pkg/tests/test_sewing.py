import numpy as np
import pytest

from roughdrift import besov, sewing
from roughdrift.besov import GridFunction
from roughdrift.drift import DriftSpec, evaluate_atoms, heat_semigroup, mollify
from roughdrift.errors import ConfigurationError
from roughdrift.fbm import FbmConfig, a_increments, build_volterra, sample_fbm, sample_fbm_batch
from roughdrift.solve import SolveConfig, euler_solve, euler_solve_batch


@pytest.fixture
def batch(dirac_drift):
    cfg = FbmConfig(0.3, 256)
    B, _ = sample_fbm_batch(cfg, 11, range(20))
    return euler_solve_batch(SolveConfig([0.0], dirac_drift), B, cfg.times), build_volterra(cfg)


class TestHeatFlow:
    def test_closed_form_matches_multiplier(self):
        lat = besov.SpatialLattice(1, 10.0, 2048)
        h = mollify(DriftSpec.dirac(1), 0.05, lat)
        flow = sewing.HeatFlow(h)
        assert flow.closed_form
        pts = lat.coordinates()[::97]
        np.testing.assert_allclose(flow.evaluate(0.03, pts), heat_semigroup(h, 0.03).values[::97], atol=1e-10)

    def test_generic_path(self):
        lat = besov.SpatialLattice(1, 10.0, 2048)
        h = mollify(DriftSpec.dirac(1), 0.05, lat)
        plain = GridFunction(lat, h.values)
        flow = sewing.HeatFlow(plain)
        assert not flow.closed_form
        x = np.array([[0.1], [-0.4]])
        np.testing.assert_allclose(flow.evaluate(0.03, x), evaluate_atoms(np.zeros((1, 1)), np.ones((1, 1)), 0.08, x),
                                   rtol=1e-4)

    def test_c1_upper_is_monotone_bound(self):
        lat = besov.SpatialLattice(1, 10.0, 2048)
        flow = sewing.HeatFlow(mollify(DriftSpec.dirac(1), 0.05, lat))
        t = np.array([0.0, 1e-4, 1e-2, 1.0])
        up = flow.c1_upper(t)
        assert np.all(np.diff(up) <= 0)
        for ti, u in zip(t, up):
            exact = besov.c1_norm(flow._smoothed(ti) if ti > 0 else flow.h)
            assert u >= exact * (1 - 1e-12)


class TestGerm:
    def test_constant_h_germ_is_additive(self, batch):
        sol, _ = batch
        lat = besov.SpatialLattice(1, 20.0, 256)
        h = GridFunction(lat, np.full((256, 1), 1.5))
        np.testing.assert_allclose(sewing.germ_batch(h, sol, 10, 74), 1.5 * 64 * sol.dt, rtol=1e-13)
        np.testing.assert_allclose(sewing.defect_batch(h, sol, 10, 40, 74), 0.0, atol=1e-14)

    def test_germ_eval_matches_batch(self, batch, dirac_drift):
        sol, _ = batch
        from roughdrift.solve import solution_from_batch

        path = solution_from_batch(sol, 3)
        t = sol.times
        np.testing.assert_allclose(sewing.germ_eval(dirac_drift, path, t[5], t[100]),
                                   sewing.germ_batch(dirac_drift, sol, 5, 100)[3], rtol=1e-13)

    def test_empty_interval(self, batch, dirac_drift):
        sol, _ = batch
        assert np.all(sewing.germ_batch(dirac_drift, sol, 7, 7) == 0)
        with pytest.raises(ValueError):
            sewing.germ_batch(dirac_drift, sol, 8, 7)

    def test_integrated_drift_equals_k(self, batch, dirac_drift):
        # Euler is left-point; the trapezoid differs by O(dt) per step but K is its own integral
        sol, _ = batch
        I = sewing.integrated_drift(dirac_drift, sol)
        assert I.shape == sol.K.shape
        assert np.all(np.diff(I, axis=1) >= 0)


class TestConditionalDefect:
    def test_zero_drift_has_no_defect(self):
        lat = besov.SpatialLattice(1, 20.0, 1024)
        cfg = FbmConfig(0.3, 64)
        B, _ = sample_fbm_batch(cfg, 0, range(5))
        h = mollify(DriftSpec.dirac(1), 0.05, lat)
        sol = euler_solve_batch(SolveConfig([0.0], GridFunction(lat, np.zeros((1024, 1)))), B, cfg.times)
        K = build_volterra(cfg)
        d, bound = sewing.conditional_defect_batch(sewing.HeatFlow(h), sol, a_increments(sol.B, K), K, 4, 20, 40)
        assert np.all(d == 0) and np.all(bound == 0)

    def test_bound_holds(self, batch, dirac_drift):
        sol, K = batch
        dw = a_increments(sol.B, K)
        flow = sewing.HeatFlow(dirac_drift)
        d, bound = sewing.conditional_defect_batch(flow, sol, dw, K, 0, 64, 128)
        assert np.all(np.abs(d).sum(axis=1) <= bound * (1 + 1e-9) + 1e-15)

    def test_single_path_matches_batch(self, batch, dirac_drift):
        sol, K = batch
        from roughdrift.solve import solution_from_batch

        path = solution_from_batch(sol, 2)
        t = sol.times
        one = sewing.conditional_defect(dirac_drift, path, t[32], t[96], t[160], K)
        d, _ = sewing.conditional_defect_batch(sewing.HeatFlow(dirac_drift), sol, a_increments(sol.B, K), K, 32, 96, 160)
        np.testing.assert_allclose(one, d[2], rtol=1e-12, atol=1e-15)

    def test_brownian_conditional_expectation(self):
        # at H = 1/2 the conditional law of B_r given F_u is N(B_u, r - u)
        lat = besov.SpatialLattice(1, 20.0, 4096)
        h = mollify(DriftSpec.dirac(1), 0.05, lat)
        cfg = FbmConfig(0.5, 32)
        B, _ = sample_fbm_batch(cfg, 1, [0])
        sol = euler_solve_batch(SolveConfig([0.0], h), B, cfg.times)
        K = build_volterra(cfg)
        s, u, t = 0, 8, 16
        d, _ = sewing.conditional_defect_batch(sewing.HeatFlow(h), sol, a_increments(sol.B, K), K, s, u, t)
        r = np.arange(u, t + 1)
        var = (r - u) * cfg.dt
        Bu = sol.B[0, u, 0]
        g = lambda c: np.array([evaluate_atoms(np.zeros((1, 1)), np.ones((1, 1)), 0.05 + v, np.array([[Bu + c]]))[0, 0]
                                for v in var])  # noqa: E731
        vals = g(sol.K[0, s, 0]) - g(sol.K[0, u, 0])
        expect = cfg.dt * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
        assert d[0, 0] == pytest.approx(expect, rel=1e-10, abs=1e-15)

    def test_order(self, batch, dirac_drift):
        sol, K = batch
        with pytest.raises(ValueError):
            sewing.conditional_defect_batch(sewing.HeatFlow(dirac_drift), sol, a_increments(sol.B, K), K, 5, 3, 9)


class TestDyadicPairs:
    def test_pairs(self):
        assert sewing.dyadic_pairs(16, 2) == [(0, 4), (4, 8), (8, 12), (12, 16)]

    def test_subsample(self):
        p = sewing.dyadic_pairs(1024, 6, max_pairs=8)
        assert len(p) == 8 and p[0] == (0, 16) and p[-1] == (1008, 1024)

    def test_bad_level(self):
        with pytest.raises(ConfigurationError):
            sewing.dyadic_pairs(16, 4)


class TestFit:
    def test_report_shape(self, dirac_drift):
        cfg = FbmConfig(0.3, 512)
        B, _ = sample_fbm_batch(cfg, 4, range(40))
        sol = euler_solve_batch(SolveConfig([0.0], dirac_drift), B, cfg.times)
        rep = sewing.fit_sewing_conditions(dirac_drift, sol, build_volterra(cfg), levels=range(1, 6), hurst=0.3,
                                           beta=-1.0)
        d = rep.to_dict()
        assert d["anchor"] and len(d["level_table"]) == 5
        assert rep.bound_violations == 0 and rep.bound_checks > 0
        assert "alpha1" in rep.summary()

    def test_zero_drift_is_trivially_sewn(self):
        lat = besov.SpatialLattice(1, 20.0, 1024)
        h = GridFunction(lat, np.zeros((1024, 1)))
        cfg = FbmConfig(0.3, 128)
        B, _ = sample_fbm_batch(cfg, 0, range(10))
        sol = euler_solve_batch(SolveConfig([0.0], h), B, cfg.times)
        rep = sewing.fit_sewing_conditions(h, sol, build_volterra(cfg), levels=range(1, 5))
        assert rep.passes and rep.gamma1 == 0.0 and rep.gamma2 == 0.0


class TestRiemann:
    def test_finest_partition(self, dirac_drift, small_fbm):
        path = euler_solve(SolveConfig([0.0], dirac_drift), sample_fbm(small_fbm, (0, 0)))
        res = sewing.riemann_convergence(dirac_drift, path, 1.0, range(2, 9))
        assert res["all_hold"] and len(res["rows"]) == 7

    def test_partition_validation(self, dirac_drift, small_fbm):
        path = euler_solve(SolveConfig([0.0], dirac_drift), sample_fbm(small_fbm, (0, 0)))
        t = small_fbm.times
        with pytest.raises(ValueError):
            sewing.riemann_sum(dirac_drift, path, 1.0, [t[3], t[-1]])

    def test_averaging_operator_at_zero_shift(self, dirac_drift, small_fbm):
        B = sample_fbm(small_fbm, (0, 0))
        t = small_fbm.times
        full = sewing.averaging_operator(dirac_drift, B, 1.0, [0.0])
        parts = sewing.averaging_increment(dirac_drift, B, 0, 100, [0.0]) + sewing.averaging_increment(
            dirac_drift, B, 100, 256, [0.0])
        np.testing.assert_allclose(full, parts, rtol=1e-13)
        assert np.all(sewing.averaging_operator(dirac_drift, B, t[0], [0.0]) == 0)

    def test_young_sum_with_frozen_path(self, dirac_drift, small_fbm):
        # with a constant X the sum telescopes to the averaging operator
        B = sample_fbm(small_fbm, (0, 0))
        from roughdrift.fbm import GridPath

        X = GridPath(B.times, np.zeros_like(B.values), "X")
        part = B.times[::32]
        np.testing.assert_allclose(sewing.nonlinear_young_sum(dirac_drift, X, B, part),
                                   sewing.averaging_operator(dirac_drift, B, 1.0, [0.0]), rtol=1e-12)

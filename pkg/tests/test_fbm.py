import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughdrift import fbm
from roughdrift.errors import ConfigurationError
from roughdrift.fbm import FbmConfig, GridPath


# ---------------------------------------------------------------------------
# covariances


class TestCovariance:
    def test_fgn_is_white_at_half(self):
        lags = np.arange(6)
        cov = fbm.fgn_covariance(0.5, lags, dt=0.1)
        np.testing.assert_allclose(cov, [0.1, 0, 0, 0, 0, 0], atol=1e-15)

    @pytest.mark.parametrize("H", [0.1, 0.3, 0.45])
    def test_fgn_negatively_correlated_below_half(self, H):
        assert np.all(fbm.fgn_covariance(H, np.arange(1, 20)) < 0)

    def test_fbm_variance(self):
        t = np.array([0.25, 0.5, 1.0])
        np.testing.assert_allclose(fbm.fbm_covariance(0.3, t, t), t**0.6)

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.2])
    def test_fgn_rejects_hurst(self, bad):
        with pytest.raises(ValueError):
            fbm.fgn_covariance(bad, 1)


class TestConfig:
    def test_grid(self):
        cfg = FbmConfig(0.3, 8, horizon=2.0)
        assert cfg.dt == 0.25
        np.testing.assert_allclose(cfg.times, np.arange(9) * 0.25)

    @pytest.mark.parametrize("kwargs", [
        dict(hurst=0.6, n_steps=8),
        dict(hurst=0.0, n_steps=8),
        dict(hurst=0.3, n_steps=1),
        dict(hurst=0.3, n_steps=8, horizon=0.0),
        dict(hurst=0.3, n_steps=8, dim=0),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            FbmConfig(**kwargs)

    def test_coarsened(self):
        assert FbmConfig(0.3, 16).coarsened(4).n_steps == 4
        with pytest.raises(ConfigurationError):
            FbmConfig(0.3, 10).coarsened(4)


class TestGridPath:
    def test_index_of(self):
        p = GridPath(np.linspace(0, 1, 5), np.zeros(5), "B")
        assert p.index_of(0.75) == 3
        with pytest.raises(ValueError):
            p.index_of(0.3)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            GridPath(np.linspace(0, 1, 3), np.zeros(3), "Z")

    def test_rejects_nonincreasing_times(self):
        with pytest.raises(ValueError):
            GridPath(np.array([0.0, 0.5, 0.5]), np.zeros(3), "B")


# ---------------------------------------------------------------------------
# sampling


class TestSampling:
    def test_lineage_independent_of_batching(self, small_fbm):
        whole, _ = fbm.sample_fbm_batch(small_fbm, 7, range(10))
        part, _ = fbm.sample_fbm_batch(small_fbm, 7, [3, 8])
        np.testing.assert_array_equal(whole[[3, 8]], part)

    def test_single_path_matches_batch(self, small_fbm):
        batch, _ = fbm.sample_fbm_batch(small_fbm, 7, [4])
        path = fbm.sample_fbm(small_fbm, (7, 4))
        np.testing.assert_array_equal(path.values, batch[0])
        assert path.seed_lineage == (7, 4) and path.kind == "B"

    def test_seeds_differ(self, small_fbm):
        a, _ = fbm.sample_fbm_batch(small_fbm, 1, [0])
        b, _ = fbm.sample_fbm_batch(small_fbm, 2, [0])
        assert not np.allclose(a, b)

    def test_starts_at_zero(self, small_fbm):
        B, _ = fbm.sample_fbm_batch(small_fbm, 0, range(5))
        assert np.all(B[:, 0] == 0)

    def test_coordinates_independent_streams(self):
        cfg = FbmConfig(0.3, 64, dim=2)
        B, _ = fbm.sample_fbm_batch(cfg, 0, [0])
        assert not np.allclose(B[0, :, 0], B[0, :, 1])

    @pytest.mark.parametrize("method", ["circulant", "cholesky"])
    def test_terminal_variance(self, method):
        # Var B_1 = 1 for every H; 4000 paths give a relative se of about 2.2%
        cfg = FbmConfig(0.3, 128)
        B, used = fbm.sample_fbm_batch(cfg, 3, range(4000), method=method)
        assert used == method
        var = B[:, -1, 0].var()
        assert abs(var - 1.0) < 4 * np.sqrt(2 / 4000)

    def test_unknown_method(self, small_fbm):
        with pytest.raises(ValueError):
            fbm.sample_fbm_batch(small_fbm, 0, [0], method="spectral")

    def test_circulant_ok_for_h_below_half(self):
        assert fbm.circulant_embedding_ok(0.3, 1024)

    def test_bm_increments_match_volterra_basis(self):
        # at H = 1/2 the Cholesky sampler sums exactly these increments
        cfg = FbmConfig(0.5, 32)
        dw = fbm.sample_bm_increments(cfg, 5, [0, 1])
        B, _ = fbm.sample_fbm_batch(cfg, 5, [0, 1], method="cholesky")
        np.testing.assert_allclose(B[:, 1:], np.cumsum(dw, axis=1), atol=1e-14)


# ---------------------------------------------------------------------------
# Volterra kernel and conditional laws


class TestVolterra:
    @given(H=st.floats(0.05, 0.5), n=st.integers(4, 48))
    @settings(max_examples=25, deadline=None)
    def test_kernel_reproduces_covariance(self, H, n):
        cfg = FbmConfig(H, n)
        K = fbm.build_volterra(cfg)
        t = cfg.times[1:]
        exact = fbm.fbm_covariance(H, t[:, None], t[None, :])
        np.testing.assert_allclose(K.covariance(), exact, atol=1e-10)

    def test_brownian_kernel_is_cumsum(self):
        K = fbm.build_volterra(FbmConfig(0.5, 6))
        np.testing.assert_array_equal(K.entries, np.tril(np.ones((6, 6))))
        assert K.is_brownian

    def test_roundtrip(self, small_fbm):
        K = fbm.build_volterra(small_fbm)
        dw = fbm.sample_bm_increments(small_fbm, 0, range(3))
        W = np.zeros((3, small_fbm.n_steps + 1, 1))
        W[:, 1:] = np.cumsum(dw, axis=1)
        B = fbm.abar_values(W, K)
        np.testing.assert_allclose(fbm.a_values(B, K), W, atol=1e-10)

    def test_path_operators_check_kind(self, small_fbm):
        K = fbm.build_volterra(small_fbm)
        B = fbm.sample_fbm(small_fbm, (0, 0))
        with pytest.raises(ValueError):
            fbm.apply_Abar(B, K)
        W = fbm.apply_A(B, K)
        assert W.kind == "W"
        np.testing.assert_allclose(fbm.apply_Abar(W, K).values, B.values, atol=1e-10)

    def test_grid_mismatch(self, small_fbm):
        K = fbm.build_volterra(small_fbm)
        with pytest.raises(ValueError):
            fbm.a_values(np.zeros((1, 10, 1)), K)

    def test_conditional_law_brownian(self):
        cfg = FbmConfig(0.5, 16)
        K = fbm.build_volterra(cfg)
        B = fbm.sample_fbm(cfg, (0, 0))
        mean, var = fbm.conditional_law(B, cfg.times[5], cfg.times[12], K)
        np.testing.assert_allclose(mean, B.values[5], atol=1e-13)
        assert var == pytest.approx(7 * cfg.dt, rel=1e-12)

    @pytest.mark.parametrize("H", [0.2, 0.4])
    def test_conditional_law_matches_gaussian_conditioning(self, H):
        # Schur complement of the exact covariance is an independent oracle
        cfg = FbmConfig(H, 24)
        K = fbm.build_volterra(cfg)
        B = fbm.sample_fbm(cfg, (1, 2))
        u, r = 9, 17
        t = cfg.times[1:]
        C = fbm.fbm_covariance(H, t[:, None], t[None, :])
        past = np.arange(u)
        S = C[np.ix_(past, past)]
        c = C[r - 1, past]
        mean_exact = c @ np.linalg.solve(S, B.values[1 : u + 1, 0])
        var_exact = C[r - 1, r - 1] - c @ np.linalg.solve(S, c)
        mean, var = fbm.conditional_law(B, cfg.times[u], cfg.times[r], K)
        assert mean[0] == pytest.approx(mean_exact, abs=1e-9)
        assert var == pytest.approx(var_exact, rel=1e-8)

    def test_conditional_variance_needs_order(self, small_fbm):
        K = fbm.build_volterra(small_fbm)
        with pytest.raises(ValueError):
            fbm.conditional_variance(K, 5, 5)

    def test_variance_table_matches_pointwise(self, small_fbm):
        K = fbm.build_volterra(FbmConfig(0.3, 20))
        table = K.conditional_variance_table()
        for u, r in [(0, 1), (3, 10), (19, 20)]:
            assert table[r - 1, u] == pytest.approx(fbm.conditional_variance(K, u, r), rel=1e-12)

    def test_lnd_profile_slope(self):
        K = fbm.build_volterra(FbmConfig(0.5, 256))
        _, slope = fbm.lnd_profile(K, 10, [1, 2, 4, 8, 16, 32])
        assert slope == pytest.approx(1.0, abs=1e-10)

    def test_lnd_constant_brownian(self):
        K = fbm.build_volterra(FbmConfig(0.5, 32))
        assert fbm.lnd_constant(K) == pytest.approx(1.0, rel=1e-12)

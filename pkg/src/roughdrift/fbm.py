"""Exact sampling of fractional Brownian motion on uniform grids.

Two samplers are provided. Circulant embedding of the fractional Gaussian
noise covariance is the default (O(n log n) per path); the lower-triangular
Volterra kernel, a Cholesky factor of the same covariance written in the
Brownian-increment basis, is the fallback and also realises the discrete
operator pair mapping Brownian motion to fBm and back.

Every coordinate of every path draws from its own random stream, seeded by
``SeedSequence([master_seed, path_index, coordinate])``, so paths are
reproducible individually and independently of how a batch is split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import ConfigurationError

PATH_KINDS = ("W", "B", "X", "K")


def fgn_covariance(hurst, lag, dt=1.0):
    """Covariance of two fBm increments of length `dt` that are `lag` steps apart.

    Vectorised over `lag`; symmetric in the sign of `lag`.
    """
    if not 0.0 < hurst <= 1.0:
        raise ValueError(f"hurst must lie in (0, 1], got {hurst}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    k = np.abs(np.asarray(lag, dtype=float))
    h2 = 2.0 * hurst
    cov = 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)
    cov = cov * dt**h2
    return float(cov) if np.ndim(cov) == 0 else cov


def fbm_covariance(hurst, s, t):
    """Covariance ``E[B_s B_t]`` of scalar fBm, vectorised."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


@dataclass(frozen=True)
class FbmConfig:
    """Uniform-grid fBm: Hurst index, horizon, number of steps and dimension."""

    hurst: float
    n_steps: int
    horizon: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not 0.0 < self.hurst <= 0.5:
            raise ConfigurationError(f"hurst must lie in (0, 1/2], got {self.hurst}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ConfigurationError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        if not self.horizon > 0.0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim}")

    @property
    def dt(self):
        return self.horizon / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def coarsened(self, factor=2):
        if self.n_steps % factor:
            raise ConfigurationError(f"n_steps={self.n_steps} is not divisible by {factor}")
        return FbmConfig(self.hurst, self.n_steps // factor, self.horizon, self.dim)


@dataclass
class GridPath:
    """A single sampled path: ``values[i]`` is the d-vector at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    seed_lineage: tuple = (None, None)
    hurst: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def index_of(self, t):
        """Grid index of time `t`; raises if `t` is not (numerically) a grid time."""
        i = int(round(float(t) / self.dt))
        if i < 0 or i >= len(self.times) or not np.isclose(self.times[i], t, rtol=0, atol=1e-9 * self.dt + 1e-15):
            raise ValueError(f"t={t} is not a grid time")
        return i

    def increments(self):
        return np.diff(self.values, axis=0)


def _check_uniform(times):
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ConfigurationError("only uniform time grids are supported")


def path_rng(master_seed, path_index, coordinate):
    """Random stream owned by one coordinate of one path."""
    ss = np.random.SeedSequence([int(master_seed), int(path_index), int(coordinate)])
    return np.random.Generator(np.random.PCG64(ss))


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(hurst, n_steps):
    """Square roots of the circulant eigenvalues for unit-step fGn, or None."""
    k = np.arange(n_steps + 1)
    c = fgn_covariance(hurst, k, 1.0)
    row = np.concatenate([c, c[-2:0:-1]])
    eigs = np.fft.fft(row).real
    if eigs.min() < -1e-10 * eigs.max():
        return None
    out = np.sqrt(np.clip(eigs, 0.0, None) / len(row))
    out.setflags(write=False)
    return out


def circulant_embedding_ok(hurst, n_steps):
    """Whether circulant embedding of the fGn covariance is nonnegative definite."""
    return _circulant_sqrt_eigs(float(hurst), int(n_steps)) is not None


def _fgn_batch_circulant(config, master_seed, path_indices):
    n = config.n_steps
    lam = _circulant_sqrt_eigs(float(config.hurst), int(n))
    m = len(lam)
    out = np.empty((len(path_indices), n, config.dim))
    for c in range(config.dim):
        z = np.empty((len(path_indices), m), dtype=complex)
        for row, p in enumerate(path_indices):
            g = path_rng(master_seed, p, c).standard_normal(2 * m)
            z[row].real = g[:m]
            z[row].imag = g[m:]
        y = np.fft.fft(z * lam, axis=1)
        out[:, :, c] = y[:, :n].real
    return out * config.dt**config.hurst


def _fgn_batch_cholesky(config, master_seed, path_indices):
    kern = build_volterra(config)
    n = config.n_steps
    out = np.empty((len(path_indices), n, config.dim))
    for c in range(config.dim):
        dw = np.empty((len(path_indices), n))
        for row, p in enumerate(path_indices):
            dw[row] = path_rng(master_seed, p, c).standard_normal(n)
        dw *= np.sqrt(config.dt)
        b = dw @ kern.entries.T
        out[:, :, c] = np.diff(b, axis=1, prepend=0.0)
    return out


def sample_fbm_batch(config, master_seed, path_indices, method="auto"):
    """Sample a batch of fBm paths.

    Parameters
    ----------
    config : FbmConfig
    master_seed : int
    path_indices : sequence of int
        Lineage indices; path ``p`` is identical whichever batch it is drawn in.
    method : {"auto", "circulant", "cholesky"}
        ``auto`` uses circulant embedding and falls back to the Volterra
        (Cholesky) kernel when the embedding has negative eigenvalues.

    Returns
    -------
    values : ndarray, shape (len(path_indices), n_steps + 1, dim)
    sampler : str
        The sampler actually used.
    """
    path_indices = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")
    sampler = method
    if method in ("auto", "circulant"):
        if circulant_embedding_ok(config.hurst, config.n_steps):
            sampler = "circulant"
        elif method == "circulant":
            raise ConfigurationError("circulant embedding is not nonnegative definite")
        else:
            sampler = "cholesky"
    if sampler == "circulant":
        fgn = _fgn_batch_circulant(config, master_seed, path_indices)
    else:
        fgn = _fgn_batch_cholesky(config, master_seed, path_indices)
    values = np.zeros((len(path_indices), config.n_steps + 1, config.dim))
    np.cumsum(fgn, axis=1, out=values[:, 1:, :])
    return values, sampler


def sample_fbm(config, seed_lineage, method="auto"):
    """Sample one fBm path with lineage ``(master_seed, path_index)``."""
    master_seed, path_index = seed_lineage
    values, sampler = sample_fbm_batch(config, master_seed, [path_index], method)
    return GridPath(
        config.times,
        values[0],
        "B",
        (int(master_seed), int(path_index)),
        config.hurst,
        {"sampler": sampler, "fallback": sampler == "cholesky" and method == "auto"},
    )


def sample_bm_increments(config, master_seed, path_indices):
    """Brownian increments (variance dt) from the same per-path streams."""
    path_indices = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    out = np.empty((len(path_indices), config.n_steps, config.dim))
    for c in range(config.dim):
        for row, p in enumerate(path_indices):
            out[row, :, c] = path_rng(master_seed, p, c).standard_normal(config.n_steps)
    return out * np.sqrt(config.dt)


@dataclass(frozen=True, eq=False)
class VolterraKernelMatrix:
    """Lower-triangular map from Brownian increments to fBm grid values.

    ``B(t_{i+1}) = sum_{j <= i} entries[i, j] * dW_j`` where ``dW_j`` is the
    Brownian increment over ``[t_j, t_{j+1}]`` (variance ``dt``).
    """

    entries: np.ndarray
    hurst: float
    dt: float

    @property
    def n_steps(self):
        return self.entries.shape[0]

    @property
    def is_brownian(self):
        return self.hurst == 0.5

    def covariance(self):
        """Covariance of ``B(t_1..t_n)`` implied by the kernel."""
        return self.dt * self.entries @ self.entries.T

    def conditional_variance_table(self):
        """``table[r - 1, u] = sigma^2_{u, r}`` for grid indices ``u < r``.

        Entry ``[i, u]`` is the variance of ``B(t_{i+1})`` given the increments
        up to ``t_u``: the tail sum of squared kernel weights from column ``u``.
        """
        sq = self.entries**2
        tail = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1] * self.dt
        return np.tril(tail)


@lru_cache(maxsize=16)
def _volterra_cached(hurst, n_steps, horizon):
    dt = horizon / n_steps
    if hurst == 0.5:
        entries = np.tril(np.ones((n_steps, n_steps)))
    else:
        col = fgn_covariance(hurst, np.arange(n_steps), dt)
        try:
            chol = linalg.cholesky(linalg.toeplitz(col), lower=True)
        except linalg.LinAlgError as exc:
            raise RuntimeError(f"fBm covariance is not positive definite (H={hurst}, n={n_steps})") from exc
        # cumulative sum over rows turns an fGn factor into an fBm factor
        entries = np.cumsum(chol, axis=0) / np.sqrt(dt)
    entries.setflags(write=False)
    return VolterraKernelMatrix(entries, float(hurst), dt)


def build_volterra(config):
    """Volterra kernel of `config`; at H = 1/2 this is exactly the cumulative-sum matrix."""
    return _volterra_cached(float(config.hurst), int(config.n_steps), float(config.horizon))


def _check_grid(path_or_values, kernel):
    n = np.shape(path_or_values)[-2] - 1
    if n != kernel.n_steps:
        raise ValueError(f"path has {n} steps but the kernel was built for {kernel.n_steps}")


def abar_values(w_values, kernel):
    """Map Brownian grid values (..., n+1, d) to fBm grid values."""
    _check_grid(w_values, kernel)
    if kernel.is_brownian:
        return np.array(w_values, dtype=float, copy=True)
    dw = np.diff(w_values, axis=-2)
    out = np.zeros_like(w_values, dtype=float)
    out[..., 1:, :] = np.einsum("ij,...jc->...ic", kernel.entries, dw)
    return out


def a_increments(b_values, kernel):
    """Recover the Brownian increments (..., n, d) from fBm grid values."""
    _check_grid(b_values, kernel)
    b = np.asarray(b_values, dtype=float)
    if kernel.is_brownian:
        return np.diff(b, axis=-2)
    rhs = b[..., 1:, :]
    lead = rhs.shape[:-2]
    n, d = rhs.shape[-2:]
    flat = np.moveaxis(rhs.reshape((-1, n, d)), 1, 0).reshape(n, -1)
    sol = linalg.solve_triangular(kernel.entries, flat, lower=True, check_finite=False)
    return np.moveaxis(sol.reshape(n, -1, d), 0, 1).reshape(lead + (n, d))


def a_values(b_values, kernel):
    """Map fBm grid values to Brownian grid values."""
    if kernel.is_brownian:
        _check_grid(b_values, kernel)
        return np.array(b_values, dtype=float, copy=True)
    dw = a_increments(b_values, kernel)
    out = np.zeros(np.shape(b_values))
    np.cumsum(dw, axis=-2, out=out[..., 1:, :])
    return out


def apply_Abar(W, kernel):
    """Brownian path to fBm path on the same grid."""
    if W.kind != "W":
        raise ValueError(f"expected a path of kind W, got {W.kind}")
    _check_uniform(W.times)
    return GridPath(W.times, abar_values(W.values, kernel), "B", W.seed_lineage, kernel.hurst)


def apply_A(B, kernel):
    """fBm path to the Brownian path generating the same filtration."""
    if B.kind != "B":
        raise ValueError(f"expected a path of kind B, got {B.kind}")
    _check_grid(B.values, kernel)
    _check_uniform(B.times)
    return GridPath(B.times, a_values(B.values, kernel), "W", B.seed_lineage, 0.5)


def conditional_means(dw, kernel, u_index, r_indices):
    """``E[B(t_r) | F_{t_u}]`` for a batch of Brownian increments.

    Parameters
    ----------
    dw : ndarray, shape (P, n, d)
        Brownian increments, e.g. from :func:`a_increments`.
    u_index : int
    r_indices : sequence of int, each >= u_index

    Returns
    -------
    ndarray, shape (P, len(r_indices), d)
    """
    r = np.asarray(r_indices, dtype=int)
    if np.any(r < u_index):
        raise ValueError("conditioning time must not exceed target time")
    out = np.zeros((dw.shape[0], len(r), dw.shape[2]))
    pos = r > 0
    if u_index == 0 or not pos.any():
        return out
    weights = kernel.entries[r[pos] - 1, :u_index]
    out[:, pos, :] = np.einsum("rj,pjc->prc", weights, dw[:, :u_index, :])
    return out


def conditional_variance(kernel, u_index, r_index):
    """Per-coordinate variance ``sigma^2_{u,r}`` of ``B_r`` given ``F_u``."""
    if u_index >= r_index:
        raise ValueError(f"need u < r, got u={u_index}, r={r_index}")
    row = kernel.entries[r_index - 1, u_index:r_index]
    return float(kernel.dt * np.dot(row, row))


def conditional_law(B, u, r, kernel):
    """Conditional mean (d-vector) and variance of ``B_r`` given the path up to ``u``.

    `u` and `r` are grid times with ``u < r``.
    """
    iu, ir = B.index_of(u), B.index_of(r)
    if iu >= ir:
        raise ValueError(f"need u < r, got u={u}, r={r}")
    dw = a_increments(B.values[None], kernel)
    mean = conditional_means(dw, kernel, iu, [ir])[0, 0]
    return mean, conditional_variance(kernel, iu, ir)


def lnd_profile(kernel, u_index, lags):
    """Conditional variances ``sigma^2_{u, u+lag}`` and their log-log slope in the lag.

    Returns
    -------
    sigma2 : ndarray
    slope : float
        Least-squares slope of ``log sigma^2`` against ``log(lag * dt)``.
    """
    lags = np.asarray(lags, dtype=int)
    sigma2 = np.array([conditional_variance(kernel, u_index, u_index + k) for k in lags])
    slope = np.polyfit(np.log(lags * kernel.dt), np.log(sigma2), 1)[0]
    return sigma2, float(slope)


def lnd_constant(kernel):
    """Smallest ratio ``sigma^2_{u,r} / (r - u)^{2H}`` over all grid pairs ``u < r``."""
    table = kernel.conditional_variance_table()
    n = kernel.n_steps
    r, u = np.nonzero(np.arange(n)[None, :] < np.arange(1, n + 1)[:, None])
    lag = (r + 1 - u) * kernel.dt
    ratio = table[r, u] / lag ** (2 * kernel.hurst)
    return float(ratio.min())

"""Explicit Euler scheme for ``X = x0 + int b(X) ds + B`` with a lattice drift."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoxExitError, ConfigurationError
from .fbm import GridPath

INTERPOLATIONS = ("multilinear", "nearest")


@dataclass
class SolveConfig:
    """Initial condition, lattice drift and drift-evaluation options."""

    x0: np.ndarray
    drift: object
    interpolation: str = "multilinear"
    substeps: int = 1

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigurationError(f"interpolation must be one of {INTERPOLATIONS}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigurationError("substeps must be a positive integer")
        if len(self.x0) != self.drift.lattice.dim:
            raise ConfigurationError("x0 dimension does not match the drift lattice")
        if self.drift.components != self.drift.lattice.dim:
            raise ConfigurationError("drift must map R^d to R^d")


def interpolate(f, points, method="multilinear"):
    """Evaluate a grid function at off-lattice `points` of shape ``(P, d)``.

    Returns
    -------
    values : ndarray, shape (P, m)
        NaN rows for points outside the box.
    inside : ndarray of bool, shape (P,)
    """
    lat = f.lattice
    pts = np.asarray(points, dtype=float)
    inside = lat.contains(pts)
    pos = (pts - (-lat.half_width)) / lat.spacing
    out = np.full((pts.shape[0], f.components), np.nan)
    if not inside.any():
        return out, inside
    pos = pos[inside]
    vals = f.values
    if method == "nearest":
        idx = np.clip(np.rint(pos).astype(np.int64), 0, lat.points - 1)
        out[inside] = vals[tuple(idx.T)]
        return out, inside
    base = np.minimum(np.floor(pos).astype(np.int64), lat.points - 2)
    frac = pos - base
    acc = np.zeros((pos.shape[0], f.components))
    d = lat.dim
    for corner in range(2**d):
        bits = [(corner >> k) & 1 for k in range(d)]
        w = np.ones(pos.shape[0])
        idx = []
        for k, bit in enumerate(bits):
            w = w * (frac[:, k] if bit else 1.0 - frac[:, k])
            idx.append(base[:, k] + bit)
        acc += w[:, None] * vals[tuple(idx)]
    out[inside] = acc
    return out, inside


@dataclass
class SolutionBatch:
    """Euler solutions for a batch of driving paths on a common grid.

    ``K`` is NaN from the exit index on for paths that left the box;
    ``exit_index`` is -1 for paths that stayed inside.
    """

    times: np.ndarray
    x0: np.ndarray
    B: np.ndarray
    K: np.ndarray
    exit_index: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def X(self):
        return self.x0 + self.K + self.B

    @property
    def n_paths(self):
        return self.B.shape[0]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def ok(self):
        return self.exit_index < 0

    def restrict(self, mask):
        return SolutionBatch(self.times, self.x0, self.B[mask], self.K[mask], self.exit_index[mask], dict(self.meta))


def euler_solve_batch(config, B, times):
    """Solve a batch of paths driven by fBm values `B` of shape ``(P, n+1, d)``.

    Uses ``K_{i+1} = K_i + b(x0 + K_i + B_i) dt`` (with `substeps` equal
    sub-steps and the noise linearly interpolated inside a step). `X` is
    never stored separately: ``X = x0 + K + B`` holds by construction.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 2:
        B = B[:, :, None]
    P, n1, d = B.shape
    times = np.asarray(times, dtype=float)
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ConfigurationError("only uniform time grids are supported")
    dt = float(steps[0])
    s = config.substeps
    h = dt / s
    f, method = config.drift, config.interpolation
    x0 = config.x0
    K = np.full((P, n1, d), np.nan)
    K[:, 0] = 0.0
    exit_index = np.full(P, -1, dtype=np.int64)
    alive = np.ones(P, dtype=bool)
    k = np.zeros((P, d))
    for i in range(n1 - 1):
        dB = (B[:, i + 1] - B[:, i]) / s
        for sub in range(s):
            x = x0 + k + B[:, i] + sub * dB
            vals, inside = interpolate(f, x[alive], method)
            idx = np.flatnonzero(alive)
            left = idx[~inside]
            if left.size:
                exit_index[left] = i
                alive[left] = False
            k[idx[inside]] += vals[inside] * h
        K[alive, i + 1] = k[alive]
    # the last grid value is unchecked by the loop above
    if alive.any():
        _, inside = interpolate(f, (x0 + k + B[:, -1])[alive], method)
        idx = np.flatnonzero(alive)
        exit_index[idx[~inside]] = n1 - 1
        K[idx[~inside], n1 - 1] = np.nan
    return SolutionBatch(times, x0, B, K, exit_index, {"substeps": s, "interpolation": method})


@dataclass
class SolutionPath:
    """One Euler solution: the paths X, K, the driving fBm and its lineage."""

    X: GridPath
    K: GridPath
    B: GridPath
    x0: np.ndarray

    @property
    def B_ref(self):
        return self.B.seed_lineage


def euler_solve(config, B):
    """Solve for one driving path; raises :class:`BoxExitError` on leaving the box."""
    if B.kind != "B":
        raise ValueError(f"driving path must be of kind B, got {B.kind}")
    batch = euler_solve_batch(config, B.values[None], B.times)
    if batch.exit_index[0] >= 0:
        raise BoxExitError(B.times[batch.exit_index[0]])
    K = batch.K[0]
    X = config.x0 + K + B.values
    lin = B.seed_lineage
    return SolutionPath(
        GridPath(B.times, X, "X", lin, B.hurst),
        GridPath(B.times, K, "K", lin, B.hurst),
        B,
        config.x0,
    )


def solution_from_batch(batch, row, hurst=None, lineage=(None, None)):
    """Extract one row of a batch as a :class:`SolutionPath`."""
    if batch.exit_index[row] >= 0:
        raise BoxExitError(batch.times[batch.exit_index[row]], row)
    B = GridPath(batch.times, batch.B[row], "B", lineage, hurst)
    K = GridPath(batch.times, batch.K[row], "K", lineage, hurst)
    X = GridPath(batch.times, batch.x0 + batch.K[row] + batch.B[row], "X", lineage, hurst)
    return SolutionPath(X, K, B, batch.x0)


def random_control(K, s, t):
    """``lambda(s, t) = |K_t - K_s|`` with the l1 vector norm; `s`, `t` grid times."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    i, j = K.index_of(s), K.index_of(t)
    return float(np.abs(K.values[j] - K.values[i]).sum())


def richardson_proxy(config, B, times, factor=2):
    """Per-path sup-distance between fine-grid and coarsened-grid solutions.

    The coarse solve is driven by the fine noise restricted to every
    `factor`-th grid point; distances are measured on the coarse grid.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 2:
        B = B[:, :, None]
    n = B.shape[1] - 1
    if n % factor:
        raise ConfigurationError(f"grid size {n} is not divisible by {factor}")
    fine = euler_solve_batch(config, B, times)
    coarse = euler_solve_batch(config, B[:, ::factor], times[::factor])
    diff = np.abs(fine.K[:, ::factor] - coarse.K).sum(axis=-1)
    return diff.max(axis=1), np.abs(fine.X).sum(axis=-1).max(axis=1)


def richardson_check(config, B, factor=2):
    """Sup-distance between the solution and its coarsened counterpart for one path."""
    proxy, _ = richardson_proxy(config, B.values[None], B.times, factor)
    return float(proxy[0])


def plan_steps(config, fbm_config, master_seed, n_paths=64, rtol=1e-3, max_steps=2**16):
    """Double the number of steps until the median Richardson proxy is below ``rtol * sup|X|``.

    Returns the first step count that passes, with the proxy ratios tried.
    """
    from .fbm import FbmConfig, sample_fbm_batch

    n = fbm_config.n_steps
    history = []
    while True:
        cfg = FbmConfig(fbm_config.hurst, n, fbm_config.horizon, fbm_config.dim)
        B, _ = sample_fbm_batch(cfg, master_seed, range(n_paths))
        proxy, supx = richardson_proxy(config, B, cfg.times)
        ratio = float(np.nanmedian(proxy / supx))
        history.append((n, ratio))
        if ratio < rtol or n >= max_steps:
            return n, history
        n *= 2

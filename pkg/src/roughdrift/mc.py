"""Monte Carlo layer: increment moments, exponent fits and the scaling experiments.

Every experiment streams its ensemble in fixed-size chunks of path indices.
A chunk is a pure function of ``(master_seed, path indices)``, so partial
results do not depend on which worker computed them, and they are merged in
chunk order. Reports are therefore bit-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import besov
from .drift import MollifierSchedule, beta_gate, mollify
from .errors import ConfigurationError, HypothesisGateError
from .fbm import FbmConfig, sample_fbm_batch
from .sewing import _trapezoid
from .solve import SolveConfig, euler_solve_batch, interpolate

WORKERS_ENV = "ROUGHDRIFT_WORKERS"
CHUNK_SIZE = 1000
N_BOOTSTRAP = 200
QUANTITIES = ("B", "K", "X-B", "germ")

ANCHORS = {
    "moments": "increment moment bound for K = X - B",
    "regularization": "regularization estimate for time integrals of f(B)",
    "sewing": "stochastic sewing conditions for the germ A_{s,t}",
    "tightness": "tightness of (K^n) via the Hoelder modulus set A_M",
    "stability": "stability decomposition A1 + A2 + A3",
    "flagship": "existence for finite measures when H < 1/(2d)",
    "monotonicity": "componentwise monotonicity of K for nonnegative drift",
}


# ---------------------------------------------------------------------------
# ensembles


def default_workers():
    """Worker count from the environment (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class Ensemble:
    """A seeded family of fBm paths, generated chunk by chunk.

    Parameters
    ----------
    fbm : FbmConfig
    master_seed : int
    n_paths : int
    x0 : tuple or None
        Initial condition for solves; defaults to the origin.
    chunk_size : int
        Paths per chunk. Part of the reproducibility contract: changing it
        changes nothing numerically except the bootstrap draw order, which is
        seeded separately.
    """

    fbm: FbmConfig
    master_seed: int
    n_paths: int
    x0: tuple | None = None
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("ensemble needs at least one path")
        if self.chunk_size < 1:
            raise ConfigurationError("chunk_size must be positive")

    @property
    def origin(self):
        if self.x0 is None:
            return np.zeros(self.fbm.dim)
        return np.asarray(self.x0, dtype=float)

    def chunks(self):
        return [np.arange(a, min(a + self.chunk_size, self.n_paths)) for a in range(0, self.n_paths, self.chunk_size)]

    def noise(self, indices):
        return sample_fbm_batch(self.fbm, self.master_seed, indices)[0]


def run_chunks(ensemble, fn, workers=None):
    """Apply ``fn(ensemble, indices)`` to every chunk; results come back in chunk order."""
    workers = default_workers() if workers is None else int(workers)
    chunks = ensemble.chunks()
    if workers <= 1 or len(chunks) == 1:
        return [fn(ensemble, c) for c in chunks]
    with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        return list(pool.map(fn, [ensemble] * len(chunks), chunks))


def solve_chunk(ensemble, indices, drift, B=None):
    if B is None:
        B = ensemble.noise(indices)
    return euler_solve_batch(SolveConfig(ensemble.origin, drift), B, ensemble.fbm.times)


def _box_exit_error(n_exit, where):
    return ConfigurationError(f"{n_exit} path(s) left the lattice box during {where}; enlarge the lattice half-width")


# ---------------------------------------------------------------------------
# moments and exponent fits


def lag_steps(n_steps, lags, horizon=1.0):
    """Grid steps per lag; each lag must tile ``[0, T]`` exactly."""
    out = []
    for lag in lags:
        k = lag / horizon * n_steps
        steps = int(round(k))
        if steps < 1 or abs(k - steps) > 1e-9 or n_steps % steps:
            raise ConfigurationError(f"lag {lag} does not tile the grid of {n_steps} steps")
        out.append(steps)
    return out


def dyadic_lags(k_min, k_max, horizon=1.0):
    """Lags ``T 2^{-k}`` for k from `k_max` down to `k_min` (increasing lags)."""
    return [horizon * 2.0 ** (-k) for k in range(k_max, k_min - 1, -1)]


def singular_window(epsilon, hurst, factor=4.0):
    """Smallest lag ``factor * eps^{1/(2H)}`` at which the drift looks singular to the noise."""
    return float(factor * epsilon ** (1.0 / (2.0 * hurst)))


def window_lags(min_lag, n_steps, horizon=1.0, k_min=1):
    """Dyadic lags ``T 2^{-k}``, k >= `k_min`, no shorter than `min_lag` or one grid step."""
    lags = []
    k = k_min
    while horizon * 2.0**-k >= max(min_lag, horizon / n_steps):
        lags.append(horizon * 2.0**-k)
        k += 1
    return lags[::-1]


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _germ_blocks(drift, x0, B, K, steps):
    """``A_{s,s+L}`` over all blocks of `steps` grid intervals, shape ``(P, n_blocks, d)``."""
    P, n1, d = B.shape
    nb = (n1 - 1) // steps
    starts = np.arange(nb) * steps
    r = starts[:, None] + np.arange(steps + 1)[None, :]
    pts = x0 + B[:, r] + K[:, starts][:, :, None, :]
    vals, inside = interpolate(drift, pts.reshape(-1, d))
    if not inside.all():
        raise _box_exit_error(int((~inside).sum()), "germ evaluation")
    vals = vals.reshape(P, nb, steps + 1, -1)
    dt = 1.0  # rescaled by the caller
    return _trapezoid(vals, dt, axis=2)


def power_means(values, steps, m, drift=None, x0=None, B=None, K=None):
    """Per-path ``mean_j |Y_{jL,(j+1)L}|^m`` over non-overlapping pairs, shape ``(P, len(steps))``.

    `values` is the path array ``(P, n+1, d)`` for increment quantities; for
    the germ pass ``values=None`` with `drift`, `x0`, `B`, `K`.
    """
    cols = []
    for L in steps:
        if values is not None:
            inc = values[:, L::L] - values[:, : -L : L]
        else:
            inc = _germ_blocks(drift, x0, B, K, L)
        cols.append(np.mean(_norm(inc) ** m, axis=1))
    return np.stack(cols, axis=1)


def bootstrap_rng(master_seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), 0xB0075])))


def bootstrap_errors(q, m, n_boot=N_BOOTSTRAP, seed=0):
    """Bootstrap standard errors of ``mean(q)^{1/m}`` over the path axis."""
    if n_boot < N_BOOTSTRAP:
        raise ConfigurationError(f"at least {N_BOOTSTRAP} bootstrap resamples are required")
    rng = bootstrap_rng(seed)
    P = q.shape[0]
    boots = np.empty((n_boot, q.shape[1]))
    for b in range(n_boot):
        idx = rng.integers(0, P, P)
        boots[b] = np.mean(q[idx], axis=0) ** (1.0 / m)
    return boots.std(axis=0, ddof=1)


@dataclass
class MomentTable:
    """``(E|Y_{s,t}|^m)^{1/m}`` per lag, pooled over the dyadic pairs of that lag.

    Attributes
    ----------
    m : float
    lags : ndarray
        Lag lengths ``t - s`` (time units); the pairs for a lag ``L`` are
        ``(jL, (j+1)L)`` covering ``[0, T]``.
    estimates, std_errors : ndarray
    n_paths : int
    quantity : str
    """

    m: float
    lags: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    n_paths: int
    quantity: str = "K"
    n_bootstrap: int = N_BOOTSTRAP

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if np.any(self.estimates < 0) or np.any(self.std_errors < 0):
            raise ValueError("moment estimates and errors must be nonnegative")

    def to_dict(self):
        return {
            "m": self.m,
            "quantity": self.quantity,
            "n_paths": self.n_paths,
            "n_bootstrap": self.n_bootstrap,
            "lags": self.lags.tolist(),
            "estimates": self.estimates.tolist(),
            "std_errors": self.std_errors.tolist(),
        }

    def rows(self):
        return [
            {"lag": float(l), "estimate": float(e), "std_error": float(s)}
            for l, e, s in zip(self.lags, self.estimates, self.std_errors)
        ]


def table_from_power_means(q, m, lags, quantity, seed=0, n_boot=N_BOOTSTRAP):
    est = np.mean(q, axis=0) ** (1.0 / m)
    se = bootstrap_errors(q, m, n_boot, seed)
    return MomentTable(float(m), np.asarray(lags, float), est, se, q.shape[0], quantity, n_boot)


@dataclass
class ExponentFit:
    """Weighted log-log regression ``log y = intercept + slope log lag``."""

    slope: float
    intercept: float
    r_squared: float
    ci95: tuple
    n_points: int
    flagged: bool = False

    def to_dict(self):
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


def fit_exponent(table, min_lags=4, min_octaves=3.0):
    """Weighted least-squares slope of ``log estimate`` on ``log lag``.

    Weights are inverse squared log-scale errors ``(se / estimate)^-2``; when
    every error is zero the fit is unweighted. Nonpositive estimates are
    dropped and the fit is `flagged`.
    """
    lags, est, se = table.lags, table.estimates, table.std_errors
    pos = est > 0
    flagged = not bool(pos.all())
    x, y = np.log(lags[pos]), np.log(est[pos])
    if len(x) < min_lags:
        raise ConfigurationError(f"exponent fit needs at least {min_lags} positive lags, got {len(x)}")
    if (x.max() - x.min()) / np.log(2) < min_octaves - 1e-9:
        raise ConfigurationError(f"exponent fit needs lags spanning at least {min_octaves:g} octaves")
    sig = se[pos] / est[pos]
    if np.all(sig > 0):
        w = 1.0 / sig**2
    else:
        w = np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    intercept, slope = float(coef[0]), float(coef[1])
    resid = y - X @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * resid**2))
    # flat data leaves only roundoff in ss_tot
    r2 = 1.0 if ss_tot <= 1e-24 * float(np.sum(w * y * y) + 1.0) else 1.0 - ss_res / ss_tot
    dof = len(x) - 2
    xbar = np.sum(w * x) / np.sum(w)
    sxx = float(np.sum(w * (x - xbar) ** 2))
    se_slope = np.sqrt(ss_res / dof / sxx) if dof > 0 else 0.0
    half = float(stats.t.ppf(0.975, dof) * se_slope) if dof > 0 else 0.0
    return ExponentFit(slope, intercept, float(min(max(r2, 0.0), 1.0)), (slope - half, slope + half), len(x), flagged)


def _moment_chunk(ensemble, indices, drift, quantity, steps, m):
    if quantity == "B":
        return power_means(ensemble.noise(indices), steps, m)
    sol = solve_chunk(ensemble, indices, drift)
    if not sol.ok.all():
        raise _box_exit_error(int((~sol.ok).sum()), "the solve")
    if quantity == "K":
        return power_means(sol.K, steps, m)
    if quantity == "X-B":
        return power_means(sol.X - sol.B, steps, m)
    q = power_means(None, steps, m, drift=drift, x0=sol.x0, B=sol.B, K=sol.K)
    return q * sol.dt**m


def estimate_moments(ensemble, quantity, m, lags, drift=None, workers=None, min_paths=1000):
    """Monte Carlo L^m norms of increments of `quantity` at every lag.

    Parameters
    ----------
    ensemble : Ensemble or SolutionBatch
        A streamed ensemble, or an in-memory batch of solutions.
    quantity : {"B", "K", "X-B", "germ"}
        ``germ`` is ``A_{s,t} = int_s^t b(x0 + B_r + K_s) dr`` for the solve drift.
    m : float
    lags : sequence of float
        Lags that tile ``[0, T]``.
    drift : GridFunction, optional
        Required for every quantity except ``B`` when streaming.
    """
    if quantity not in QUANTITIES:
        raise ConfigurationError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    if m < 2:
        raise ConfigurationError("moment order m must be at least 2")
    if isinstance(ensemble, Ensemble):
        if ensemble.n_paths < min_paths:
            raise ConfigurationError(f"moment estimates need at least {min_paths} paths")
        if quantity != "B" and drift is None:
            raise ConfigurationError(f"quantity {quantity!r} needs a drift")
        steps = lag_steps(ensemble.fbm.n_steps, lags, ensemble.fbm.horizon)
        fn = partial(_moment_chunk, drift=drift, quantity=quantity, steps=steps, m=m)
        q = np.concatenate(run_chunks(ensemble, fn, workers))
        seed = ensemble.master_seed
    else:
        sol = ensemble
        if sol.n_paths == 0:
            raise ConfigurationError("empty ensemble")
        if sol.n_paths < min_paths:
            raise ConfigurationError(f"moment estimates need at least {min_paths} paths")
        steps = lag_steps(len(sol.times) - 1, lags, sol.times[-1])
        vals = {"B": sol.B, "K": sol.K, "X-B": sol.X - sol.B}.get(quantity)
        if vals is not None:
            q = power_means(vals, steps, m)
        else:
            q = power_means(None, steps, m, drift=drift, x0=sol.x0, B=sol.B, K=sol.K) * sol.dt**m
        seed = sol.meta.get("master_seed", 0)
    if not np.all(np.isfinite(q)):
        raise ConfigurationError("non-finite moments: some paths left the lattice box")
    return table_from_power_means(q, m, lags, quantity, seed)


# ---------------------------------------------------------------------------
# regularization estimate


def regularization_gate(gamma, hurst):
    if not (-1.0 / (2.0 * hurst) < gamma < 0.0):
        raise HypothesisGateError(
            f"regularization gate (-1/(2H) < gamma < 0): got gamma={gamma:g} with H={hurst:g}, "
            f"admissible interval is ({-1.0 / (2.0 * hurst):g}, 0)"
        )


def _regularization_chunk(ensemble, indices, f, steps, m):
    B = ensemble.noise(indices)
    pts = ensemble.origin + B
    P, n1, d = B.shape
    vals, inside = interpolate(f, pts.reshape(-1, d))
    if not inside.all():
        raise _box_exit_error(int((~inside).sum()), "the regularization integral")
    vals = vals.reshape(P, n1, -1)
    cum = np.zeros_like(vals)
    cum[:, 1:] = np.cumsum(0.5 * ensemble.fbm.dt * (vals[:, 1:] + vals[:, :-1]), axis=1)
    return np.stack([_norm(cum[:, L]) ** m for L in steps], axis=1)


@dataclass
class RegularizationReport:
    fit: ExponentFit
    table: MomentTable
    gamma: float
    target: float
    tolerance: float
    passes: bool
    anchor: str = ANCHORS["regularization"]

    def to_dict(self):
        return {
            "anchor": self.anchor,
            "gamma": self.gamma,
            "target": self.target,
            "tolerance": self.tolerance,
            "passes": self.passes,
            "fit": self.fit.to_dict(),
            "table": self.table.to_dict(),
        }


def regularization_experiment(f, gamma, hurst, m, ensemble, lags=None, tolerance=0.1, workers=None):
    """Fit the growth exponent of ``||int_0^t f(x0 + B_r) dr||_{L^m}`` over dyadic t.

    The one-sided gate is ``slope >= 1 + H gamma - tolerance``.
    """
    regularization_gate(gamma, hurst)
    if ensemble.fbm.hurst != hurst:
        raise ConfigurationError("ensemble Hurst parameter does not match")
    if lags is None:
        lags = dyadic_lags(1, 8, ensemble.fbm.horizon)
    steps = lag_steps(ensemble.fbm.n_steps, lags, ensemble.fbm.horizon)
    q = np.concatenate(run_chunks(ensemble, partial(_regularization_chunk, f=f, steps=steps, m=m), workers))
    table = table_from_power_means(q, m, lags, "integral", ensemble.master_seed)
    fit = fit_exponent(table)
    target = 1.0 + hurst * gamma
    return RegularizationReport(fit, table, float(gamma), target, tolerance, bool(fit.slope >= target - tolerance))


# ---------------------------------------------------------------------------
# monotonicity


def _monotone_chunk(ensemble, indices, drift):
    sol = solve_chunk(ensemble, indices, drift)
    if not sol.ok.all():
        raise _box_exit_error(int((~sol.ok).sum()), "the solve")
    return np.all(np.diff(sol.K, axis=1) >= 0, axis=(1, 2))


def monotone_fraction(ensemble, drift, workers=None):
    """Fraction of paths whose K is componentwise nondecreasing on the grid (exact check)."""
    flags = np.concatenate(run_chunks(ensemble, partial(_monotone_chunk, drift=drift), workers))
    return float(flags.mean())


# ---------------------------------------------------------------------------
# tightness


def modulus_ratio(K, steps, exponent, dt):
    """Per path ``max |K_t - K_s| / (t - s)^exponent`` over the dyadic pairs of each lag."""
    out = np.zeros(K.shape[0])
    for L in steps:
        inc = _norm(K[:, L::L] - K[:, : -L : L]).max(axis=1)
        out = np.maximum(out, inc / (L * dt) ** exponent)
    return out


def _tightness_chunk(ensemble, indices, drifts, steps, exponent):
    B = ensemble.noise(indices)
    out = []
    for drift in drifts:
        sol = solve_chunk(ensemble, indices, drift, B)
        if not sol.ok.all():
            raise _box_exit_error(int((~sol.ok).sum()), "the tightness solve")
        out.append(modulus_ratio(sol.K, steps, exponent, sol.dt))
    return np.stack(out, axis=1)


@dataclass
class TightnessReport:
    """Exceedance probabilities of the Hoelder-modulus bound, per level and M."""

    M_grid: list
    exceedance_prob: list
    epsilons: list
    lags: list
    exponent: float
    slopes: list
    uniformity_M: float
    uniformity_ratio: float
    slope_bound: float
    ratio_bound: float
    passes: bool
    anchor: str = ANCHORS["tightness"]

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return [
            {"level": i, "epsilon": eps, "M": M, "exceedance": p}
            for i, (eps, probs) in enumerate(zip(self.epsilons, self.exceedance_prob))
            for M, p in zip(self.M_grid, probs)
        ]


def tightness_experiment(spec, schedule, hurst, ensemble, lattice, M_grid=None, lags=None,
                         slope_bound=-0.7, ratio_bound=3.0, window_factor=32.0, workers=None):
    """Exceedance ``P(exists (s,t): |K_{s,t}| > M (t-s)^{1+H beta})`` along a mollifier schedule.

    The pair set is every dyadic pair whose lag lies in the singular window
    of the coarsest level, ``t - s >= window_factor * eps_max^{1/(2H)}``, so
    that all levels are compared on lags where none of them looks smooth.

    With no `M_grid`, M runs geometrically between the pooled 50% and 99%
    quantiles of the per-path modulus ratio. Each level passes when its
    log-log slope of exceedance against M is at most `slope_bound`; the
    family passes when, at the pooled 90% quantile of M, the max/min
    exceedance ratio across levels is at most `ratio_bound`.
    """
    spec.check_gate(hurst)
    exponent = 1.0 + hurst * spec.declared_beta
    if lags is None:
        lags = window_lags(singular_window(max(schedule.scales), hurst, window_factor), ensemble.fbm.n_steps,
                           ensemble.fbm.horizon)
        if not lags:
            raise ConfigurationError("the singular lag window of the coarsest level is empty; use smaller scales")
    steps = lag_steps(ensemble.fbm.n_steps, lags, ensemble.fbm.horizon)
    drifts = [mollify(spec, eps, lattice, schedule.kernel) for eps in schedule.scales]
    fn = partial(_tightness_chunk, drifts=drifts, steps=steps, exponent=exponent)
    Y = np.concatenate(run_chunks(ensemble, fn, workers))
    pooled = Y.ravel()
    if M_grid is None:
        lo, hi = np.quantile(pooled, [0.5, 0.99])
        M_grid = np.geomspace(lo, hi, 8) if lo > 0 else np.array([1.0, 10.0, 100.0])
    M_grid = np.sort(np.asarray(M_grid, dtype=float))
    exceed = (Y[:, :, None] > M_grid[None, None, :]).mean(axis=0)
    slopes = []
    for row in exceed:
        pos = row > 0
        if pos.sum() >= 3:
            slopes.append(float(np.polyfit(np.log(M_grid[pos]), np.log(row[pos]), 1)[0]))
        else:
            slopes.append(float("nan"))
    M90 = float(np.quantile(pooled, 0.9))
    at = (Y > M90).mean(axis=0)
    if np.all(at == 0):
        ratio = 1.0
    else:
        ratio = float(at.max() / at.min()) if at.min() > 0 else float("inf")
    slope_ok = all(np.isnan(s) or s <= slope_bound for s in slopes)
    return TightnessReport(
        M_grid.tolist(), exceed.tolist(), list(schedule.scales), list(map(float, lags)), exponent, slopes, M90, ratio,
        slope_bound, ratio_bound, bool(slope_ok and ratio <= ratio_bound),
    )


# ---------------------------------------------------------------------------
# stability


def ks_critical(n, m, alpha=0.01):
    """Asymptotic two-sample KS critical value; ``c(0.01) = 1.628``."""
    c = np.sqrt(-0.5 * np.log(alpha / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


def _left_integral(drift, X, dt):
    """``int_0^t drift(X_r) dr`` by the left-point rule, matching the Euler step."""
    P, n1, d = X.shape
    vals, inside = interpolate(drift, X[:, :-1].reshape(-1, d))
    if not inside.all():
        raise _box_exit_error(int((~inside).sum()), "a drift integral")
    out = np.zeros((P, n1, d))
    out[:, 1:] = np.cumsum(vals.reshape(P, n1 - 1, d) * dt, axis=1)
    return out


def _sup(v):
    return _norm(v).max(axis=1)


def _stability_chunk(ensemble, indices, fam_a, fam_b, reference):
    B = ensemble.noise(indices)
    dt = ensemble.fbm.dt
    ref = solve_chunk(ensemble, indices, reference, B)
    if not ref.ok.all():
        raise _box_exit_error(int((~ref.ok).sum()), "the reference solve")
    Xref = ref.X
    a1, a2, a3 = [], [], []
    for bn, bk in zip(fam_a, fam_b):
        sk = solve_chunk(ensemble, indices, bk, B)
        if not sk.ok.all():
            raise _box_exit_error(int((~sk.ok).sum()), "a stability solve")
        Xk = sk.X
        a1.append(_sup(_left_integral(bn, Xref, dt) - _left_integral(bn, Xk, dt)))
        a2.append(_sup(_left_integral(bn, Xk, dt) - _left_integral(bk, Xk, dt)))
        a3.append(_sup(_left_integral(bk, Xk, dt) - sk.K))
    last_b = Xk[:, -1]
    sa = solve_chunk(ensemble, indices, fam_a[-1], B)
    if not sa.ok.all():
        raise _box_exit_error(int((~sa.ok).sum()), "a stability solve")
    return np.stack(a1, 1), np.stack(a2, 1), np.stack(a3, 1), sa.X[:, -1], last_b


@dataclass
class StabilityReport:
    """Per-level magnitudes of the three stability terms and the cross-family distance.

    ``a1``, ``a2``, ``a3`` are path means of the sup-norm terms along the
    diagonal ``k = n``; the first term compares against a reference solution
    at a finer scale, the stand-in for the unknown limit.
    """

    epsilons: list
    reference_epsilon: float
    a1: list
    a2: list
    a3: list
    besov_distance: list
    a2_ratio: list
    ks_statistic: float
    ks_critical: float
    ks_per_coordinate: list
    wasserstein: list
    a1_decays: bool
    a2_decays: bool
    passes: bool
    anchor: str = ANCHORS["stability"]

    @property
    def cross_family_distance(self):
        return self.ks_statistic

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return [
            {"level": i, "epsilon": e, "a1": x, "a2": y, "a3": z, "besov_distance": b}
            for i, (e, x, y, z, b) in enumerate(zip(self.epsilons, self.a1, self.a2, self.a3, self.besov_distance))
        ]


def _decays(v):
    v = np.asarray(v, dtype=float)
    if np.all(v == 0):
        return True
    return bool(v[-1] < v[0] and np.polyfit(np.arange(len(v)), np.log(np.maximum(v, 1e-300)), 1)[0] < 0)


def stability_experiment(spec, schedule_a, schedule_b, hurst, ensemble, lattice, reference_scale=None,
                         alpha=0.01, check_families=True, workers=None):
    """Coupled-noise comparison of two mollifier families of one drift.

    Parameters
    ----------
    schedule_a, schedule_b : MollifierSchedule
        Same scales, possibly different kernels (e.g. Gaussian against bump).
    reference_scale : float, optional
        Scale of the family-B solution standing in for the limit; defaults
        to a quarter of the finest scale.
    """
    spec.check_gate(hurst)
    if tuple(schedule_a.scales) != tuple(schedule_b.scales):
        raise ConfigurationError("stability families must share their scale schedule")
    fam_a = [mollify(spec, e, lattice, schedule_a.kernel) for e in schedule_a.scales]
    fam_b = [mollify(spec, e, lattice, schedule_b.kernel) for e in schedule_b.scales]
    beta = spec.declared_beta
    if check_families:
        from .drift import lattice_limit

        limit = lattice_limit(spec, lattice)
        for name, fam in (("A", fam_a), ("B", fam_b)):
            rep = besov.check_beta_minus(fam, limit, beta)
            if not rep.passes:
                raise ConfigurationError(f"family {name} does not converge in B^{{beta-}} at beta={beta:g}")
    ref_eps = schedule_b.scales[-1] / 4.0 if reference_scale is None else float(reference_scale)
    reference = mollify(spec, ref_eps, lattice, schedule_b.kernel)
    fn = partial(_stability_chunk, fam_a=fam_a, fam_b=fam_b, reference=reference)
    parts = run_chunks(ensemble, fn, workers)
    A1, A2, A3, XA, XB = (np.concatenate([p[i] for p in parts]) for i in range(5))
    a1, a2, a3 = A1.mean(0), A2.mean(0), A3.mean(0)
    probe = beta - 0.25
    dist = [besov.besov_norm(x - y, probe) for x, y in zip(fam_a, fam_b)]
    ratio = [float(x / b) if b > 0 else float("nan") for x, b in zip(a2, dist)]
    ks = [float(stats.ks_2samp(XA[:, c], XB[:, c], method="asymp").statistic) for c in range(XA.shape[1])]
    w1 = [float(stats.wasserstein_distance(XA[:, c], XB[:, c])) for c in range(XA.shape[1])]
    crit = ks_critical(len(XA), len(XB), alpha)
    ks_max = max(ks)
    a1_ok, a2_ok = _decays(a1), _decays(a2)
    return StabilityReport(
        list(schedule_a.scales), ref_eps, a1.tolist(), a2.tolist(), a3.tolist(), dist, ratio,
        ks_max, crit, ks, w1, a1_ok, a2_ok, bool(ks_max < crit and a1_ok and a2_ok),
    )


# ---------------------------------------------------------------------------
# flagship


def flagship_gate(dim, hurst):
    if not hurst < 1.0 / (2.0 * dim):
        raise HypothesisGateError(
            f"finite-measure gate (H < 1/(2d)): d={dim} requires H<{1.0 / (2.0 * dim):g}, got H={hurst:g}"
        )


@dataclass
class FlagshipSettings:
    """Sizes for one flagship run; the defaults keep each run to a few minutes."""

    n_steps: int = 4096
    n_paths: int = 4000
    half_width: float = 10.0
    points: int = 2**15
    epsilon: float = 1e-4
    moment_lags: tuple = (1, 8)
    tight_scales: tuple = tuple(2.0 ** -(k + 4) for k in range(4, 11))
    stab_scales: tuple = tuple(2.0 ** -k for k in range(3, 8))
    tight_paths: int | None = None
    stab_paths: int | None = None


FLAGSHIP_DEFAULTS = {
    1: FlagshipSettings(),
    2: FlagshipSettings(n_steps=1024, n_paths=2000, half_width=8.0, points=512, epsilon=4e-3,
                        tight_scales=tuple(2.0 ** -k for k in range(3, 8)),
                        stab_scales=tuple(2.0 ** -k for k in range(1, 5)),
                        tight_paths=1000, stab_paths=2000),
}


@dataclass
class FlagshipReport:
    dim: int
    hurst: float
    beta: float
    target_slope: float
    moments: MomentTable
    moment_fit: ExponentFit
    moment_pass: bool
    monotone_fraction: float
    tightness: TightnessReport
    stability: StabilityReport
    passes: bool
    anchor: str = ANCHORS["flagship"]

    def gates(self):
        return {
            "moments": self.moment_pass,
            "monotonicity": self.monotone_fraction == 1.0,
            "tightness": self.tightness.passes,
            "stability": self.stability.passes,
        }

    def to_dict(self):
        return {
            "anchor": self.anchor,
            "dim": self.dim,
            "hurst": self.hurst,
            "beta": self.beta,
            "target_slope": self.target_slope,
            "moments": self.moments.to_dict(),
            "moment_fit": self.moment_fit.to_dict(),
            "monotone_fraction": self.monotone_fraction,
            "tightness": self.tightness.to_dict(),
            "stability": self.stability.to_dict(),
            "gates": self.gates(),
            "passes": self.passes,
        }


def measure_flagship(dim, hurst, n_paths=None, master_seed=20240601, spec=None, settings=None,
                     tolerance=0.1, workers=None):
    """Mollify, solve, and run the moment, tightness and stability gates for a finite measure.

    The default measure is a single atom at the origin with weight one in
    every coordinate, declared regularity ``beta = -d``.
    """
    flagship_gate(dim, hurst)
    from .drift import DriftSpec

    spec = DriftSpec.dirac(dim) if spec is None else spec
    if spec.dim != dim:
        raise ConfigurationError("drift dimension does not match the flagship dimension")
    spec.check_gate(hurst)
    s = settings or FLAGSHIP_DEFAULTS.get(dim)
    if s is None:
        raise ConfigurationError(f"no default flagship settings for d={dim}")
    n_paths = s.n_paths if n_paths is None else int(n_paths)
    lattice = besov.SpatialLattice(dim, s.half_width, s.points)
    cfg = FbmConfig(hurst, s.n_steps, 1.0, dim)
    ens = Ensemble(cfg, master_seed, n_paths)
    drift = mollify(spec, s.epsilon, lattice)
    lags = dyadic_lags(*s.moment_lags)
    table = estimate_moments(ens, "K", 2, lags, drift, workers, min_paths=min(1000, n_paths))
    fit = fit_exponent(table)
    target = 1.0 + hurst * spec.declared_beta
    mono = monotone_fraction(ens, drift, workers) if spec.nonnegative else float("nan")
    t_ens = Ensemble(cfg, master_seed + 1, s.tight_paths or n_paths)
    tight = tightness_experiment(spec, MollifierSchedule("gaussian", s.tight_scales), hurst, t_ens, lattice,
                                 workers=workers)
    s_ens = Ensemble(cfg, master_seed + 2, s.stab_paths or n_paths)
    stab = stability_experiment(spec, MollifierSchedule("gaussian", s.stab_scales),
                                MollifierSchedule("bump", s.stab_scales), hurst, s_ens, lattice, workers=workers)
    moment_pass = bool(fit.slope >= target - tolerance)
    passes = moment_pass and (mono == 1.0 or not spec.nonnegative) and tight.passes and stab.passes
    return FlagshipReport(dim, hurst, spec.declared_beta, target, table, fit, moment_pass, mono, tight, stab,
                          bool(passes))

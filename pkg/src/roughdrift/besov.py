"""Littlewood-Paley analysis on a periodic lattice.

Functions on R^d are represented by their samples on the box ``[-L, L)^d``
with periodic continuation. Fourier multipliers act on the discrete Fourier
transform, with angular frequencies ``xi = 2 pi k / (2 L)``.

The dyadic partition of unity uses a C-infinity radial cutoff ``chi`` equal
to 1 on ``|xi| <= 3/4`` and supported in ``|xi| <= 4/3``, and
``rho(xi) = chi(xi / 2) - chi(xi)``, supported in ``3/4 <= |xi| <= 8/3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

CHI_INNER = 0.75
CHI_OUTER = 4.0 / 3.0
RHO_OUTER = 8.0 / 3.0


@dataclass(frozen=True)
class SpatialLattice:
    """Periodic lattice on ``[-half_width, half_width)^dim`` with `points` per axis."""

    dim: int
    half_width: float
    points: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"dim must be positive, got {self.dim}")
        if not self.half_width > 0:
            raise ConfigurationError(f"half_width must be positive, got {self.half_width}")
        p = int(self.points)
        if p != self.points or p < 64 or p & (p - 1):
            raise ConfigurationError(f"points per axis must be a power of two >= 64, got {self.points}")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.points

    @property
    def shape(self):
        return (self.points,) * self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def nyquist(self):
        """Largest resolved angular frequency per axis."""
        return np.pi / self.spacing

    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.points)

    def coordinates(self):
        """Lattice points, shape ``shape + (dim,)``."""
        grids = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1)

    def contains(self, x):
        """Mask of points inside the interpolation box ``[-L, L - h]^d``."""
        x = np.asarray(x, dtype=float)
        lo, hi = -self.half_width, self.half_width - self.spacing
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def rfreq_norm(self):
        """Euclidean norm of the angular frequency on the real-FFT grid."""
        return _rfreq_norm(self.dim, float(self.half_width), int(self.points))

    def rfreq_components(self):
        return _rfreq_components(self.dim, float(self.half_width), int(self.points))


@lru_cache(maxsize=16)
def _rfreq_components(dim, half_width, points):
    h = 2.0 * half_width / points
    full = 2.0 * np.pi * np.fft.fftfreq(points, d=h)
    half = 2.0 * np.pi * np.fft.rfftfreq(points, d=h)
    axes = [full] * (dim - 1) + [half]
    comps = np.meshgrid(*axes, indexing="ij")
    for c in comps:
        c.setflags(write=False)
    return tuple(comps)


@lru_cache(maxsize=16)
def _rfreq_norm(dim, half_width, points):
    comps = _rfreq_components(dim, half_width, points)
    out = np.sqrt(sum(c**2 for c in comps))
    out.setflags(write=False)
    return out


@dataclass(eq=False)
class GridFunction:
    """Samples of an R^m-valued function on a lattice.

    ``values`` has shape ``lattice.shape + (m,)``. ``origin`` optionally
    records how the function was built (e.g. a Gaussian mollification of
    atoms) so that callers can evaluate its heat-semigroup smoothing exactly.
    """

    lattice: SpatialLattice
    values: np.ndarray
    origin: object = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape == self.lattice.shape:
            v = v[..., None]
        if v.shape[:-1] != self.lattice.shape:
            raise ValueError(f"values shape {v.shape} does not match lattice {self.lattice.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.values = v

    @property
    def components(self):
        return self.values.shape[-1]

    def integral(self):
        """Lattice quadrature of each component."""
        axes = tuple(range(self.lattice.dim))
        return self.values.sum(axis=axes) * self.lattice.cell_volume

    def shifted(self, steps):
        """Periodic translate ``x -> f(x + steps * h)`` by whole lattice steps."""
        steps = np.broadcast_to(np.asarray(steps, dtype=int), (self.lattice.dim,))
        v = np.roll(self.values, shift=tuple(-steps), axis=tuple(range(self.lattice.dim)))
        return GridFunction(self.lattice, v)

    def __sub__(self, other):
        return GridFunction(self.lattice, self.values - other.values)

    def __add__(self, other):
        return GridFunction(self.lattice, self.values + other.values)

    def scaled(self, c):
        return GridFunction(self.lattice, c * self.values)


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def chi_symbol(r):
    """Radial low-pass symbol evaluated at frequency magnitude `r`."""
    return 1.0 - _smooth_step((np.asarray(r) - CHI_INNER) / (CHI_OUTER - CHI_INNER))


def rho_symbol(r, j=0):
    """Annular symbol ``rho_j(r) = chi(r / 2^{j+1}) - chi(r / 2^j)``."""
    r = np.asarray(r, dtype=float) * 2.0 ** (-j)
    return chi_symbol(r / 2.0) - chi_symbol(r)


@dataclass(frozen=True, eq=False)
class DyadicDecomposition:
    """Partition-of-unity symbols sampled on a lattice's real-FFT grid."""

    lattice: SpatialLattice
    chi: np.ndarray
    rho: tuple
    j_max: int

    @property
    def resolved_radius(self):
        """Frequencies below this radius are covered exactly by the symbols."""
        return CHI_INNER * 2.0 ** (self.j_max + 1)

    def symbol(self, j):
        if j <= -2:
            return None
        if j == -1:
            return self.chi
        if j > self.j_max:
            raise ValueError(f"block {j} exceeds j_max={self.j_max}")
        return self.rho[j]


def max_block(lattice):
    """Largest j whose annulus lies below the Nyquist frequency."""
    return int(np.floor(np.log2(lattice.nyquist / RHO_OUTER)))


@lru_cache(maxsize=16)
def build_partition(lattice):
    """Dyadic partition of unity on `lattice`.

    Raises
    ------
    ConfigurationError
        If fewer than four annuli fit below the Nyquist frequency.
    """
    j_max = max_block(lattice)
    if j_max < 3:
        raise ConfigurationError(
            f"lattice spacing {lattice.spacing:.3g} is too coarse: only j_max={j_max} < 3 dyadic blocks resolved"
        )
    r = lattice.rfreq_norm()
    chi = chi_symbol(r)
    rho = tuple(rho_symbol(r, j) for j in range(j_max + 1))
    for a in (chi, *rho):
        a.setflags(write=False)
    return DyadicDecomposition(lattice, chi, rho, j_max)


def _rfft(f):
    axes = tuple(range(f.lattice.dim))
    return np.fft.rfftn(f.values, axes=axes)


def _irfft(lattice, spec):
    axes = tuple(range(lattice.dim))
    return np.fft.irfftn(spec, s=lattice.shape, axes=axes)


def fourier_multiplier(f, symbol):
    """Apply a real-FFT-grid multiplier to every component of `f`."""
    spec = _rfft(f) * symbol[..., None]
    return GridFunction(f.lattice, _irfft(f.lattice, spec))


def lp_block(f, j):
    """Littlewood-Paley block ``Delta_j f`` (zero for ``j <= -2``)."""
    if j <= -2:
        return GridFunction(f.lattice, np.zeros_like(f.values))
    dec = build_partition(f.lattice)
    return fourier_multiplier(f, dec.symbol(j))


def lp_reconstruct(f):
    """Sum of all resolved blocks, ``sum_{j=-1}^{j_max} Delta_j f``."""
    dec = build_partition(f.lattice)
    total = dec.chi + sum(dec.rho)
    return fourier_multiplier(f, total)


def lattice_lp_norm(values, lattice, p):
    """``L^p`` norm of a vector field (pointwise l1 norm) by lattice quadrature."""
    pointwise = np.abs(values).sum(axis=-1)
    if np.isinf(p):
        return float(pointwise.max())
    return float((np.sum(pointwise**p) * lattice.cell_volume) ** (1.0 / p))


def block_norms(f, p):
    """``||Delta_j f||_{L^p}`` for ``j = -1, ..., j_max``."""
    if not 1.0 <= p <= np.inf:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    dec = build_partition(f.lattice)
    spec = _rfft(f)
    symbols = (dec.chi, *dec.rho)
    return np.array([lattice_lp_norm(_irfft(f.lattice, spec * s[..., None]), f.lattice, p) for s in symbols])


def besov_norm(f, s, p=np.inf):
    """Nonhomogeneous Besov norm ``sup_j 2^{js} ||Delta_j f||_{L^p}``."""
    norms = block_norms(f, p)
    j = np.arange(-1, len(norms) - 1)
    return float(np.max(2.0 ** (j * s) * norms))


def spectral_gradient(f):
    """Partial derivatives, shape ``lattice.shape + (m, dim)``.

    The Nyquist mode is dropped, which makes the derivative exact for
    band-limited functions.
    """
    lat = f.lattice
    spec = _rfft(f)
    comps = lat.rfreq_components()
    nyq = lat.nyquist
    out = np.empty(f.values.shape + (lat.dim,))
    for i, xi in enumerate(comps):
        mult = 1j * np.where(np.isclose(np.abs(xi), nyq), 0.0, xi)
        out[..., i] = _irfft(lat, spec * mult[..., None])
    return out


def c1_norm(f):
    """``sup |f| + sup |grad f|``: sums over components and partials of lattice sups.

    Each term dominates the corresponding l1-norm quantity, so the result
    bounds the Lipschitz constant of `f` with respect to the l1 norm.
    """
    axes = tuple(range(f.lattice.dim))
    sup_f = np.abs(f.values).max(axis=axes).sum()
    sup_grad = np.abs(spectral_gradient(f)).max(axis=axes).sum()
    return float(sup_f + sup_grad)


@dataclass
class BetaMinusReport:
    """Outcome of a weak-norm convergence check for a family ``f_n``."""

    beta: float
    norms: list
    sup_norm: float
    growth_ratio: float
    bounded: bool
    distances: dict
    probe_passes: dict
    passes: bool

    def to_dict(self):
        return {
            "beta": self.beta,
            "norms": list(map(float, self.norms)),
            "sup_norm": self.sup_norm,
            "growth_ratio": self.growth_ratio,
            "bounded": self.bounded,
            "distances": {str(k): list(map(float, v)) for k, v in self.distances.items()},
            "probe_passes": {str(k): bool(v) for k, v in self.probe_passes.items()},
            "passes": self.passes,
        }


def check_beta_minus(family, limit, beta, probes=None, growth_bound=4.0, atol=1e-10, rtol=1e-6):
    """Check that `family` converges to `limit` in the sense of ``B^{beta-}_inf``.

    The family passes when its ``B^beta_inf`` norms stay within a factor
    `growth_bound` of each other and, for every probe ``beta' < beta``, the
    distances ``||f_n - limit||_{B^{beta'}_inf}`` are nonincreasing (up to
    `rtol`) and end strictly below where they started, or vanish (`atol`).
    """
    family = list(family)
    if not family:
        raise ValueError("empty family")
    if probes is None:
        probes = (beta - 0.5, beta - 0.25, beta - 0.1)
    if any(q >= beta for q in probes):
        raise ValueError("probe exponents must be strictly below beta")
    lattice = limit.lattice
    if any(f.lattice != lattice for f in family):
        raise ValueError("all functions must live on one lattice")

    j = np.arange(-1, max_block(lattice) + 1)
    norms = []
    diff_blocks = []
    for f in family:
        norms.append(float(np.max(2.0 ** (j * beta) * block_norms(f, np.inf))))
        diff_blocks.append(block_norms(f - limit, np.inf))
    norms_arr = np.array(norms)
    top = norms_arr.max()
    ratio = 1.0 if top == 0 else float(top / norms_arr.min()) if norms_arr.min() > 0 else np.inf
    bounded = bool(np.isfinite(top) and ratio <= growth_bound)

    distances, probe_passes = {}, {}
    for q in probes:
        dist = np.array([np.max(2.0 ** (j * q) * b) for b in diff_blocks])
        distances[float(q)] = dist.tolist()
        if dist[-1] <= atol:
            ok = True
        else:
            steps_ok = np.all(dist[1:] <= dist[:-1] * (1 + rtol) + atol)
            ok = bool(steps_ok and dist[-1] < dist[0])
        probe_passes[float(q)] = bool(ok)
    passes = bounded and all(probe_passes.values())
    return BetaMinusReport(float(beta), norms, float(top), ratio, bounded, distances, probe_passes, passes)

"""Drifts, heat-semigroup mollification and approximating sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy import integrate

from .besov import GridFunction, check_beta_minus
from .errors import ConfigurationError, HypothesisGateError

KERNELS = ("gaussian", "bump")


def gaussian_kernel(t, x):
    """Heat kernel ``(2 pi t)^{-d/2} exp(-|x|^2 / (2 t))`` with Euclidean ``|x|``.

    `x` has shape ``(..., d)``.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    return (2.0 * pi * t) ** (-d / 2.0) * np.exp(-r2 / (2.0 * t))


@lru_cache(maxsize=8)
def _bump_constants(dim):
    """Mass and per-coordinate variance of ``exp(-1/(1-|x|^2))`` on the unit ball."""
    surface = 2.0 * pi ** (dim / 2.0) / gamma(dim / 2.0)
    prof = lambda r: np.exp(-1.0 / (1.0 - r * r))  # noqa: E731
    mass = surface * integrate.quad(lambda r: prof(r) * r ** (dim - 1), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    second = surface * integrate.quad(lambda r: prof(r) * r ** (dim + 1), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    return mass, second / mass / dim


def bump_radius(eps, dim):
    """Support radius of the compact bump whose per-coordinate variance is `eps`."""
    return float(np.sqrt(eps / _bump_constants(dim)[1]))


def bump_kernel(eps, x):
    """Compactly supported C-infinity probability density with variance `eps` per coordinate."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    mass, _ = _bump_constants(d)
    rad = bump_radius(eps, d)
    s = np.sum(x * x, axis=-1) / rad**2
    inside = s < 1.0
    out = np.zeros(s.shape)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out / (mass * rad**d)


def kernel_function(kernel):
    if kernel == "gaussian":
        return gaussian_kernel
    if kernel == "bump":
        return bump_kernel
    raise ConfigurationError(f"unknown mollifier kernel {kernel!r}; expected one of {KERNELS}")


def beta_gate(beta, hurst):
    """Raise unless ``beta > -1/(2H)``, the regularity the estimates require."""
    if not beta > -1.0 / (2.0 * hurst):
        bound = -2.0 * beta
        bound_txt = f"H<1/{bound:g}" if bound > 0 else "no admissible H"
        raise HypothesisGateError(
            f"drift regularity gate (beta > -1/(2H)): beta={beta:g} requires {bound_txt}, got H={hurst:g}"
        )


@dataclass
class DriftSpec:
    """A drift: finitely many weighted atoms, or a smooth function.

    Atoms carry a location and a d-vector weight. A smooth drift is a
    callable on points of shape ``(..., d)`` returning ``(..., d)``, or a
    :class:`GridFunction`.
    """

    dim: int
    locations: np.ndarray | None = None
    weights: np.ndarray | None = None
    function: object = field(default=None, repr=False)
    declared_beta: float = 0.0
    nonnegative: bool = True

    def __post_init__(self):
        if self.is_atomic:
            self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
            self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
            if self.locations.shape != self.weights.shape or self.locations.shape[1] != self.dim:
                raise ConfigurationError("atom locations and weights must both have shape (k, dim)")
            if self.nonnegative and np.any(self.weights < 0):
                raise ConfigurationError("nonnegative drift has a negative atom weight")
        elif self.function is None:
            raise ConfigurationError("a drift needs atoms or a function")

    @property
    def is_atomic(self):
        return self.locations is not None

    @property
    def total_weight(self):
        return self.weights.sum(axis=0) if self.is_atomic else None

    @classmethod
    def dirac(cls, dim=1, weight=None, location=None):
        """Single atom; the declared regularity of a finite measure is ``-dim``."""
        w = np.ones(dim) if weight is None else np.broadcast_to(np.asarray(weight, float), (dim,))
        loc = np.zeros(dim) if location is None else np.asarray(location, float)
        return cls(dim, loc[None, :], w[None, :], declared_beta=-float(dim))

    @classmethod
    def atoms(cls, locations, weights, declared_beta=None, nonnegative=True):
        locations = np.atleast_2d(np.asarray(locations, float))
        dim = locations.shape[1]
        beta = -float(dim) if declared_beta is None else float(declared_beta)
        return cls(dim, locations, weights, declared_beta=beta, nonnegative=nonnegative)

    @classmethod
    def smooth(cls, function, dim, declared_beta=0.0, nonnegative=False):
        return cls(dim, function=function, declared_beta=declared_beta, nonnegative=nonnegative)

    def translated(self, shift):
        """The drift ``x -> b(x + shift)``."""
        shift = np.asarray(shift, float)
        if self.is_atomic:
            return DriftSpec(self.dim, self.locations - shift, self.weights.copy(),
                             declared_beta=self.declared_beta, nonnegative=self.nonnegative)
        f = self.function
        return DriftSpec(self.dim, function=lambda x: f(np.asarray(x) + shift),
                         declared_beta=self.declared_beta, nonnegative=self.nonnegative)

    def scaled(self, c):
        if not self.is_atomic:
            f = self.function
            return DriftSpec(self.dim, function=lambda x: c * f(x),
                             declared_beta=self.declared_beta, nonnegative=self.nonnegative)
        return DriftSpec(self.dim, self.locations.copy(), c * self.weights,
                         declared_beta=self.declared_beta, nonnegative=self.nonnegative)

    def check_gate(self, hurst):
        beta_gate(self.declared_beta, hurst)


@dataclass(frozen=True)
class MollifiedAtoms:
    """Provenance of a grid function built as ``sum_k w_k K_eps(x - a_k)``."""

    locations: np.ndarray
    weights: np.ndarray
    epsilon: float
    kernel: str

    def heat_smoothed(self, t, x):
        """Exact ``G_t`` of the mollified atoms at points `x`; Gaussian kernel only."""
        if self.kernel != "gaussian":
            raise NotImplementedError("closed-form smoothing needs the Gaussian kernel")
        return evaluate_atoms(self.locations, self.weights, self.epsilon + t, x, "gaussian")


@dataclass
class MollifierSchedule:
    """Decreasing mollification scales (space^2 units) for one kernel family."""

    kernel: str
    scales: tuple

    def __post_init__(self):
        kernel_function(self.kernel)
        s = np.asarray(self.scales, dtype=float)
        if s.ndim != 1 or len(s) == 0:
            raise ConfigurationError("schedule needs at least one scale")
        if np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise ConfigurationError("mollification scales must be positive and strictly decreasing")
        self.scales = tuple(float(v) for v in s)

    @classmethod
    def geometric(cls, kernel="gaussian", base=4.0, levels=range(1, 8)):
        """Scales ``base^{-n}`` for n in `levels`; the default base is 4."""
        levels = list(levels)
        return cls(kernel, tuple(float(base) ** (-n) for n in levels))

    def __len__(self):
        return len(self.scales)


def evaluate_atoms(locations, weights, eps, x, kernel="gaussian"):
    """``sum_k weights_k K_eps(x - locations_k)`` at points `x` of shape ``(..., d)``."""
    kfun = kernel_function(kernel)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (weights.shape[1],))
    for loc, w in zip(locations, weights):
        out += kfun(eps, x - loc)[..., None] * w
    return out


def heat_semigroup(f, t):
    """``G_t f`` for a grid function by the exact periodic heat multiplier."""
    from .besov import fourier_multiplier

    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0:
        return GridFunction(f.lattice, f.values.copy())
    r = f.lattice.rfreq_norm()
    return fourier_multiplier(f, np.exp(-0.5 * t * r * r))


def _bump_multiplier(lattice, eps):
    x = lattice.coordinates()
    k = bump_kernel(eps, x)
    k = k / (k.sum() * lattice.cell_volume)
    centred = np.fft.ifftshift(k)
    return np.fft.rfftn(centred) * lattice.cell_volume


def _sample_smooth(spec, lattice):
    f = spec.function
    if isinstance(f, GridFunction):
        if f.lattice != lattice:
            raise ConfigurationError("smooth drift lives on a different lattice")
        return f.values
    v = np.asarray(f(lattice.coordinates()), dtype=float)
    if v.shape == lattice.shape:
        v = v[..., None]
    return np.broadcast_to(v, lattice.shape + (spec.dim,)).copy()


def mollify(spec, epsilon, lattice, kernel="gaussian"):
    """Mollify a drift at scale `epsilon` and sample it on `lattice`.

    Atoms are mollified exactly (closed-form kernel sums); smooth drifts by
    FFT convolution. `spec` may also be a :class:`GridFunction`, which is
    then smoothed by the periodic heat multiplier (Gaussian kernel only).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    kernel_function(kernel)
    if isinstance(spec, GridFunction):
        if kernel != "gaussian":
            raise ConfigurationError("grid functions can only be heat-smoothed")
        out = heat_semigroup(spec, epsilon)
        if isinstance(spec.origin, MollifiedAtoms) and spec.origin.kernel == "gaussian":
            o = spec.origin
            out.origin = MollifiedAtoms(o.locations, o.weights, o.epsilon + epsilon, "gaussian")
        return out
    if spec.dim != lattice.dim:
        raise ConfigurationError(f"drift dimension {spec.dim} does not match lattice dimension {lattice.dim}")
    if spec.is_atomic:
        if not np.all(lattice.contains(spec.locations)):
            raise ConfigurationError("an atom lies outside the lattice box")
        values = evaluate_atoms(spec.locations, spec.weights, epsilon, lattice.coordinates(), kernel)
        origin = MollifiedAtoms(spec.locations, spec.weights, float(epsilon), kernel)
        return GridFunction(lattice, values, origin)
    base = GridFunction(lattice, _sample_smooth(spec, lattice))
    if kernel == "gaussian":
        out = heat_semigroup(base, epsilon)
    else:
        from .besov import fourier_multiplier

        out = fourier_multiplier(base, _bump_multiplier(lattice, epsilon))
    if spec.nonnegative:
        # FFT roundoff can leave -1e-17 where the exact convolution is >= 0
        out.values = np.maximum(out.values, 0.0)
    return out


def lattice_limit(spec, lattice):
    """Lattice representative of the unmollified drift.

    Atoms become point masses of height ``w / h^d`` at the nearest lattice
    point; smooth drifts are sampled directly.
    """
    if not spec.is_atomic:
        return GridFunction(lattice, _sample_smooth(spec, lattice))
    values = np.zeros(lattice.shape + (spec.dim,))
    idx = np.rint((spec.locations + lattice.half_width) / lattice.spacing).astype(int) % lattice.points
    for i, w in zip(idx, spec.weights):
        values[tuple(i)] += w / lattice.cell_volume
    return GridFunction(lattice, values)


def build_approximating_sequence(spec, schedule, lattice):
    """``[mollify(spec, eps_n)]`` along the schedule."""
    return [mollify(spec, eps, lattice, schedule.kernel) for eps in schedule.scales]


def approximation_report(spec, schedule, lattice, beta=None, **kwargs):
    """Run the weak-norm convergence check on the approximating sequence."""
    beta = spec.declared_beta if beta is None else beta
    family = build_approximating_sequence(spec, schedule, lattice)
    return check_beta_minus(family, lattice_limit(spec, lattice), beta, **kwargs)

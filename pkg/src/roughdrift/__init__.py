"""roughdrift: Monte Carlo laboratory for SDEs with distributional drift and fBm noise.

Submodules
----------
fbm       fBm sampling, Volterra kernel and conditional Gaussian laws
besov     Littlewood-Paley blocks and Besov norms on a periodic lattice
drift     drift specifications, mollifiers and regularity gates
solve     batched Euler solver for dX = b(X) dt + dB
sewing    germs, sewing defects and Riemann-sum checks
mc        Monte Carlo estimators, exponent fits and composite experiments
cli       command-line entry point
"""

__version__ = "0.1.0"

from . import besov, drift, fbm, mc, sewing, solve  # noqa: E402
from .errors import BoxExitError, ConfigurationError, HypothesisGateError  # noqa: E402

__all__ = [
    "__version__",
    "besov",
    "drift",
    "fbm",
    "mc",
    "sewing",
    "solve",
    "BoxExitError",
    "ConfigurationError",
    "HypothesisGateError",
]

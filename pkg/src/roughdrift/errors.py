"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid experiment or lattice configuration (CLI exit status 2)."""


class HypothesisGateError(ConfigurationError):
    """A configuration violates a hypothesis the estimates rely on."""


class BoxExitError(RuntimeError):
    """A path left the spatial lattice box.

    Attributes
    ----------
    time : float
        First grid time at which the path was outside the box.
    path_index : int or None
        Index of the offending path inside its batch, if known.
    """

    def __init__(self, time, path_index=None):
        self.time = float(time)
        self.path_index = path_index
        where = "" if path_index is None else f" (path {path_index})"
        super().__init__(
            f"path left the lattice box at t={self.time:.6g}{where}; enlarge the half-width L"
        )

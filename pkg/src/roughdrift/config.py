"""Experiment configuration: one YAML tree per experiment, hashed canonically."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from .drift import DriftSpec, MollifierSchedule, beta_gate
from .errors import ConfigurationError, HypothesisGateError

SUITES = ("moments", "regularization", "sewing", "tightness", "stability", "flagship")


@dataclass
class LatticeConfig:
    half_width: float = 20.0
    points: int = 2**14


@dataclass
class DriftConfig:
    """``kind`` is ``dirac``, ``atoms`` or ``zero``; atoms need locations and weights."""

    kind: str = "dirac"
    locations: list | None = None
    weights: list | None = None
    declared_beta: float | None = None

    def build(self, dim):
        import numpy as np

        if self.kind == "dirac":
            spec = DriftSpec.dirac(dim)
        elif self.kind == "atoms":
            if self.locations is None or self.weights is None:
                raise ConfigurationError("atomic drift needs locations and weights")
            spec = DriftSpec.atoms(self.locations, self.weights)
        elif self.kind == "zero":
            spec = DriftSpec.smooth(lambda x: np.zeros_like(np.asarray(x, float)), dim, declared_beta=0.0,
                                    nonnegative=True)
        else:
            raise ConfigurationError(f"unknown drift kind {self.kind!r}")
        if self.declared_beta is not None:
            spec.declared_beta = float(self.declared_beta)
        if spec.dim != dim:
            raise ConfigurationError(f"drift dimension {spec.dim} does not match d={dim}")
        return spec


@dataclass
class ScheduleConfig:
    kernel: str = "gaussian"
    scales: list = field(default_factory=lambda: [2.0**-k for k in range(2, 7)])

    def build(self):
        return MollifierSchedule(self.kernel, tuple(self.scales))


@dataclass
class LagWindow:
    k_min: int = 1
    k_max: int = 8
    window_factor: float = 32.0


@dataclass
class ExperimentConfig:
    """Everything a run needs; the hash of its canonical form names the outputs."""

    name: str = "experiment"
    hurst: float = 0.3
    dim: int = 1
    horizon: float = 1.0
    n_steps: int = 2048
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    epsilon: float = 1e-3
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    schedule_b: ScheduleConfig = field(default_factory=lambda: ScheduleConfig(kernel="bump"))
    m_values: list = field(default_factory=lambda: [2.0])
    lags: LagWindow = field(default_factory=LagWindow)
    gamma: float | None = None
    x0: list | None = None
    n_paths: int = 1000
    master_seed: int = 0
    suites: list = field(default_factory=lambda: ["moments"])

    def __post_init__(self):
        for name, typ in (("lattice", LatticeConfig), ("drift", DriftConfig), ("schedule", ScheduleConfig),
                          ("schedule_b", ScheduleConfig), ("lags", LagWindow)):
            val = getattr(self, name)
            if isinstance(val, dict):
                setattr(self, name, _from_dict(typ, val))
        self.validate()

    def validate(self):
        if not 0 < self.hurst <= 0.5:
            raise ConfigurationError(f"hurst must lie in (0, 1/2], got {self.hurst}")
        if self.dim < 1 or self.n_steps < 2 or self.n_paths < 1 or self.horizon <= 0:
            raise ConfigurationError("dim, n_steps and n_paths must be positive and horizon > 0")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown or not self.suites:
            raise ConfigurationError(f"suites must be a nonempty subset of {SUITES}, got {self.suites}")
        spec = self.drift_spec()
        beta_gate(spec.declared_beta, self.hurst)
        if "flagship" in self.suites and not self.hurst < 1.0 / (2 * self.dim):
            raise HypothesisGateError(
                f"finite-measure gate (H < 1/(2d)): d={self.dim} requires H<{1.0 / (2 * self.dim):g}, "
                f"got H={self.hurst:g}"
            )
        if self.x0 is not None and len(self.x0) != self.dim:
            raise ConfigurationError("x0 must have one entry per dimension")

    def drift_spec(self):
        return self.drift.build(self.dim)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("configuration must be a mapping")
        return _from_dict(cls, data)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed configuration: {exc}".splitlines()[0]) from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_yaml(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc.strerror}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml())

    def config_hash(self):
        """sha256 of the canonical JSON form (sorted keys, repr floats)."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _from_dict(cls, data):
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"bad {cls.__name__}: {exc}") from None

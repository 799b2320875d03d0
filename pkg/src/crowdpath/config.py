"""Model parameters and the ``key=value`` config file format.

Defaults reproduce the published parameter table (7 m x 3.5 m window,
0.2 m cells, initial weight 5, candidate bonuses 30/15/10, destination
weights 0.3/0.15/0.10/0.80, personality bonuses 20/10/-10, 28
representatives, delta = 2). Everything else is an artifact-level knob.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import ConfigError

N_FACTOR_REFERENCES = ("surrounding", "self")


@dataclass(frozen=True)
class Config:
    # local window, meters; the agent sits anchor_fraction of the length from the rear
    window_length: float = 7.0
    window_width: float = 3.5
    anchor_fraction: float = 0.25

    # time discretisation (steps of dt seconds)
    f_obs: int = 8
    p_pred: int = 8
    dt: float = 0.4

    # feature map
    cell_size: float = 0.2
    w_initial: float = 5.0
    k: int = 3
    alpha: float = 30.0
    beta: float = 15.0
    gamma: float = 10.0
    ws1: float = 0.30
    ws2: float = 0.15
    ws3: float = 0.10
    wcs: float = 0.80
    dest_normalize: bool = True
    dcs_scale: bool = True
    eps_dest: float = 1e6
    mu: float = 20.0
    nu: float = 10.0
    eta_near: float = -10.0
    n_factor_reference: str = "surrounding"
    use_personality: bool = True

    # retrieval
    m_rep: int = 28
    delta: float = 2.0
    key_unit: float = 0.125       # meters of central distance per unit of delta
    sigma: float = 0.5
    sim_w_central: float = 0.5
    sim_w_neighbors: float = 0.35
    sim_w_obstacles: float = 0.15
    v_min: float = 0.05

    # planner
    kappa: float = 10.0

    # database building / reproducibility
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                if not (f.name == "delta" and value == math.inf):
                    raise ConfigError(f"{f.name} must be finite, got {value!r}")
        if self.cell_size <= 0:
            raise ConfigError("cell_size must be positive")
        if self.window_length <= 0 or self.window_width <= 0:
            raise ConfigError("window dimensions must be positive")
        if not 0.0 <= self.anchor_fraction < 1.0:
            raise ConfigError("anchor_fraction must lie in [0, 1)")
        if self.f_obs < 2:
            raise ConfigError("f_obs must be at least 2")
        if self.p_pred < 1:
            raise ConfigError("p_pred must be at least 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.m_rep < 1:
            raise ConfigError("m_rep must be at least 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.key_unit <= 0 or self.sigma <= 0 or self.v_min <= 0:
            raise ConfigError("key_unit, sigma and v_min must be positive")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.n_factor_reference not in N_FACTOR_REFERENCES:
            raise ConfigError(f"n_factor_reference must be one of {N_FACTOR_REFERENCES}")

    @property
    def grid_shape(self):
        """(rows, cols) of the feature map."""
        return (_ceil_div(self.window_width, self.cell_size),
                _ceil_div(self.window_length, self.cell_size))

    @property
    def anchor(self):
        return (self.anchor_fraction * self.window_length, 0.5 * self.window_width)

    def rank_bonus(self, rank):
        """Candidate-layer bonus for a 1-based rank; ranks past 3 reuse gamma."""
        return (self.alpha, self.beta, self.gamma)[min(rank, 3) - 1]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{name: _coerce(known[name], v) for name, v in values.items()})

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        return "".join(f"{k}={_format(v)}\n" for k, v in self.to_dict().items())


def _ceil_div(length, cell):
    # tolerate representation error such as 7 / 0.2 -> 35.000000000000004
    return max(1, math.ceil(length / cell - 1e-9))


def _coerce(field, value):
    if not isinstance(value, str):
        return value
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {field.name}: {value!r}") from None
    return value


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)

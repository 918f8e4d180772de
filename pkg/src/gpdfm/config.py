"""Flat ``key = value`` model configuration.

Lines starting with ``#`` are comments. List values are comma separated;
matrices (loading mask, groups) separate rows with ``;``. Unknown keys are
rejected with an error naming the key.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import basis as gpb
from .exceptions import ConfigError
from .measurement import MeasurementPriors


def _ints(text):
    text = str(text).strip()
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v) if text else ()


def _floats(text):
    text = str(text).strip()
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v) if text else ()


def _strs(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _rows(text):
    """'1,0;1,1' -> ((1, 0), (1, 1)); a row may also be written '10'."""
    text = str(text).strip()
    if not text or text.lower() == "none":
        return None
    out = []
    for row in text.split(";"):
        row = row.strip()
        if not row:
            continue
        out.append(_ints(row) if "," in row else tuple(int(c) for c in row))
    return tuple(out)


def _groups(text):
    text = str(text).strip()
    if not text or text.lower() == "none":
        return None
    return tuple(_ints(row) for row in text.split(";") if row.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "auto") else float(t)


@dataclass
class ModelConfig:
    """Model, prior and run settings; every field is a config key."""

    name: str = "model"
    D: int = 2
    P: int = 4
    M_tilde: int = 8
    kernel: str = "additive"
    sv: bool = False
    q: int = 0
    mask: tuple | None = None
    normalization_rows: tuple = ()
    normalization_var: float = 1e-4
    groups: tuple | None = None
    H: int = 20
    tau1: int = 5
    nu_r: float = 3.0
    S_r: float = 0.3
    nu_xi: float = 0.5
    S_xi: float = 0.5
    nu_ell: float = 0.5
    S_ell: float = 0.5
    r_shape_rule: str = "conjugate"
    theta_update: str = "collapsed"
    mh_step_init: float = 0.3
    resampling: str = "multinomial"
    iterations: int = 15000
    burn_in: int = 5000
    thin: int = 2
    seed: int = 0
    L: float | None = None
    L_scale: float = 1.2
    cap: int = 70000
    diagnostics_every: int = 100
    clip_factor: float = 10.0
    var_stationary: bool = False
    # forecasting and evaluation
    targets: tuple = ()
    horizons: tuple = (1, 4, 8)
    eval_start: int = 0
    eval_end: int = 0
    benchmark: str = "self"
    harvey: bool = True
    # structural analysis
    girf_sizes: tuple = (-2.0, -1.0, 1.0, 2.0)
    girf_horizon: int = 12
    girf_nsim: int = 200
    girf_every: int = 4
    girf_max_draws: int = 200
    # simulation and Geweke test
    sim_T: int = 200
    sim_N: int = 20
    sim_family: str = "gp"
    geweke_reps: int = 20000

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.kernel = gpb.canonical_kernel(self.kernel)
        if self.D < 1:
            raise ConfigError("D must be at least 1")
        if self.P < 1:
            raise ConfigError("P must be at least 1")
        if self.kernel != "linear" and self.M_tilde < 1:
            raise ConfigError("M_tilde must be at least 1")
        if self.kernel == "multiplicative" and self.M_tilde ** self.D > self.cap:
            raise ConfigError(f"M_tilde**D = {self.M_tilde ** self.D} exceeds cap={self.cap}")
        if self.q not in (0, 1, 2):
            raise ConfigError("q must be 0, 1 or 2")
        if self.H < 1 or self.tau1 < 1:
            raise ConfigError("H and tau1 must be positive")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.burn_in < 0 or self.iterations <= self.burn_in:
            raise ConfigError("iterations must exceed burn_in")
        if self.r_shape_rule not in ("conjugate", "literal"):
            raise ConfigError("r_shape_rule must be 'conjugate' or 'literal'")
        if self.theta_update not in ("collapsed", "conditional"):
            raise ConfigError("theta_update must be 'collapsed' or 'conditional'")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError("resampling must be 'multinomial' or 'systematic'")
        for key in ("nu_r", "S_r", "nu_xi", "S_xi", "nu_ell", "S_ell", "mh_step_init",
                    "normalization_var", "L_scale", "clip_factor"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.L is not None and not self.L > 0:
            raise ConfigError("L must be positive")
        if self.mask is not None:
            if any(len(row) != self.D for row in self.mask):
                raise ConfigError(f"every mask row needs D={self.D} entries")
            if any(v not in (0, 1) for row in self.mask for v in row):
                raise ConfigError("mask entries must be 0 or 1")
        if self.groups is not None and self.normalization_rows:
            if len(self.groups) != len(self.normalization_rows):
                raise ConfigError("need one group per normalization row")
        if any(h < 0 for h in self.horizons):
            raise ConfigError("horizons must be nonnegative")
        if self.girf_horizon < 1 or self.girf_nsim < 1 or self.girf_every < 1:
            raise ConfigError("girf_horizon, girf_nsim and girf_every must be positive")

    # -- derived objects -----------------------------------------------------

    def measurement_priors(self):
        return MeasurementPriors(nu_r=self.nu_r, S_r=self.S_r, nu_xi=self.nu_xi, S_xi=self.S_xi,
                                 nu_ell=self.nu_ell, S_ell=self.S_ell,
                                 r_shape_rule=self.r_shape_rule, theta_update=self.theta_update)

    def basis_spec(self, L):
        return gpb.BasisSpec(self.kernel, self.D, self.M_tilde, L, cap=self.cap)

    def mask_array(self, N):
        if self.mask is None:
            return np.ones((N, self.D), dtype=bool)
        m = np.array(self.mask, dtype=bool)
        if m.shape != (N, self.D):
            raise ConfigError(f"mask has shape {m.shape}, panel needs {(N, self.D)}")
        return m

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    # -- text round trip -----------------------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kwargs[key] = _PARSERS[key](raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for config key {key!r}: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_key_values(text.splitlines()))

    @classmethod
    def from_file(cls, path, overrides=()):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        mapping = parse_key_values(path.read_text().splitlines())
        mapping.update(parse_key_values(overrides, source="--override"))
        return cls.from_mapping(mapping)

    def with_overrides(self, overrides):
        mapping = {f.name: getattr(self, f.name) for f in fields(self)}
        mapping.update(parse_key_values(overrides, source="--override"))
        return type(self).from_mapping(mapping)


def parse_key_values(lines, source="config"):
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {n}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source} line {n}: empty key")
        out[key] = value
    return out


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(",".join(str(x) for x in row) for row in v)
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(ModelConfig)}
_PARSERS = {}
for _name, _typ in _TYPES.items():
    if _name == "mask":
        _PARSERS[_name] = _rows
    elif _name == "groups":
        _PARSERS[_name] = _groups
    elif _name in ("normalization_rows", "horizons"):
        _PARSERS[_name] = _ints
    elif _name == "girf_sizes":
        _PARSERS[_name] = _floats
    elif _name == "targets":
        _PARSERS[_name] = _strs
    elif _name == "L":
        _PARSERS[_name] = _opt_float
    elif _typ == "bool":
        _PARSERS[_name] = _bool
    elif _typ == "int":
        _PARSERS[_name] = lambda s: int(float(s)) if float(s).is_integer() else int(s)
    elif _typ == "float":
        _PARSERS[_name] = float
    else:
        _PARSERS[_name] = str

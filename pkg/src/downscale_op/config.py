"""Experiment configuration: a flat ``key = value`` text file.

Lines are ``key = value``; ``#`` starts a comment; lists are comma
separated. Unknown keys are rejected. :func:`format_config` writes the
canonical form (every key, in field order), and parsing it back gives an
equal config.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .coefficients import MULTISCALE_EPS
from .errors import ConfigError

EXPERIMENTS = ("elliptic-1d", "elliptic-2d-fast", "elliptic-2d-multiscale")
SWEEPS = ("patch-size", "n-observations", "noisy-bayes")

_DEFAULTS = {
    "elliptic-1d": {"epsilon": 1 / 16, "forcing": 0.5, "fine_n": 4096, "coarse_n": 64, "eval_n": 1024,
                    "observation_counts": (16,)},
    "elliptic-2d-fast": {"epsilon": 1 / 8, "forcing": 1.0, "fine_n": 512, "coarse_n": 64, "eval_n": 100,
                         "observation_counts": (49,)},
    "elliptic-2d-multiscale": {"epsilon": 0.0, "forcing": 1.0, "fine_n": 512, "coarse_n": 16,
                               "eval_n": 100, "observation_counts": (49,)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "elliptic-1d"
    sweep: str = "patch-size"
    # problem
    epsilon: float = None  # single scale (1d / 2d-fast)
    multiscale_eps: tuple = MULTISCALE_EPS
    kappa_offset: float = 2.0
    forcing: float = None
    # discretisation
    fine_n: int = None
    coarse_n: int = None
    cell_n: int = 128
    eval_n: int = None
    # data
    patch_sizes: tuple = (1, 3, 5, 7, 9)
    patch_spacing: float = 0.0  # 0 means a quarter of the coarse grid spacing
    observation_counts: tuple = None
    noise_sigma: float = 0.0
    normalize: bool = True
    # network and training
    width: int = 64
    depth: int = 2
    K: int = 64
    epochs: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # replica-exchange Langevin
    tau_low: float = 1e-5
    tau_high: float = 1e-2
    langevin_rate: float = 2e-3
    swap_interval: int = 50
    swap_correction: float = 0.0
    burn_in: int = 2000
    thin: int = 20
    ensemble_size: int = 100
    prior_tau: float = 10.0
    # protocol
    seeds: int = 20
    root_seed: int = 0
    out_dir: str = "runs"
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        for k, v in _DEFAULTS[self.experiment].items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        if self.experiment == "elliptic-2d-multiscale":
            object.__setattr__(self, "epsilon", 0.0)
        elif not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if any(not e > 0 for e in self.multiscale_eps) or len(self.multiscale_eps) != 8:
            raise ConfigError("multiscale_eps needs eight positive values")
        if not self.patch_sizes or any(p < 1 or p % 2 == 0 for p in self.patch_sizes):
            raise ConfigError(f"patch sizes must be odd and positive, got {self.patch_sizes}")
        dim = self.dim
        for c in self.observation_counts:
            side = round(c ** (1.0 / dim))
            if c < 1 or side**dim != c:
                raise ConfigError(f"observation count {c} is not a perfect power of {dim}")
        if self.sweep == "noisy-bayes" and not self.noise_sigma > 0:
            raise ConfigError("the noisy-bayes sweep needs noise_sigma > 0")
        if self.seeds < 1 or self.threads < 1 or self.epochs < 1:
            raise ConfigError("seeds, threads and epochs must be at least 1")
        if self.patch_spacing < 0:
            raise ConfigError("patch_spacing must be non-negative")

    @property
    def dim(self):
        return 1 if self.experiment == "elliptic-1d" else 2

    @property
    def sweep_values(self):
        if self.sweep == "patch-size":
            return tuple(sorted(self.patch_sizes))
        return tuple(sorted(self.observation_counts))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _field_type(name):
    default = ExperimentConfig.__dataclass_fields__[name].default
    if name in ("epsilon", "forcing"):
        return float
    if name in ("fine_n", "coarse_n", "eval_n"):
        return int
    if name == "observation_counts":
        return (int,)
    if name == "patch_sizes":
        return (int,)
    if name == "multiscale_eps":
        return (float,)
    return type(default)


def _parse_value(name, text):
    kind = _field_type(name)
    # tolerate TOML-style brackets and quotes around plain values
    text = text.strip().strip("[]").strip().strip("\"'")
    try:
        if isinstance(kind, tuple):
            return tuple(kind[0](_number(v)) for v in text.split(",") if v.strip())
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            v = _number(text)
            if v != int(v):
                raise ValueError(text)
            return int(v)
        if kind is float:
            return float(_number(text))
        return text
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def _number(text):
    """Accepts plain numbers and simple fractions such as ``1/16``."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_config(text, **overrides):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in parser["experiment"].items():
        name = key.strip().replace("-", "_")
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[name] = _parse_value(name, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), **overrides)


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg):
    """Canonical text form: every key in field order."""
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))

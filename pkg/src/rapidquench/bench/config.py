"""Experiment configuration and its flat ``key = value`` file format.

Example::

    # pre-anneal sweep
    experiment = preanneal-scaling
    sizes = 5, 6, 7, 8, 9
    instances = 100
    t1_values = 0, 0.2, 0.4

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import QuenchError

EXPERIMENTS = (
    "two-stage",
    "biased",
    "preanneal-scaling",
    "gamma-dyn-scaling",
    "heuristic-vs-linear",
    "gap-vs-dyn",
)
ESTIMATORS = ("trapezoid", "random")


def _default_t1_values() -> list[float]:
    return [float(x) for x in np.linspace(0.0, 4.0, 21)]


@dataclass
class ExperimentConfig:
    experiment: str
    sizes: list[int] = field(default_factory=lambda: [5, 6, 7, 8, 9])
    instances: int = 100
    seed: int = 0
    sigma: float = 1.0
    convention: str = "upper"
    instances_file: str = ""
    # two-stage and biased walks
    gamma1: float = 4.0
    gamma2: float = 1.0
    t1: float = 10.0
    t2: float = 10.0
    theta: float = math.pi / 8
    stage_points: int = 201
    # pre-anneal sweep; the walk stage lasts window_hi / sqrt(n)
    t1_values: list[float] = field(default_factory=_default_t1_values)
    # short-time success window (window_lo / sqrt(n), window_hi / sqrt(n))
    window_lo: float = 12.5
    window_hi: float = 17.5
    window_points: int = 201
    estimator: str = "trapezoid"
    random_times: int = 10_000
    # gamma-dyn-scaling: grid gamma_dyn * linspace(grid_lo, grid_hi, gamma_points); 0 disables
    gamma_points: int = 20
    grid_lo: float = 0.1
    grid_hi: float = 2.0
    # heuristic-vs-linear
    t_f: float = 2.0
    knots: int = 10
    dyn_floor: float = 1e-3
    # gap-vs-dyn
    s_points: int = 201
    tol: float = 1e-9
    workers: int = 1
    output: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise QuenchError("invalid-config", f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.instances < 1:
            raise QuenchError("invalid-config", "instances must be >= 1")
        if not self.sizes or any(n < 2 for n in self.sizes):
            raise QuenchError("invalid-config", "sizes must be a non-empty list of n >= 2")
        for key in ("t1", "t2", "t_f", "sigma", "tol", "window_lo", "window_hi"):
            if not getattr(self, key) > 0:
                raise QuenchError("invalid-config", f"{key} must be > 0")
        if any(t < 0 for t in self.t1_values):
            raise QuenchError("invalid-config", "t1_values must be >= 0")
        if self.window_hi <= self.window_lo:
            raise QuenchError("invalid-config", "window_hi must exceed window_lo")
        if self.estimator not in ESTIMATORS:
            raise QuenchError("invalid-config", f"estimator must be one of {ESTIMATORS}")
        if self.workers < 1:
            raise QuenchError("invalid-config", "workers must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise QuenchError("invalid-config", f"unknown keys: {', '.join(sorted(unknown))}")
        if "experiment" not in d:
            raise QuenchError("invalid-config", "missing key: experiment")
        return cls(**{k: _coerce(k, v) for k, v in d.items()})

    def replace(self, **overrides) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(d)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = typing.get_type_hints(ExperimentConfig)


def _coerce(key: str, value):
    """Convert a raw (string or JSON) value to the field's declared type."""
    kind = _TYPES.get(key)
    try:
        if kind in (list[int], list[float]):
            elem = int if kind == list[int] else float
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            return [elem(v) for v in value]
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise QuenchError("invalid-config", f"bad value for {key}: {value!r}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QuenchError("invalid-config", f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise QuenchError("invalid-config", f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise QuenchError("io-error", str(exc)) from exc
    d = parse_config_text(text)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)

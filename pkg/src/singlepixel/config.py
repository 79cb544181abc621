"""Experiment configuration: schema, strict loading, overrides and echo.

Config files are YAML (JSON works too, being a subset).  Every key has a
default; unknown keys are rejected.  ``resolved_dict`` materializes all
defaults so that the echo written next to every output reproduces the run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .geometry import DetectorSpec, generate_sources
from .metrics import SsimParams
from .phantom import PRESETS, ShellPhantom
from .solver import DRParams, InnerSettings

__all__ = ["SCHEMA_VERSION", "ConfigError", "ExperimentConfig", "load_config", "apply_overrides"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    n: int = 20
    n_sim: int | None = None


@dataclass
class SourcesConfig:
    count: int = 1030
    radius: float = 3.0


@dataclass
class DetectorConfig:
    distance: float = 6.0
    side: float = 5.0
    rays_per_axis: int = 10


@dataclass
class InnerConfig:
    max_iters: int = 200
    tol: float = 1e-9
    memory: int = 10


@dataclass
class SolverConfig:
    alpha: float = 0.03
    gamma: float = 1.0
    max_iters: int = 5000
    f_max: float = 1.0
    paper_literal_update: bool = False
    early_stop: bool = False
    inner: InnerConfig = field(default_factory=InnerConfig)


@dataclass
class SsimConfig:
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None
    window: int = 7
    sigma: float = 1.5


@dataclass
class SweepConfig:
    noise_levels: list[float] = field(default_factory=lambda: [0.005, 0.01, 0.02])
    alphas: list[float] = field(default_factory=lambda: [0.01, 0.03, 0.1])
    workers: int | None = None


@dataclass
class VerifyConfig:
    tol: float = 0.05


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    phantom: Any = "two-shell"
    grid: GridConfig = field(default_factory=GridConfig)
    sources: SourcesConfig = field(default_factory=SourcesConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    noise_level: float = 0.01
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    ssim: SsimConfig = field(default_factory=SsimConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: str = "out"

    # -- derived objects -------------------------------------------------

    def phantom_model(self) -> ShellPhantom:
        spec = self.phantom
        if isinstance(spec, str):
            if spec not in PRESETS:
                raise ConfigError(f"phantom: unknown preset {spec!r}; choose from {sorted(PRESETS)}")
            return PRESETS[spec]
        if isinstance(spec, dict) and set(spec) == {"shells"}:
            try:
                return ShellPhantom.from_pairs(spec["shells"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"phantom.shells: {exc}") from None
        raise ConfigError("phantom must be a preset name or {shells: [[radius, density], ...]}")

    def detector_spec(self) -> DetectorSpec:
        d = self.detector
        return DetectorSpec(d.distance, d.side, d.rays_per_axis)

    def source_positions(self):
        return generate_sources(self.sources.count, self.sources.radius)

    def dr_params(self) -> DRParams:
        s = self.solver
        return DRParams(
            alpha=s.alpha,
            gamma=s.gamma,
            max_iters=s.max_iters,
            inner=InnerSettings(s.inner.max_iters, s.inner.tol, s.inner.memory),
            f_max=s.f_max,
            paper_literal_update=s.paper_literal_update,
            early_stop=s.early_stop,
        )

    def ssim_params(self) -> SsimParams:
        s = self.ssim
        return SsimParams(s.k1, s.k2, s.data_range, s.window, s.sigma)

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {self.schema_version} is not supported (expected {SCHEMA_VERSION})")
        self.phantom_model()
        if self.grid.n < 1:
            raise ConfigError(f"grid.n must be >= 1, got {self.grid.n}")
        if self.grid.n_sim is not None and self.grid.n_sim < self.grid.n:
            raise ConfigError(f"grid.n_sim ({self.grid.n_sim}) must be >= grid.n ({self.grid.n})")
        if self.sources.count < 1:
            raise ConfigError(f"sources.count must be >= 1, got {self.sources.count}")
        if not self.sources.radius > 1:
            raise ConfigError(f"sources.radius must exceed 1, got {self.sources.radius}")
        if not self.noise_level >= 0:
            raise ConfigError(f"noise_level must be >= 0, got {self.noise_level}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")
        if any(x < 0 for x in self.sweep.noise_levels) or any(a < 0 for a in self.sweep.alphas):
            raise ConfigError("sweep noise levels and alphas must be >= 0")
        if self.sweep.workers is not None and self.sweep.workers < 1:
            raise ConfigError("sweep.workers must be >= 1")
        if not self.verify.tol >= 0:
            raise ConfigError("verify.tol must be >= 0")
        try:
            det = self.detector_spec()
            det.check(self.sources.radius)
            self.dr_params()
            self.ssim_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    # -- serialization ---------------------------------------------------

    def resolved_dict(self) -> dict:
        return dataclasses.asdict(self)

    def geometry_digest(self) -> str:
        """Hash of everything that fixes the measurement geometry."""
        blob = json.dumps(
            {"sources": dataclasses.asdict(self.sources), "detector": dataclasses.asdict(self.detector)},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def echo(self) -> dict:
        out = self.resolved_dict()
        out["geometry_digest"] = self.geometry_digest()
        return out


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        else:
            kwargs[name] = _coerce(value, str(f.type), sub)
    return cls(**kwargs)


def _coerce(value, annotation: str, path):
    """Check ``value`` against a field annotation such as ``int | None`` or ``list[float]``."""
    kinds = [k.strip() for k in annotation.split("|")]
    if value is None:
        if "None" in kinds:
            return None
        raise ConfigError(f"{path}: a value is required")
    kind = kinds[0]
    if kind == "Any":
        return value
    if kind.startswith("list["):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [_coerce(v, kind[5:-1], path) for v in value]
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms without a dot (1e-9) as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {annotation}")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p} is not a section")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "").validate()


def load_config(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)

"""Experiment configuration: a YAML document validated by pydantic.

Unknown keys are rejected, and every validation error is reported with the
dotted path of the offending field, e.g. ``flow_params.a``.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..curve import GridSpec
from ..errors import DispflowError, ParameterError
from ..evolver import StepperConfig
from ..flow import FlowParams, preset
from ..gauge import GaugeParams

EXPERIMENTS = ("flow", "linear", "energy_audit", "epsilon_sweep", "delta_sweep",
               "twin", "smoothing", "commutator")


class ConfigError(DispflowError, ValueError):
    """Configuration failed validation; the message names the field path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridModel(_Strict):
    num_points: int = 32
    domain_length: float = 2.0 * math.pi
    deriv_scheme: Literal["spectral", "fd"] = "spectral"
    fd_order: int = 8


class FlowModel(_Strict):
    preset: Literal["integrable_PDL", "fukumoto_filament", "schrodinger_map", "custom"] = "custom"
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None
    epsilon: float = 0.0
    delta: float = 0.0
    form: Literal["intrinsic", "extrinsic_model", "embedded"] = "intrinsic"


class GaugeModel(_Strict):
    M: Optional[float] = None
    k: int = 4


class StepperModel(_Strict):
    dt: Optional[float] = None
    method: Literal["rk", "picard"] = "rk"
    picard_max_iters: int = 25
    picard_tol: float = 1e-12
    projection_mode: Literal["every_step", "never", "threshold"] = "every_step"
    projection_threshold: float = 1e-10
    linear_splitting: Literal["delta_only", "delta_and_epsilon"] = "delta_only"
    snapshot_every: Optional[int] = None
    snapshots: int = Field(20, ge=2)
    cfl_constant: float = 2.5
    cfl_action: Literal["warn", "reject", "ignore"] = "warn"


class InitialDataModel(_Strict):
    kind: Literal["great_circle", "perturbed_great_circle", "gaussian_twist", "from_file"] = "great_circle"
    amplitude: float = 0.01
    mode: int = 2
    width: float = 0.5
    center: Optional[float] = None
    path: Optional[str] = None

    @field_validator("amplitude")
    @classmethod
    def _small(cls, v):
        if not abs(v) < 1:
            raise ValueError("amplitude must satisfy |amplitude| < 1")
        return v


class SweepModel(_Strict):
    epsilons: List[float] = [0.1, 0.05, 0.025]
    deltas: List[float] = [0.04, 0.02, 0.01]


class TwinModel(_Strict):
    amplitude: float = 1e-4
    width: float = 0.5
    center: Optional[float] = None


class LinearModel(_Strict):
    a: float = 1.0
    regime: Literal["hypothesis", "probe", "free"] = "hypothesis"
    carriers: List[float] = [16.0, 32.0, 64.0]
    num_points: int = 4096
    domain_length: float = 48.0
    steps: int = 2000
    snapshots: int = 500
    packet_center: float = 6.0
    packet_width: float = 2.0
    travel: float = 25.0
    damping_center: float = 23.0
    drift_center: float = 13.0
    drift_amplitude: float = 0.5
    probe_gamma: float = 0.5


class SmoothingModel(_Strict):
    a: float = 1.0
    delta_w: float = 2.0
    samples: int = 8
    carriers: List[float] = [8.0, 16.0, 32.0, 64.0]
    num_points: int = 2048
    domain_length: float = 40.0
    time_samples: int = 512


class CommutatorModel(_Strict):
    a: float = 1.0
    carriers: List[float] = [32.0, 64.0, 128.0]
    radii: List[float] = [8.0, 16.0]
    num_points: int = 2048
    domain_length: float = 8.0 * math.pi
    envelope_width: float = 2.0


class ExperimentConfig(_Strict):
    experiment: Literal["flow", "linear", "energy_audit", "epsilon_sweep", "delta_sweep",
                        "twin", "smoothing", "commutator"] = "flow"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: str = "runs/out"
    T: float = 0.1
    threads: int = Field(1, ge=1)
    grid: GridModel = GridModel()
    flow_params: FlowModel = FlowModel()
    gauge_params: GaugeModel = GaugeModel()
    stepper: StepperModel = StepperModel()
    initial_data: InitialDataModel = InitialDataModel()
    sweep: SweepModel = SweepModel()
    twin: TwinModel = TwinModel()
    linear: LinearModel = LinearModel()
    smoothing: SmoothingModel = SmoothingModel()
    commutator: CommutatorModel = CommutatorModel()

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_validation(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data):
    """Validate a mapping into an ExperimentConfig (ConfigError on failure)."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None
    # cross-field invariants enforced by the library types
    build_grid(cfg)
    build_flow_params(cfg)
    build_gauge_params(cfg)
    return cfg


def apply_overrides(data, overrides):
    """Apply ``key.sub=value`` overrides (values parsed as YAML scalars)."""
    data = dict(data or {})
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = {}
            elif not isinstance(nxt, dict):
                raise ConfigError(f"{key}: {part!r} is not a section")
            node[part] = dict(nxt)
            node = node[part]
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path=None, overrides=(), **top):
    data = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"<file>: not valid YAML: {exc}") from None
    data = apply_overrides(data, overrides)
    for key, value in top.items():
        if value is not None:
            data[key] = value
    return parse_config(data)


def build_grid(cfg):
    g = cfg.grid
    try:
        return GridSpec(g.num_points, g.domain_length, g.deriv_scheme, g.fd_order)
    except (ParameterError, ValueError) as exc:
        raise ConfigError(f"grid: GridSpec invariant violated: {exc}") from None


def build_flow_params(cfg):
    f = cfg.flow_params
    try:
        if f.preset != "custom":
            for name in ("a", "b", "c"):
                if getattr(f, name) is not None:
                    raise ParameterError(
                        f"{name} is fixed by preset {f.preset!r}; use preset 'custom'")
            return preset(f.preset, epsilon=f.epsilon, delta=f.delta, form=f.form)
        a = 1.0 if f.a is None else f.a
        return FlowParams(a=a, b=f.b or 0.0, c=f.c or 0.0, epsilon=f.epsilon,
                          delta=f.delta, form=f.form)
    except ParameterError as exc:
        msg = str(exc)
        field = msg.split(":", 1)[0].split(".")[-1] if msg.startswith("FlowParams.") else None
        path = f"flow_params.{field}" if field else "flow_params"
        raise ConfigError(f"{path}: FlowParams invariant violated: {msg}") from None


def build_gauge_params(cfg, p=None):
    g = cfg.gauge_params
    if p is None:
        p = build_flow_params(cfg)
    M = g.M if g.M is not None else 10.0 * abs(p.a)
    try:
        return GaugeParams(M=M, k=g.k)
    except ParameterError as exc:
        raise ConfigError(f"gauge_params: GaugeParams invariant violated: {exc}") from None


def build_stepper(cfg, dt):
    s = cfg.stepper
    try:
        return StepperConfig(
            dt=dt, method=s.method, picard_max_iters=s.picard_max_iters,
            picard_tol=s.picard_tol, projection_mode=s.projection_mode,
            projection_threshold=s.projection_threshold,
            linear_splitting=s.linear_splitting,
            snapshot_every=s.snapshot_every or 1, cfl_constant=s.cfl_constant,
            cfl_action=s.cfl_action)
    except ParameterError as exc:
        raise ConfigError(f"stepper: StepperConfig invariant violated: {exc}") from None

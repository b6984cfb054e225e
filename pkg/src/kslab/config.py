"""JSON run configuration with strict schema validation.

Unknown keys are rejected at every level so that typos such as ``chi0``
for ``chi`` fail loudly instead of silently falling back to defaults.
"""

import copy
import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigError, DomainError
from .model import (
    ConstantPlusCosine,
    ConstantPlusRandomNoise,
    GaussianBump,
    InitialData,
    ModelParams,
    SensitivitySpec,
    build_initial_data,
)
from .solver.grid import Grid
from .solver.scheme import SolverConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SensitivityCfg(_Strict):
    kind: Literal["power_law", "scaled_power_law"] = "power_law"
    scale: float = 1.0


class ModelCfg(_Strict):
    chi: float
    a: float
    k: float
    dim_n: int = 2
    sensitivity: SensitivityCfg = SensitivityCfg()


class GridCfg(_Strict):
    n_cells: List[int]
    lengths: List[float]


class CosineCfg(_Strict):
    kind: Literal["constant_plus_cosine"]
    mean: float
    amplitude: float = 0.0
    modes: List[int] = [1]


class NoiseCfg(_Strict):
    kind: Literal["constant_plus_random_noise"]
    mean: float
    amplitude: float = 0.0
    seed: Optional[int] = None


class GaussianCfg(_Strict):
    kind: Literal["gaussian_bump"]
    mass: float
    center: List[float] = [0.5]
    width: float = 0.1
    floor: float = 0.0


FieldCfg = Annotated[Union[CosineCfg, NoiseCfg, GaussianCfg], Field(discriminator="kind")]


class InitialDataCfg(_Strict):
    u0: FieldCfg
    v0: FieldCfg


class SolverCfg(_Strict):
    dt_init: float = 1e-3
    dt_max: float = 1e-3
    cfl_safety: float = 0.45
    t_end: float = 50.0
    output_stride: int = 10
    tol_conv: float = 1e-8
    divergence_factor: float = 1e3
    reaction: Literal["implicit", "explicit"] = "implicit"
    ordering: Literal["u_then_v", "v_then_u"] = "u_then_v"
    max_steps: int = 2_000_000
    cg_rtol: float = 1e-12


class DiagnosticsCfg(_Strict):
    tail_fraction: float = 0.25
    c0: float = 0.05
    chi0: Optional[float] = None
    K1: Optional[float] = None
    K5: Optional[float] = None
    K: Optional[float] = None


class TheoryCfg(_Strict):
    chi0: Optional[float] = None
    eta_tilde: Optional[float] = None
    M: Optional[float] = None
    v_star: Optional[float] = None
    M0: Optional[float] = None
    mass_independent: bool = False


class LogRangeCfg(_Strict):
    start: float
    stop: float
    num: int


class SweepCfg(_Strict):
    chi: Union[List[float], LogRangeCfg]
    M: List[float]
    repetitions: int = 1
    workers: int = 1
    max_runs: int = 1000


class RunConfig(_Strict):
    model: ModelCfg
    grid: GridCfg
    initial_data: InitialDataCfg
    solver: SolverCfg = SolverCfg()
    diagnostics: DiagnosticsCfg = DiagnosticsCfg()
    theory: TheoryCfg = TheoryCfg()
    sweep: Optional[SweepCfg] = None
    output_dir: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _resolve_seeds(self):
        for f in (self.initial_data.u0, self.initial_data.v0):
            if isinstance(f, NoiseCfg) and f.seed is None:
                f.seed = self.seed
        return self

    # -- conversion to domain objects ------------------------------------

    def model_params(self):
        m = self.model
        return ModelParams(m.chi, m.a, m.k, m.dim_n, SensitivitySpec(m.sensitivity.kind, m.sensitivity.scale))

    def grid_obj(self):
        return Grid(tuple(self.grid.n_cells), tuple(self.grid.lengths))

    def initial_data_spec(self):
        return InitialData(_field_spec(self.initial_data.u0), _field_spec(self.initial_data.v0))

    def solver_config(self):
        return SolverConfig(**self.solver.model_dump())

    def check(self):
        """Build every domain object once so semantic errors surface early."""
        params = self.model_params()
        grid = self.grid_obj()
        if params.dim_n != grid.dim:
            raise DomainError(f"model.dim_n={params.dim_n} but grid has {grid.dim} axes")
        self.solver_config()
        build_initial_data(grid, self.initial_data_spec())
        if not 0 < self.diagnostics.tail_fraction <= 1:
            raise DomainError("diagnostics.tail_fraction must lie in (0, 1]")
        if self.diagnostics.c0 <= 0:
            raise DomainError("diagnostics.c0 must be positive")
        return self


def _field_spec(cfg):
    if isinstance(cfg, CosineCfg):
        return ConstantPlusCosine(cfg.mean, cfg.amplitude, tuple(cfg.modes))
    if isinstance(cfg, NoiseCfg):
        return ConstantPlusRandomNoise(cfg.mean, cfg.amplitude, cfg.seed)
    return GaussianBump(cfg.mass, tuple(cfg.center), cfg.width, cfg.floor)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw, overrides):
    """Apply ``key.path=value`` strings to a raw config dict (copy)."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = out
        for key in keys[:-1]:
            nxt = node.get(key)
            if nxt is None:
                nxt = node[key] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override path {path!r} descends into a non-object")
            node = nxt
        node[keys[-1]] = _parse_value(value)
    return out


def parse_config(raw, overrides=None):
    try:
        cfg = RunConfig.model_validate(apply_overrides(raw, overrides))
        return cfg.check()
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration:\n{exc}") from exc
    except DomainError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path, overrides=None):
    """Read, override and validate a JSON config file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root in {path} must be a JSON object")
    return parse_config(raw, overrides)


def resolved_dict(cfg):
    return cfg.model_dump(mode="json")


def default_config_dict():
    """The standard acceptance run: 64x64 unit square, a=1, k=2, chi = chi*/4."""
    return {
        "model": {"chi": 1.0, "a": 1.0, "k": 2.0, "dim_n": 2, "sensitivity": {"kind": "power_law"}},
        "grid": {"n_cells": [64, 64], "lengths": [1.0, 1.0]},
        "initial_data": {
            "u0": {"kind": "constant_plus_cosine", "mean": 1.0, "amplitude": 0.3, "modes": [1, 1]},
            "v0": {"kind": "constant_plus_cosine", "mean": 1.0, "amplitude": 0.0},
        },
        "solver": {"dt_init": 1e-3, "dt_max": 1e-3, "t_end": 50.0, "output_stride": 10},
    }


def default_config():
    return parse_config(default_config_dict())

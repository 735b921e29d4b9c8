"""YAML experiment configuration with a strict schema.

Units: joules for budgets, hertz, seconds, watts, dB for SNR values.

Example::

    system:
      n_users: 2
      horizon: 5
      bandwidth_hz: 1.0e6
      slot_seconds: 1.0
      noise_watts: 1.0
      fading: {kind: exponential, rate: 1.0}
    experiment:
      policies: [offline_iwf, dp_optimal, cec, one_shot, equal_energy]
      n_realizations: 10000
      seed: 20170724
      sweep: {axis: snr_db, values: [-30, -25, -20]}
    solver:
      iwf: {max_iters: 10000, objective_tol: 1.0e-9}
      dp: {energy_grid_points: 51, quadrature_order: 16, inner_opt_points: 33}
    output:
      csv: fig2_low_snr.csv
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import fading as fd
from .model import InvalidArgument, SystemParams
from .offline import IwfConfig
from .online_dp import DpConfig
from .sim import POLICY_NAMES, ExperimentSpec, Sweep

PolicyName = Literal["offline_iwf", "dp_optimal", "cec", "one_shot", "equal_energy"]


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted key path of the offending entry."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExponentialFading(_Strict):
    kind: Literal["exponential"]
    rate: float = Field(1.0, gt=0)


class DeterministicFading(_Strict):
    kind: Literal["deterministic"]
    value: float = Field(ge=0)


class TabulatedFading(_Strict):
    kind: Literal["tabulated"]
    u: list[float]
    x: list[float]


FadingCfg = Annotated[
    Union[ExponentialFading, DeterministicFading, TabulatedFading],
    Field(discriminator="kind"),
]


class SystemCfg(_Strict):
    n_users: int = Field(ge=1)
    horizon: int = Field(ge=1)
    bandwidth_hz: float = Field(1e6, gt=0)
    slot_seconds: float = Field(1.0, gt=0)
    noise_watts: float = Field(1.0, gt=0)
    energy_budgets: Optional[list[Annotated[float, Field(ge=0)]]] = None
    snr_db: Optional[float] = None
    fading: Union[FadingCfg, list[FadingCfg]]


class SweepCfg(_Strict):
    axis: Literal["snr_db", "n_users"]
    values: list[float] = Field(min_length=1)


class ExperimentCfg(_Strict):
    policies: list[PolicyName] = list(POLICY_NAMES)
    n_realizations: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    sweep: Optional[SweepCfg] = None
    dp_max_users: int = Field(2, ge=1)


class IwfCfg(_Strict):
    max_iters: int = Field(10_000, ge=1)
    objective_tol: float = Field(1e-9, gt=0)


class DpCfg(_Strict):
    energy_grid_points: int = Field(51, ge=2)
    quadrature_order: int = Field(16, ge=1)
    inner_opt_points: int = Field(33, ge=2)
    cache_dir: Optional[str] = None


class SolverCfg(_Strict):
    iwf: IwfCfg = IwfCfg()
    dp: DpCfg = DpCfg()


class OutputCfg(_Strict):
    csv: Optional[str] = None


class ConfigFile(_Strict):
    system: SystemCfg
    experiment: ExperimentCfg = ExperimentCfg()
    solver: SolverCfg = SolverCfg()
    output: OutputCfg = OutputCfg()

    @model_validator(mode="after")
    def _budgets_defined(self):
        sys_cfg = self.system
        sweep = self.experiment.sweep
        by_snr = sys_cfg.snr_db is not None or (sweep is not None and sweep.axis == "snr_db")
        if sweep is not None and sweep.axis == "n_users":
            if sys_cfg.snr_db is None:
                raise ValueError("an n_users sweep needs system.snr_db")
            if isinstance(sys_cfg.fading, list):
                raise ValueError("an n_users sweep needs a single system.fading entry")
        if not by_snr and sys_cfg.energy_budgets is None:
            raise ValueError("give system.energy_budgets, system.snr_db or an snr_db sweep")
        return self


def _fading_from_cfg(cfg) -> fd.FadingDistribution:
    return fd.from_dict(cfg.model_dump())


def _error_path(loc) -> str:
    # drop pydantic's union tags so the path mirrors the YAML keys
    return ".".join(str(p) for p in loc if not (isinstance(p, str) and "[" in p)
                    and p not in ("exponential", "deterministic", "tabulated"))


def parse_config(data: dict) -> ConfigFile:
    try:
        return ConfigFile.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_error_path(first["loc"]), first["msg"]) from None


def load_config(path) -> ConfigFile:
    return parse_config(read_yaml(path))


def read_yaml(path) -> dict:
    path = resolve_config_path(path)
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a mapping")
    return data


def dump_config(cfg: ConfigFile) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=False)


def bundled_configs() -> list[str]:
    root = resources.files("fadingmac") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(name) -> Path:
    """A filesystem path, or the name of a bundled config such as ``fig2_low_snr``."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("fadingmac") / "configs" / f"{name}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no config file or bundled config named {name!r}")


def apply_overrides(data: dict, overrides: dict[str, object]) -> dict:
    """Set dotted key paths (``solver.dp.energy_grid_points``) in a raw config."""
    data = copy.deepcopy(data)
    for dotted, value in overrides.items():
        node = data
        keys = dotted.split(".")
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(dotted, f"{key} is not a mapping")
            node = child
        node[keys[-1]] = value
    return data


def to_spec(cfg: ConfigFile) -> ExperimentSpec:
    s = cfg.system
    if isinstance(s.fading, list):
        if len(s.fading) != s.n_users:
            raise ConfigError("system.fading", "needs one entry per user")
        fading = tuple(_fading_from_cfg(f) for f in s.fading)
    else:
        fading = (_fading_from_cfg(s.fading),) * s.n_users
    budgets = s.energy_budgets if s.energy_budgets is not None else [0.0] * s.n_users
    e = cfg.experiment
    try:
        params = SystemParams(s.n_users, s.horizon, s.bandwidth_hz, s.slot_seconds,
                              s.noise_watts, tuple(budgets), fading)
        sweep = Sweep(e.sweep.axis, tuple(e.sweep.values)) if e.sweep else None
        dp = cfg.solver.dp
        return ExperimentSpec(
            params=params,
            policies=tuple(e.policies),
            n_realizations=e.n_realizations,
            seed=e.seed,
            sweep=sweep,
            snr_db=s.snr_db,
            iwf=IwfConfig(cfg.solver.iwf.max_iters, cfg.solver.iwf.objective_tol),
            dp=DpConfig(dp.energy_grid_points, dp.quadrature_order, dp.inner_opt_points),
            dp_max_users=e.dp_max_users,
            dp_cache=dp.cache_dir,
        )
    except InvalidArgument as exc:
        raise ConfigError("system", str(exc)) from None

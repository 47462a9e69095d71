"""Run configuration: YAML file validated by pydantic, unknown keys rejected."""
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelSection(_Strict):
    d: int = Field(2, ge=1, le=3)
    p: int = Field(1, ge=1, le=3)
    tangential: List[Tuple[int, int]] = [(2, 1)]
    actions: List[float] = [1.0]
    # "calibrate": choose eps so that the measured [f_0] equals calibrate_ratio * mu0^2
    eps: Union[float, Literal["calibrate"]] = "calibrate"
    calibrate_ratio: float = Field(1e-6, gt=0, lt=1)
    J_max: int = Field(12, ge=1, le=200)
    quad_order: Optional[int] = Field(None, ge=1)
    quad_guard: int = Field(2, ge=0)

    @field_validator("eps")
    @classmethod
    def _eps(cls, v):
        if isinstance(v, float) and v < 0:
            raise ValueError("eps must be nonnegative")
        return v

    @model_validator(mode="after")
    def _sites(self):
        if len(self.tangential) != len(self.actions):
            raise ValueError("need one action per tangential site")
        if len(set(self.tangential)) != len(self.tangential):
            raise ValueError("tangential sites must be distinct")
        if any(a <= 0 for a in self.actions):
            raise ValueError("actions must be positive")
        for j, i in self.tangential:
            if j > self.J_max:
                raise ValueError("tangential site (%d, %d) above J_max" % (j, i))
        return self


class NumericsSection(_Strict):
    N_rep: int = Field(15, ge=1)
    D_max: int = Field(4, ge=2)
    theta_grid: int = Field(32, ge=4)
    quad_nodes: int = Field(8, ge=1)
    flow_nodes: int = Field(12, ge=4)
    fd_step: float = Field(1e-5, gt=0)
    kappa_cap: float = Field(1e-3, gt=0)
    residual_gate: float = Field(1e-8, gt=0)
    whitney: bool = True
    torus_samples: int = Field(32, ge=4)

    @model_validator(mode="after")
    def _grid(self):
        if self.theta_grid < 2 * min(self.N_rep, (self.theta_grid - 1) // 2) + 1:
            raise ValueError("theta_grid too small for N_rep")
        return self


class ScheduleSection(_Strict):
    s: float = Field(2.0, gt=0)
    sigma0: float = 0.5
    beta0: float = 0.1
    mu0: float = 0.5
    # "derive": eps0 is the measured [f_0] of the model
    eps0: Union[float, Literal["derive"]] = "derive"
    m_stop: int = Field(3, ge=0, le=8)
    c1: float = Field(2.0 ** 16, gt=0)
    c2: float = Field(1.0, gt=0)
    gamma0: float = Field(1.0, gt=0)
    M_omega0: float = Field(1.0, gt=0)
    L0: float = Field(1.0, gt=0)
    M_Omega0: float = Field(0.01, gt=0)
    override_gate: bool = False

    @field_validator("beta0")
    @classmethod
    def _beta0(cls, v, info):
        lim = min(info.data.get("s", 2.0) / 2, 0.5)
        if not 0 < v <= lim:
            raise ValueError("beta0 = %g violates assumption (A3): need 0 < beta <= min(s/2, 1/2) = %g" % (v, lim))
        return v

    @field_validator("sigma0", "mu0")
    @classmethod
    def _unit(cls, v, info):
        if not 0 < v <= 1:
            raise ValueError("%s = %g violates assumption (A3): need 0 < %s <= 1"
                             % (info.field_name, v, info.field_name[:-1]))
        return v

    @field_validator("eps0")
    @classmethod
    def _eps0(cls, v):
        if isinstance(v, float) and not 0 < v < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        return v


class SamplerSection(_Strict):
    kind: Literal["grid", "mc"] = "grid"
    samples: int = Field(10000, ge=1000)


class RhoSection(_Strict):
    values: List[List[float]] = [[0.618]]
    sampler: SamplerSection = SamplerSection()

    @field_validator("values")
    @classmethod
    def _unit(cls, v):
        for r in v:
            if any(not 0.0 <= x <= 1.0 for x in r):
                raise ValueError("rho values must lie in [0, 1]")
        return v


class LemmasSection(_Strict):
    count: int = Field(500, ge=1)
    quick: bool = False


class OutputsSection(_Strict):
    dir: str = "kamkit-out"
    formats: List[Literal["csv", "json"]] = ["csv", "json"]
    cache_dir: Optional[str] = None


class RunConfig(_Strict):
    model: ModelSection = ModelSection()
    numerics: NumericsSection = NumericsSection()
    schedule: ScheduleSection = ScheduleSection()
    rho: RhoSection = RhoSection()
    lemmas: LemmasSection = LemmasSection()
    outputs: OutputsSection = OutputsSection()
    seed: int = Field(0, ge=0, lt=2 ** 64)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _dims(self):
        n = len(self.model.tangential)
        for r in self.rho.values:
            if len(r) != n:
                raise ValueError("each rho needs %d coordinates (one per tangential site)" % n)
        return self


def _format_errors(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(x) for x in e["loc"]) or "<root>"
        msg = e["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        lines.append("%s: %s" % (path, msg))
    return "; ".join(lines)


def parse_config_text(text, source="<string>"):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = " line %d column %d" % (mark.line + 1, mark.column + 1) if mark else ""
        raise ConfigError("%s:%s parse error: %s" % (source, where, getattr(exc, "problem", exc)))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("%s: top level must be a mapping" % source)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError("%s: %s" % (source, _format_errors(exc)))


def parse_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read %s: %s" % (path, exc.strerror or exc))
    return parse_config_text(text, path)


def to_plain(cfg):
    """Nested dict of builtins (tuples become lists)."""
    return cfg.model_dump(mode="json")


def emit_yaml(cfg=None):
    cfg = RunConfig() if cfg is None else cfg
    return yaml.safe_dump(to_plain(cfg), sort_keys=False, default_flow_style=None)

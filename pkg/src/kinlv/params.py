"""Model parameters, initial data and run configuration.

All records are frozen dataclasses. ``validate`` is the single entry point
that turns a raw mapping (for instance parsed from a JSON config file) into
a :class:`ModelParams`; it never clamps a value, it either accepts the record
(possibly with warnings) or raises :class:`ValidationError` listing every
violated hard constraint.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

log = logging.getLogger(__name__)


class Risk(enum.Enum):
    """Risk exponent of the random part of the binary interaction."""

    HALF = "half"
    ONE = "one"

    @property
    def exponent(self) -> float:
        return 0.5 if self is Risk.HALF else 1.0

    @classmethod
    def parse(cls, value: Any) -> "Risk":
        if isinstance(value, Risk):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if value == 0.5:
                return cls.HALF
            if value == 1:
                return cls.ONE
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("half", "1/2", "0.5"):
                return cls.HALF
            if key in ("one", "1", "1.0"):
                return cls.ONE
        raise ValueError(f"risk exponent must be 'half' or 'one', got {value!r}")


class Shape(enum.Enum):
    """Initial density family, matched to a prescribed mean and CV."""

    GAMMA = "gamma"
    LOGNORMAL = "lognormal"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Issue:
    code: str
    fields: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.code} [{', '.join(self.fields)}]: {self.message}"


class ValidationError(ValueError):
    """Raised when a parameter record violates hard constraints."""

    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


class ConfigError(ValueError):
    """Malformed configuration document (unknown keys, wrong types)."""


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    gamma: float
    mu: float
    nu: float
    chi: float
    theta: float
    sigma_f: float
    sigma_g: float
    risk_f: Risk = Risk.HALF
    risk_g: Risk = Risk.HALF
    s0: float = 0.0

    @property
    def delta(self) -> float:
        return derived_delta(self)

    @property
    def fixed_point(self) -> tuple[float, float]:
        """Interior equilibrium of the mean dynamics."""
        return self.delta / self.gamma, self.alpha / self.beta

    def with_(self, **changes: Any) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["risk_f"] = self.risk_f.value
        d["risk_g"] = self.risk_g.value
        return d


TABLE1 = ModelParams(
    alpha=1.0,
    beta=0.5,
    gamma=0.15,
    mu=10.0,
    nu=1.0,
    chi=0.8,
    theta=0.4,
    sigma_f=1e-3,
    sigma_g=1e-3,
)


@dataclass(frozen=True)
class InitialConditions:
    m_f0: float = 4.0
    m_g0: float = 3.0
    c_f0: float = 2.0
    c_g0: float = 1.0
    shape: Shape = Shape.GAMMA

    def __post_init__(self) -> None:
        issues = []
        for name in ("m_f0", "m_g0", "c_f0", "c_g0"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                issues.append(Issue("NonFinite", (name,), f"{name}={v!r} is not finite"))
        if not issues:
            for name in ("m_f0", "m_g0"):
                if getattr(self, name) <= 0:
                    issues.append(Issue("OutOfRange", (name,), f"{name} must be > 0"))
            for name in ("c_f0", "c_g0"):
                if getattr(self, name) < 0:
                    issues.append(Issue("OutOfRange", (name,), f"{name} must be >= 0"))
        if issues:
            raise ValidationError(issues)
        object.__setattr__(self, "shape", Shape(self.shape))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["shape"] = self.shape.value
        return d


PAPER_INITIAL = InitialConditions(4.0, 3.0, 2.0, 1.0)

_NUMERIC = ("alpha", "beta", "gamma", "mu", "nu", "chi", "theta", "sigma_f", "sigma_g", "s0")
_REQUIRED = _NUMERIC[:-1]


def validate(raw: Mapping[str, Any] | ModelParams) -> tuple[ModelParams, list[str]]:
    """Validate a parameter record.

    Returns the validated parameters and a list of warnings. Raises
    :class:`ValidationError` carrying every violated hard constraint.
    """
    if isinstance(raw, ModelParams):
        raw = raw.to_dict()
    raw = dict(raw)
    issues: list[Issue] = []

    unknown = set(raw) - {f.name for f in fields(ModelParams)}
    if unknown:
        issues.append(Issue("UnknownField", tuple(sorted(unknown)), "unknown parameter field"))
    for name in _REQUIRED:
        if name not in raw:
            issues.append(Issue("Missing", (name,), f"{name} is required"))
    vals: dict[str, float] = {}
    for name in _NUMERIC:
        if name not in raw:
            continue
        v = raw[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            issues.append(Issue("NonFinite", (name,), f"{name}={v!r} is not a finite number"))
        else:
            vals[name] = float(v)
    risks = {}
    for name in ("risk_f", "risk_g"):
        try:
            risks[name] = Risk.parse(raw.get(name, Risk.HALF))
        except ValueError as exc:
            issues.append(Issue("OutOfRange", (name,), str(exc)))
    if issues:
        raise ValidationError(issues)

    g = vals.get
    for name in ("alpha", "beta", "gamma", "nu"):
        if g(name) <= 0:
            issues.append(Issue("OutOfRange", (name,), f"{name} must be a positive rate"))
    if g("mu") < 1:
        issues.append(Issue("OutOfRange", ("mu",), "mu must be >= 1"))
    for name in ("chi", "theta"):
        if g(name) <= -1:
            issues.append(Issue("OutOfRange", (name,), f"{name} must be > -1"))
    for name in ("sigma_f", "sigma_g", "s0"):
        if name in vals and g(name) < 0:
            issues.append(Issue("OutOfRange", (name,), f"{name} must be >= 0"))
    if g("gamma") * g("mu") - g("nu") <= 0:
        issues.append(
            Issue(
                "NonPositiveDelta",
                ("gamma", "mu", "nu"),
                f"gamma*mu - nu = {g('gamma') * g('mu') - g('nu'):.6g} must be > 0",
            )
        )
    if g("alpha") * g("chi") >= 1:
        issues.append(Issue("RedistributionTooStrong", ("alpha", "chi"), "alpha*chi must be < 1"))
    if g("nu") * g("theta") >= 1:
        issues.append(Issue("RedistributionTooStrong", ("nu", "theta"), "nu*theta must be < 1"))
    if issues:
        raise ValidationError(issues)

    warnings = []
    if g("gamma") * g("mu") >= 1:
        warnings.append(f"gamma*mu = {g('gamma') * g('mu'):.6g} >= 1")
    for name in ("beta", "gamma"):
        if not 0 < g(name) < 1:
            warnings.append(f"{name} = {g(name):.6g} outside (0, 1)")
    for w in warnings:
        log.warning("parameter warning: %s", w)

    params = ModelParams(
        **{k: vals[k] for k in _REQUIRED},
        risk_f=risks["risk_f"],
        risk_g=risks["risk_g"],
        s0=vals.get("s0", 0.0),
    )
    return params, warnings


def derived_delta(p: ModelParams) -> float:
    """Loans shutdown rate ``gamma*mu - nu``."""
    return p.gamma * p.mu - p.nu


@dataclass(frozen=True)
class RunConfig:
    """Solver and harness settings; every field is optional in a config file."""

    t_end: float = 20.0
    method: str = "dp45"
    dt: float = 0.01
    rtol: float = 1e-9
    atol: float = 1e-9
    output_dt: float = 0.1
    seed: int = 12345
    n_agents: int = 100_000
    epsilon: float = 0.01
    stride: float = 0.25
    snapshot_times: tuple[float, ...] = ()
    n_cells: int = 1024
    x_max: float | None = None
    frame: str = "comoving"
    eqvarnew_sigma_override: bool = False
    sigma_scale: float = 0.1

    def __post_init__(self) -> None:
        issues = []
        if not self.t_end > 0:
            issues.append(Issue("OutOfRange", ("t_end",), "t_end must be > 0"))
        if self.method not in ("dp45", "rk4"):
            issues.append(Issue("OutOfRange", ("method",), "method must be 'dp45' or 'rk4'"))
        for name in ("dt", "rtol", "atol", "output_dt", "epsilon", "stride"):
            if not getattr(self, name) > 0:
                issues.append(Issue("OutOfRange", (name,), f"{name} must be > 0"))
        if self.epsilon > 1:
            issues.append(Issue("OutOfRange", ("epsilon",), "epsilon must lie in (0, 1]"))
        if self.n_agents < 2:
            issues.append(Issue("OutOfRange", ("n_agents",), "n_agents must be >= 2"))
        if self.n_cells < 16:
            issues.append(Issue("OutOfRange", ("n_cells",), "n_cells must be >= 16"))
        if self.x_max is not None and not self.x_max > 0:
            issues.append(Issue("OutOfRange", ("x_max",), "x_max must be > 0"))
        if self.frame not in ("comoving", "fixed"):
            issues.append(Issue("OutOfRange", ("frame",), "frame must be 'comoving' or 'fixed'"))
        if issues:
            raise ValidationError(issues)
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))


@dataclass(frozen=True)
class Config:
    params: ModelParams = TABLE1
    initial: InitialConditions = PAPER_INITIAL
    run: RunConfig = field(default_factory=RunConfig)
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        run = asdict(self.run)
        run["snapshot_times"] = list(self.run.snapshot_times)
        return {"params": self.params.to_dict(), "initial": self.initial.to_dict(), "run": run}


def _section(doc: Mapping[str, Any], key: str, allowed: set[str]) -> dict[str, Any]:
    sec = doc.get(key, {})
    if not isinstance(sec, Mapping):
        raise ConfigError(f"'{key}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {', '.join(sorted(unknown))}")
    return dict(sec)


def config_from_dict(doc: Mapping[str, Any]) -> Config:
    """Build a :class:`Config` from a parsed document.

    Sections are merged onto the defaults (Table-1 parameters, initial data
    ``(4, 3, 2, 1)``); unknown keys at any level are rejected.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - {"params", "initial", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")

    p_raw = TABLE1.to_dict()
    p_raw.update(_section(doc, "params", {f.name for f in fields(ModelParams)}))
    params, warnings = validate(p_raw)

    i_raw = PAPER_INITIAL.to_dict()
    i_raw.update(_section(doc, "initial", {f.name for f in fields(InitialConditions)}))
    try:
        initial = InitialConditions(**{**i_raw, "shape": Shape(i_raw["shape"])})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ConfigError(f"bad 'initial' section: {exc}") from exc

    r_raw = _section(doc, "run", {f.name for f in fields(RunConfig)})
    try:
        run = RunConfig(**r_raw)
    except TypeError as exc:
        raise ConfigError(f"bad 'run' section: {exc}") from exc
    return Config(params, initial, run, tuple(warnings))


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)

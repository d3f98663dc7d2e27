"""Run configurations: built-in presets, flat-key config files and overrides.

A config is a flat mapping. Model keys are ``kappa, theta, sigma, rho, r_d,
r_f, T, K, S0, v0`` and ``domain.{v_min,v_max,x_min,x_max}``; the rest
describe the option, the discretization and the outputs. Files may be YAML
or JSON.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from .mesh import Mesh, uniform_mesh
from .model import Butterfly, DigitalCall, Domain, EuropeanCall, EuropeanPut, HestonParams
from .solver import Problem
from .timestepping import Scheme

PARAM_KEYS = ("kappa", "theta", "sigma", "rho", "r_d", "r_f", "T", "K", "S0", "v0")
DOMAIN_KEYS = ("domain.v_min", "domain.v_max", "domain.x_min", "domain.x_max")

# type per key; used to coerce CLI strings and reject typos
KEY_TYPES: Dict[str, type] = {
    **{k: float for k in PARAM_KEYS},
    **{k: float for k in DOMAIN_KEYS},
    "example": int,
    "option": str,
    "K1": float,
    "K2": float,
    "K3": float,
    "n_v": int,
    "n_x": int,
    "diagonal": str,
    "degree": int,
    "dt": float,
    "scheme": str,
    "d_minus_variance": str,
    "adapt.eps": float,
    "adapt.theta_mark": float,
    "adapt.max_rounds": int,
    "adapt.max_elements": int,
    "adapt.initial_n_v": int,
    "adapt.initial_n_x": int,
    "mc.paths": int,
    "mc.steps": int,
    "mc.seed": int,
    "mc.antithetic": bool,
    "strikes": list,
    "out": str,
}

_TABLE1 = dict(kappa=1.0, theta=0.09, sigma=0.4, rho=-0.7, r_d=0.05, r_f=0.01, T=1.0, S0=100.0, v0=0.25)
_TABLE3 = dict(kappa=1.98937, theta=0.011876, sigma=0.33147, rho=0.0258519, r_d=math.log(1.0005), T=0.25, K=123.4)
_TABLE4 = dict(
    kappa=2.5, theta=0.06, sigma=0.5, rho=-0.1, r_d=math.log(1.052), r_f=math.log(1.048), T=0.25, S0=1.0, K=1.0, v0=0.05225
)
_WIDE_DOMAIN = {"domain.v_min": 0.0025, "domain.v_max": 0.559951, "domain.x_min": -5.0, "domain.x_max": 5.0}
_MC = {"mc.paths": 1_000_000, "mc.seed": 12345}

PRESETS: Dict[str, Dict[str, Any]] = {
    "table1": {
        **_TABLE1,
        "K": 105.0,
        "example": 1,
        "option": "call",
        "domain.v_min": 0.0,
        "domain.v_max": 4.0,
        "domain.x_min": -2.0,
        "domain.x_max": 2.0,
        "n_v": 64,
        "n_x": 64,
        "degree": 1,
        "dt": 0.01,
        "scheme": "rannacher",
        "strikes": [105.0, 110.0, 115.0, 130.0, 150.0],
        **_MC,
    },
    "table3": {
        # x is log-moneyness, so the log-price window is shifted by log K
        **_TABLE3,
        "r_f": math.log(100.0),
        "S0": 123.4,
        "v0": 0.011876,
        "example": 2,
        "option": "call",
        "domain.v_min": 0.0025,
        "domain.v_max": 0.559951,
        "domain.x_min": 2.990790 - math.log(123.4),
        "domain.x_max": 6.640072 - math.log(123.4),
        "n_v": 32,
        "n_x": 32,
        "degree": 1,
        "dt": 0.0125,
        "scheme": "rannacher",
        "d_minus_variance": "v_max",
        "adapt.eps": 1.0,
        "adapt.theta_mark": 0.5,
        "adapt.max_rounds": 30,
        "adapt.initial_n_v": 16,
        "adapt.initial_n_x": 16,
        **_MC,
    },
    "butterfly": {
        **_TABLE4,
        "example": 3,
        "option": "butterfly",
        "K1": 0.1,
        "K2": 0.5,
        "K3": 0.9,
        "K": 0.5,
        **_WIDE_DOMAIN,
        "n_v": round(0.557451 / 0.016),
        "n_x": round(10.0 / 0.078),
        "degree": 1,
        "dt": 0.025,
        "scheme": "rannacher",
        **_MC,
    },
    "digital": {
        **_TABLE4,
        "example": 4,
        "option": "digital",
        **_WIDE_DOMAIN,
        "n_v": round(0.557451 / 0.016),
        "n_x": round(10.0 / 0.078),
        "degree": 1,
        "dt": 0.025,
        "scheme": "rannacher",
        **_MC,
    },
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    if key not in KEY_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = KEY_TYPES[key]
    if value is None:
        return None
    try:
        if typ is bool:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(value)
                return low in ("1", "true", "yes")
            return bool(value)
        if typ is list:
            if isinstance(value, str):
                return [float(s) for s in value.split(",") if s.strip()]
            return [float(s) for s in value]
        if typ is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} expects {typ.__name__}, got {value!r}") from None


def _flatten(data: Mapping, prefix: str = "") -> Dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_file(path) -> Dict[str, Any]:
    """Read a YAML or JSON config; nested mappings are flattened to dotted keys."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return _flatten(data)


def resolve(preset: Optional[str] = None, path=None, overrides: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Merge preset <- file <- overrides; a file may name its own ``preset``."""
    cfg: Dict[str, Any] = {}
    file_data = load_file(path) if path is not None else {}
    name = preset or file_data.pop("preset", None)
    file_data.pop("preset", None)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        cfg.update(PRESETS[name])
    for source in (file_data, overrides or {}):
        for k, v in source.items():
            cfg[k] = _coerce(k, v)
    return cfg


@dataclass(frozen=True)
class RunConfig:
    problem: Problem
    mesh_size: Optional[Tuple[int, int]]
    adapt: Optional[Dict[str, Any]]
    degree: int
    dt: float
    scheme: Scheme
    diagonal: str
    raw: Dict[str, Any]

    def mesh(self) -> Mesh:
        n_v, n_x = self.mesh_size if self.mesh_size else (self.adapt["initial_n_v"], self.adapt["initial_n_x"])
        return uniform_mesh(self.problem.domain, n_v, n_x, self.diagonal)


def _option(cfg):
    name = str(cfg.get("option", "call")).lower()
    if name == "call":
        return EuropeanCall()
    if name == "put":
        return EuropeanPut()
    if name == "digital":
        return DigitalCall()
    if name == "butterfly":
        try:
            return Butterfly(cfg["K1"], cfg["K2"], cfg["K3"])
        except KeyError as exc:
            raise ConfigError(f"butterfly needs K1, K2 and K3 (missing {exc.args[0]})") from None
    raise ConfigError(f"unknown option {name!r}; choose call, put, digital or butterfly")


def build(cfg: Mapping[str, Any], adaptive: bool = False) -> RunConfig:
    """Validate a resolved flat config and build the run description."""
    missing = [k for k in PARAM_KEYS + DOMAIN_KEYS if k not in cfg]
    if missing:
        raise ConfigError("missing config keys: " + ", ".join(missing))
    try:
        params = HestonParams(**{k: float(cfg[k]) for k in PARAM_KEYS}).validate()
        domain = Domain(*(float(cfg[k]) for k in DOMAIN_KEYS))
        option = _option(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    example = int(cfg.get("example", 1))
    if example not in (1, 2, 3, 4):
        raise ConfigError(f"example must be 1, 2, 3 or 4 (got {example})")
    dmv = str(cfg.get("d_minus_variance", "v_max"))
    if dmv not in ("v_min", "v_max"):
        raise ConfigError("d_minus_variance must be v_min or v_max")
    degree = int(cfg.get("degree", 1))
    if degree not in (1, 2):
        raise ConfigError("degree must be 1 or 2")
    dt = float(cfg.get("dt", 0.01))
    if not dt > 0:
        raise ConfigError("dt must be positive")
    try:
        scheme = Scheme(str(cfg.get("scheme", "rannacher")).lower())
    except ValueError:
        raise ConfigError("scheme must be cn, rannacher or be") from None
    diagonal = str(cfg.get("diagonal", "main"))
    if diagonal not in ("main", "anti"):
        raise ConfigError("diagonal must be main or anti")
    problem = Problem(params, option, domain, example, dmv)
    if adaptive:
        adapt = {
            "eps": float(cfg.get("adapt.eps", 1.0)),
            "theta_mark": float(cfg.get("adapt.theta_mark", 0.5)),
            "max_rounds": int(cfg.get("adapt.max_rounds", 10)),
            "max_elements": cfg.get("adapt.max_elements"),
            "initial_n_v": int(cfg.get("adapt.initial_n_v", cfg.get("n_v", 8))),
            "initial_n_x": int(cfg.get("adapt.initial_n_x", cfg.get("n_x", 8))),
        }
        if not adapt["eps"] > 0:
            raise ConfigError("adapt.eps must be positive")
        if not 0 < adapt["theta_mark"] < 1:
            raise ConfigError("adapt.theta_mark must lie in (0, 1)")
        size = None
    else:
        if "n_v" not in cfg or "n_x" not in cfg:
            raise ConfigError("a uniform run needs n_v and n_x")
        size = (int(cfg["n_v"]), int(cfg["n_x"]))
        if min(size) < 1:
            raise ConfigError("n_v and n_x must be >= 1")
        adapt = None
    return RunConfig(problem, size, adapt, degree, dt, scheme, diagonal, dict(cfg))

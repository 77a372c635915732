"""TOML run configuration: loading with full validation, defaults, and a lossless writer."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import RfParams
from .geometry import GeoParams
from .hybrid_sac.mpo import MpoConfig
from .hybrid_sac.trainer import TrainConfig
from .metrics import ComputeParams
from .oracle import GridSpec
from .scenario import FlightBox, Scenario

MODES = ("simulate", "train", "evaluate", "oracle", "sweep", "report")
POLICIES = ("random", "local_only", "greedy", "learned")


class ConfigError(ValueError):
    """Raised with every problem found; ``errors`` holds ``key.path: message`` strings."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class RunConfig:
    mode: str = "simulate"
    objective: str = "energy"
    policy: str = "local_only"
    seeds: tuple[int, ...] = (0,)
    episodes: int = 1
    out: str = "runs"
    checkpoint: str = ""
    sweep_key: str = "scenario.n_users"
    sweep_values: tuple = (2, 4, 6)
    sweep_mode: str = "simulate"
    workers: int = 1

    def validation_errors(self) -> list[str]:
        errs = []
        if self.mode not in MODES:
            errs.append(f"run.mode: must be one of {MODES}")
        if self.sweep_mode not in MODES[:4]:
            errs.append(f"run.sweep_mode: must be one of {MODES[:4]}")
        if self.objective not in ("energy", "latency"):
            errs.append("run.objective: must be 'energy' or 'latency'")
        if self.policy not in POLICIES:
            errs.append(f"run.policy: must be one of {POLICIES}")
        if not self.seeds:
            errs.append("run.seeds: at least one seed is required")
        if self.episodes < 0:
            errs.append("run.episodes: must be >= 0")
        if self.workers < 1:
            errs.append("run.workers: must be >= 1")
        if self.mode == "evaluate" and not self.checkpoint:
            errs.append("run.checkpoint: required in evaluate mode")
        if self.mode == "sweep" and not self.sweep_values:
            errs.append("run.sweep_values: required in sweep mode")
        return errs


@dataclass(frozen=True)
class Config:
    scenario: Scenario = field(default_factory=Scenario)
    run: RunConfig = field(default_factory=RunConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle: GridSpec = field(default_factory=GridSpec)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:12]


_NESTED = {Scenario: {"geo": GeoParams, "rf": RfParams, "compute": ComputeParams,
                      "flight_box": FlightBox},
           TrainConfig: {"mpo": MpoConfig}}


def _coerce(value, hint, path: str, errors: list[str]):
    """Convert a TOML value to the annotated field type, recording problems."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or (origin is not None and str(origin) == "types.UnionType"):
        non_none = [a for a in args if a is not type(None)]
        if value is None or (isinstance(value, str) and value == "" and type(None) in args):
            return None
        return _coerce(value, non_none[0], path, errors)
    if hint is tuple:
        if not isinstance(value, (list, tuple)):
            errors.append(f"{path}: expected a list")
            return value
        return tuple(value)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            errors.append(f"{path}: expected a list")
            return value
        inner = args[0] if args else typing.Any
        if inner is Ellipsis or inner is typing.Any:
            return tuple(value)
        return tuple(_coerce(v, inner, path, errors) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            errors.append(f"{path}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number")
            return value
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string")
        return value
    return value


def _build(cls, data: dict, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a table")
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    nested = _NESTED.get(cls, {})
    kwargs = {}
    for key, value in data.items():
        kp = f"{path}.{key}"
        if key == "noise_dbm" and cls is RfParams:
            kwargs["noise_power_W"] = 10.0 ** (float(value) / 10.0) / 1000.0
            continue
        if key not in names:
            errors.append(f"{kp}: unknown key")
            continue
        if key in nested:
            kwargs[key] = _build(nested[key], value, kp, errors)
        else:
            kwargs[key] = _coerce(value, hints[key], kp, errors)
    n_before = len(errors)
    if cls is Scenario:
        try:
            probe = object.__new__(Scenario)
            defaults = {f.name: getattr(Scenario(), f.name) for f in dataclasses.fields(Scenario)}
            for k, v in {**defaults, **kwargs}.items():
                object.__setattr__(probe, k, v)
            for msg in probe.validation_errors():
                errors.append(f"{path}.{msg.split(' ')[0]}: {msg}")
        except Exception as exc:     # malformed values already reported above
            errors.append(f"{path}: {exc}")
    if len(errors) > n_before:
        return cls()
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return cls()


def from_dict(data: dict) -> Config:
    errors: list[str] = []
    known = {"scenario": Scenario, "run": RunConfig, "train": TrainConfig, "oracle": GridSpec}
    parts = {}
    for key in data:
        if key not in known:
            errors.append(f"{key}: unknown section")
    for key, cls in known.items():
        parts[key] = _build(cls, data.get(key, {}), key, errors)
    run = parts["run"]
    if isinstance(run, RunConfig):
        errors.extend(run.validation_errors())
    if errors:
        raise ConfigError(errors)
    scn = parts["scenario"]
    if "objective" in data.get("run", {}) and "objective" not in data.get("scenario", {}):
        scn = scn.replace(objective=run.objective)
    elif "objective" in data.get("scenario", {}) and "objective" not in data.get("run", {}):
        run = dataclasses.replace(run, objective=scn.objective)
    elif scn.objective != run.objective:
        raise ConfigError([f"run.objective: '{run.objective}' disagrees with scenario.objective "
                           f"'{scn.objective}'"])
    return Config(scn, run, parts["train"], parts["oracle"])


def loads(text: str) -> Config:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    return from_dict(data)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from None
    return loads(text)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            if not f.init:
                continue
            v = getattr(obj, f.name)
            if v is None:
                continue
            out[f.name] = _plain(v)
        return out
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def to_dict(cfg: Config) -> dict:
    return {"scenario": _plain(cfg.scenario), "run": _plain(cfg.run),
            "train": _plain(cfg.train), "oracle": _plain(cfg.oracle)}


def dumps(cfg: Config) -> str:
    return tomli_w.dumps(to_dict(cfg))


def write_config(cfg: Config, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(cfg))


def set_dotted(data: dict, key: str, value) -> dict:
    """Return a copy of nested ``data`` with ``a.b.c = value``."""
    out = copy.deepcopy(data)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out

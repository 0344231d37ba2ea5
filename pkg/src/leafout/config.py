"""Scenario configuration: one JSON document with a section per command.

All quantities are SI (m, s, V, F, ohm, rad, W/m^2). Every section is
optional and missing keys take the library defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing

from .actuator import ActuatorSpec, CapacitorBank
from .errors import ConfigError, DomainError
from .flight import DropScenario
from .power import IrradianceProfile
from .structure import OrigamiSpec

SECTIONS = ("seed", "origami", "energy", "pattern", "actuate", "power", "mission", "disperse")


def load_config(path) -> dict:
    """Parse a config file; syntax errors carry the line and column."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    return parse_config(raw.decode("utf-8"))


def parse_config(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    for k in doc:
        if k not in SECTIONS:
            raise ConfigError("unknown section", k)
    for k in SECTIONS[1:]:
        if k in doc and not isinstance(doc[k], dict):
            raise ConfigError("section must be an object", k)
    if "seed" in doc and (not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool) or doc["seed"] < 0):
        raise ConfigError("must be a non-negative integer", "seed")
    return doc


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical JSON form (whitespace and key order do not matter)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def section(doc: dict, name: str) -> dict:
    return dict(doc.get(name, {}))


def take(d: dict, key: str, default, path: str, kind=(int, float)):
    """Pop ``key`` from ``d`` and type-check it."""
    v = d.pop(key, default)
    if v is default:
        return v
    ok = isinstance(v, kind) and not (isinstance(v, bool) and bool not in _as_tuple(kind))
    if not ok:
        raise ConfigError(f"expected {_kind_name(kind)}, got {type(v).__name__}", f"{path}.{key}")
    return v


def _as_tuple(kind):
    return kind if isinstance(kind, tuple) else (kind,)


def _kind_name(kind):
    return " or ".join(k.__name__ for k in _as_tuple(kind))


def no_extra(d: dict, path: str):
    if d:
        raise ConfigError("unknown key", f"{path}.{sorted(d)[0]}")


# --- generic dataclass construction ------------------------------------------

def _unwrap_optional(tp):
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp, value, path):
    inner, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError("may not be null", path)
    if dataclasses.is_dataclass(inner):
        if not isinstance(value, dict):
            raise ConfigError("expected an object", path)
        return build(inner, value, path)
    if inner is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected a boolean", path)
        return value
    if inner is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError("expected an integer", path)
        return value
    if inner is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError("expected a number", path)
        return float(value)
    if inner is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    if inner is dict:
        if not isinstance(value, dict):
            raise ConfigError("expected an object", path)
        return dict(value)
    if inner is tuple:
        if not isinstance(value, list):
            raise ConfigError("expected a list", path)
        return tuple(value)
    return value


def build(cls, data: dict, path: str):
    """Instantiate dataclass ``cls`` from ``data``, naming the offending field on error."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init and not f.name.startswith("_")}
    kw = {}
    for k, v in data.items():
        if k not in names:
            raise ConfigError("unknown key", f"{path}.{k}")
        kw[k] = _coerce(hints[k], v, f"{path}.{k}")
    try:
        return cls(**kw)
    except (DomainError, TypeError, ValueError) as e:
        raise ConfigError(str(e), path) from None


# --- section helpers -----------------------------------------------------------

def origami_spec(doc: dict) -> OrigamiSpec:
    d = doc.get("origami")
    if d is None:
        return OrigamiSpec()
    try:
        return OrigamiSpec.from_dict(d)
    except (DomainError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(str(e), "origami") from None


def actuator_pair(d: dict, path: str):
    act = build(ActuatorSpec, d.pop("actuator", {}), f"{path}.actuator")
    bank = build(CapacitorBank, d.pop("bank", {}), f"{path}.bank")
    return act, bank


def irradiance_profile(d, path: str) -> IrradianceProfile:
    if isinstance(d, (int, float)) and not isinstance(d, bool):
        return _wrap(lambda: IrradianceProfile.constant(d), path)
    if not isinstance(d, dict):
        raise ConfigError("expected a number or an object", path)
    d = dict(d)
    if "day_night" in d:
        dn = dict(d.pop("day_night"))
        days = take(dn, "days", 3, f"{path}.day_night", int)
        g = take(dn, "irradiance", 600.0, f"{path}.day_night")
        hours = take(dn, "day_hours", 12.0, f"{path}.day_night")
        no_extra(dn, f"{path}.day_night")
        no_extra(d, path)
        return _wrap(lambda: IrradianceProfile.day_night(days, g, hours), path)
    times = take(d, "times", None, path, list)
    values = take(d, "values", None, path, list)
    no_extra(d, path)
    if times is None or values is None:
        raise ConfigError("needs either day_night or times and values", path)
    return _wrap(lambda: IrradianceProfile(tuple(float(t) for t in times), tuple(float(v) for v in values)), path)


def _wrap(fn, path):
    try:
        return fn()
    except (DomainError, TypeError, ValueError) as e:
        raise ConfigError(str(e), path) from None


def drop_scenario(d: dict, path: str) -> DropScenario:
    return build(DropScenario, d, path)


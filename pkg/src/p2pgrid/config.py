"""Run configuration files and run manifests.

A config is a TOML file whose tables mirror :class:`ScenarioConfig`::

    seed = 42
    scenario = "I"

    [permission]
    v_max = 1.10
    guard_v = 0.005

    [ces.battery]
    power_kw = 25.0

Relative input paths are resolved against the config file's directory. A
run manifest (JSON) carries the fully resolved config under ``"config"``
and can be passed back to ``--config`` to repeat a run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import typing
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .feeders import bundled_feeder_text, bundled_households_path
from .scenario import ScenarioConfig

PATH_KEYS = ("network", "households", "profiles", "tariffs")


class ConfigError(ValueError):
    pass


def _build(base, data: dict, where: str, source: str):
    """Copy of dataclass instance ``base`` with the keys of ``data`` overridden."""
    cls = type(base)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: '{where or 'root'}' must be a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        key = f"{where}.{unknown[0]}" if where else unknown[0]
        raise ConfigError(f"{source}: unknown key '{key}'")
    kwargs = {}
    for name, value in data.items():
        key = f"{where}.{name}" if where else name
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(getattr(base, name), value, key, source)
        elif typing.get_origin(hint) is tuple:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{source}: '{key}' must be an array")
            kwargs[name] = tuple(float(v) for v in value)
        else:
            kwargs[name] = value
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {where or 'config'}: {exc}") from None


def config_from_dict(data: dict, source: str = "<config>", base_dir: Path | None = None
                     ) -> ScenarioConfig:
    data = dict(data)
    if base_dir is not None:
        for k in PATH_KEYS:
            if data.get(k):
                p = Path(data[k])
                data[k] = str(p if p.is_absolute() else (base_dir / p).resolve())
    return _build(ScenarioConfig(), data, "", source)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a TOML config or a JSON run manifest."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        data = data.get("config", data)
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, str(path), path.parent)


def config_to_dict(config: ScenarioConfig) -> dict:
    """All fields with defaults materialised (tuples become lists)."""
    return json.loads(json.dumps(dataclasses.asdict(config)))


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def input_digests(config: ScenarioConfig) -> dict[str, str]:
    out = {}
    if config.network is None:
        out["network"] = "bundled:" + digest_bytes(bundled_feeder_text().encode())
    if config.households is None:
        out["households"] = "bundled:" + digest_bytes(bundled_households_path().read_bytes())
    for k in PATH_KEYS:
        p = getattr(config, k)
        if p:
            out[k] = digest_bytes(Path(p).read_bytes())
    return out


def make_manifest(config: ScenarioConfig, schemes: list[str], outputs: dict[str, str],
                  duration_s: float) -> dict[str, Any]:
    return {
        "tool": "p2pgrid",
        "version": __version__,
        "seed": config.seed,
        "schemes": schemes,
        "config": config_to_dict(config),
        "inputs": input_digests(config),
        "outputs": outputs,
        "duration_s": duration_s,
    }

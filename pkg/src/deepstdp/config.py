"""``key = value`` configuration files for RunConfig.

Keys are namespaced by section: ``run.*`` for RunConfig's own fields, and
``snn.*``, ``kmeans.*``, ``train.*``, ``probe.*`` for the nested configs.
Unknown keys and unparsable values raise ConfigError.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .pipeline import SECTIONS, RunConfig


class ConfigError(ValueError):
    pass


def _field_types(obj) -> dict[str, type]:
    return {f.name: type(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def _coerce(raw: str, typ: type, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        pairs[key] = value
    return pairs


def apply_overrides(cfg: RunConfig, pairs: dict[str, str]) -> RunConfig:
    top: dict = {}
    nested: dict[str, dict] = {name: {} for name in SECTIONS}
    top_types = {k: v for k, v in _field_types(cfg).items() if k not in SECTIONS}
    for key, raw in pairs.items():
        section, _, name = key.partition(".")
        if section == "run" and name in top_types:
            top[name] = _coerce(raw, top_types[name], key)
        elif section in SECTIONS and name:
            sub = getattr(cfg, section)
            types = _field_types(sub)
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            nested[section][name] = _coerce(raw, types[name], key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        for section, values in nested.items():
            if values:
                top[section] = dataclasses.replace(getattr(cfg, section), **values)
        return dataclasses.replace(cfg, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    return apply_overrides(base if base is not None else RunConfig(), parse_pairs(text))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    return parse_config(path.read_text(encoding="utf-8"))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name not in SECTIONS:
            lines.append(f"run.{f.name} = {_fmt(getattr(cfg, f.name))}")
    for section in SECTIONS:
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            lines.append(f"{section}.{f.name} = {_fmt(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)

"""Flat ``key = value`` run configuration driving both model variants.

Blank lines and ``#`` comments are ignored. Every key belongs to either
:class:`ModelConfig` or :class:`TrainConfig`; all problems in a file are
reported together.
"""
from __future__ import annotations

from dataclasses import asdict, fields

from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig

_SECTIONS = (ModelConfig, TrainConfig)


def _field_types():
    out = {}
    for cls in _SECTIONS:
        defaults = cls()
        for f in fields(cls):
            out[f.name] = (cls, type(getattr(defaults, f.name)))
    return out


def _coerce(raw: str, typ):
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def parse_config(text: str, overrides: dict | None = None) -> tuple[ModelConfig, TrainConfig]:
    types = _field_types()
    values = {ModelConfig: {}, TrainConfig: {}}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = (s.strip() for s in line.partition("="))
        if not sep:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        if key not in types:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        cls, typ = types[key]
        try:
            values[cls][key] = _coerce(raw, typ)
        except ValueError:
            problems.append(f"line {lineno}: {key} expects {typ.__name__}, got {raw!r}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        cls, typ = types[key]
        values[cls][key] = typ(value)
    model_cfg = ModelConfig(**values[ModelConfig])
    train_cfg = TrainConfig(**values[TrainConfig])
    problems += model_cfg.problems() + train_cfg.problems()
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return model_cfg, train_cfg


def load_config(path=None, overrides: dict | None = None):
    text = "" if path is None else open(path, encoding="utf-8").read()
    return parse_config(text, overrides)


def format_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    lines = ["# model"]
    lines += [f"{k} = {v}" for k, v in asdict(model_cfg).items()]
    lines.append("# training")
    lines += [f"{k} = {v}" for k, v in asdict(train_cfg).items()]
    return "\n".join(lines) + "\n"


def default_config_text() -> str:
    return format_config(ModelConfig(), TrainConfig())

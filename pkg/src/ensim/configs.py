"""Config-file parsing and shipped presets.

Generator configurations are structured JSON; presets live in the package's
`presets/` directory. The CLB preset parameters are editable calibration
inputs, not fitted values.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .clb import ClbConfig, ClbLayer, DegradeConfig
from .core import ConfigError
from .speckle import UssConfig
from .tissue import TissueClass, TissueConfig

_MODELS = ("clb", "uss", "degrade", "tissue")
_META_KEYS = ("model", "description")


def _require(payload: dict, keys: tuple[str, ...], context: str) -> None:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise ConfigError(f"{context}: missing fields {missing}")


def _strip_meta(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if k not in _META_KEYS}


def _build(cls, payload: dict, context: str):
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigError(f"{context}: {exc}") from None


def parse_config(payload: dict[str, Any], context: str = "config"):
    """Build a generator config from a parsed JSON payload."""
    _require(payload, ("model",), context)
    model = payload["model"]
    body = _strip_meta(payload)
    if model == "clb":
        _require(payload, ("image_size", "layers"), context)
        layers = tuple(
            _build(ClbLayer, layer, f"{context} layer {i}")
            for i, layer in enumerate(body.pop("layers"))
        )
        return _build(ClbConfig, {**body, "layers": layers}, context)
    if model == "uss":
        return _build(UssConfig, body, context)
    if model == "degrade":
        return _build(DegradeConfig, body, context)
    if model == "tissue":
        _require(payload, ("image_size", "classes", "fat_value", "gland_value"),
                 context)
        classes = tuple(
            _build(TissueClass, c, f"{context} class {i}")
            for i, c in enumerate(body.pop("classes"))
        )
        return _build(TissueConfig, {**body, "classes": classes}, context)
    raise ConfigError(f"{context}: unknown model {model!r}, expected {_MODELS}")


def load_config(path: str | Path):
    """Parse a generator config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(payload, context=str(path))


def _preset_dir(kind: str):
    return resources.files("ensim").joinpath("presets").joinpath(kind)


def available_presets(kind: str) -> list[str]:
    try:
        entries = list(_preset_dir(kind).iterdir())
    except FileNotFoundError:
        raise ConfigError(f"unknown preset kind {kind!r}") from None
    return sorted(p.name[:-5] for p in entries if p.name.endswith(".json"))


def load_preset(kind: str, name: str):
    """Load a shipped preset, e.g. load_preset("uss", "snd30")."""
    ref = _preset_dir(kind).joinpath(f"{name}.json")
    try:
        payload = json.loads(ref.read_text())
    except FileNotFoundError:
        raise ConfigError(
            f"no {kind} preset {name!r}; available: {available_presets(kind)}"
        ) from None
    return parse_config(payload, context=f"preset {kind}/{name}")

# src/utils/config.py

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel

from src.utils.errors import ConfigError

M = TypeVar("M", bound=BaseModel)


def load_flat_config(path: Union[str, Path, None]) -> Dict[str, str]:
    """
    Read a flat key=value file (comments and blank lines ignored).
    """
    if path is None:
        return {}
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"Config file not found: {cfg_path}")
    values = dotenv_values(cfg_path)
    return {key: value for key, value in values.items() if value is not None}


def known_keys(*models: Type[BaseModel]) -> Dict[str, Type[BaseModel]]:
    keys: Dict[str, Type[BaseModel]] = {}
    for model in models:
        for name in model.model_fields:
            keys[name] = model
    return keys


def check_keys(values: Mapping[str, Any], allowed: Iterable[str], source: str) -> None:
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"{source}: unknown config key(s): {', '.join(unknown)}")


def build_config(model: Type[M], *layers: Mapping[str, Any]) -> M:
    """
    Merge layers left to right (later wins) and validate the keys that belong
    to `model`. Values may be strings; pydantic coerces them.
    """
    merged: Dict[str, Any] = {}
    for layer in layers:
        for key, value in layer.items():
            if key in model.model_fields and value is not None:
                merged[key] = value
    return model.model_validate(merged)


def dump_flat_config(*models: BaseModel, extra: Optional[Mapping[str, Any]] = None) -> str:
    """
    Sorted key=value lines, the form echoed by every command.
    """
    values: Dict[str, Any] = {}
    for model in models:
        values.update(model.model_dump())
    if extra:
        values.update({k: v for k, v in extra.items() if v is not None})
    return "\n".join(f"{key}={values[key]}" for key in sorted(values)) + "\n"


def write_flat_config(path: Union[str, Path], text: str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    return out

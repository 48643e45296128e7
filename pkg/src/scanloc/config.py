"""TOML configuration with ``[pipeline]``, ``[scanner-backend]``, ``[locator-backend]`` and ``[oracle]`` sections."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from scanloc.agents.base import ConfigurationError
from scanloc.agents.oracle import ORACLE_PRESETS, OracleConfig
from scanloc.agents.remote import BackendConfig
from scanloc.pipeline import PipelineConfig

SECTIONS = ("pipeline", "scanner-backend", "locator-backend", "oracle")


@dataclass(frozen=True)
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scanner_backend: BackendConfig | None = None
    locator_backend: BackendConfig | None = None
    oracle: OracleConfig = field(default_factory=lambda: oracle_preset("moderate"))


def oracle_preset(name: str, **overrides: Any) -> OracleConfig:
    if name not in ORACLE_PRESETS:
        raise ConfigurationError(f"unknown oracle preset {name!r}; expected one of {sorted(ORACLE_PRESETS)}")
    return OracleConfig(**{**ORACLE_PRESETS[name], **overrides})


def _check_keys(section: str, raw: dict[str, Any], allowed: set[str]) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigurationError(f"[{section}] has unknown keys: {sorted(unknown)}")


def _backend(section: str, raw: dict[str, Any], scanner: bool) -> BackendConfig:
    _check_keys(section, raw, {f.name for f in fields(BackendConfig)})
    try:
        return BackendConfig.scanner(**raw) if scanner else BackendConfig.locator(**raw)
    except TypeError as exc:
        raise ConfigurationError(f"[{section}]: {exc}") from None


def parse_config(raw: dict[str, Any]) -> AppConfig:
    """Build an :class:`AppConfig` from an already-parsed TOML mapping.

    Raises:
        ConfigurationError: on unknown sections/keys or invalid values.
    """
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    try:
        pipeline = PipelineConfig.from_dict(raw.get("pipeline", {}))
        oracle_raw = dict(raw.get("oracle", {}))
        preset = oracle_raw.pop("preset", "moderate")
        _check_keys("oracle", oracle_raw, {f.name for f in fields(OracleConfig)})
        oracle = oracle_preset(preset, **oracle_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None
    scanner = _backend("scanner-backend", raw["scanner-backend"], True) if "scanner-backend" in raw else None
    locator = _backend("locator-backend", raw["locator-backend"], False) if "locator-backend" in raw else None
    return AppConfig(pipeline, scanner, locator, oracle)


def load_config(path: str | Path | None) -> AppConfig:
    """Read a TOML config file; ``None`` gives the defaults."""
    if path is None:
        return AppConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(raw)


def with_pipeline(config: AppConfig, **overrides: Any) -> AppConfig:
    """Copy of ``config`` with pipeline settings replaced (None values ignored)."""
    values = {k: v for k, v in overrides.items() if v is not None}
    if not values:
        return config
    try:
        return replace(config, pipeline=replace(config.pipeline, **values))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None

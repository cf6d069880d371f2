"""
Centralized configuration module for plc-disagg.

Provides:
- Type-safe access to environment-level settings (log level, payload seed)
- PipelineConfig: the per-run configuration aggregate loaded from JSON
- Precedence handling: built-in defaults < config file < command-line flags
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from plc_disagg.errors import ConfigError
from plc_disagg.models import ChannelConfig, ClassifierConfig, DetectorConfig, ProbeConfig

logger = logging.getLogger(__name__)

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Config:
    """
    Environment-level settings with lazy reads and validation.

    Usage:
        from plc_disagg.config import config
        logging.basicConfig(level=config.log_level)
    """

    _instance: Optional["Config"] = None
    _initialized: bool = False

    def __new__(cls) -> "Config":
        """Singleton pattern - only one Config instance per process."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        if self._initialized:
            return
        self._initialized = True
        self._log_level_override: str | None = None
        logger.debug("Config singleton initialized")

    @property
    def log_level(self) -> str:
        """Logging level (PLC_DISAGG_LOG_LEVEL, default INFO)."""
        if self._log_level_override:
            return self._log_level_override
        return os.environ.get("PLC_DISAGG_LOG_LEVEL", "INFO").upper()

    @property
    def payload_seed(self) -> int:
        """Seed of the sender's pseudorandom payload when the run config sets none."""
        raw = os.environ.get("PLC_DISAGG_PAYLOAD_SEED", "0")
        try:
            return int(raw)
        except ValueError:
            logger.warning(f"PLC_DISAGG_PAYLOAD_SEED={raw!r} is not an integer - using 0")
            return 0

    def set_log_level(self, level: str | None) -> None:
        """Override the environment log level (used by --log-level)."""
        self._log_level_override = level.upper() if level else None

    def validate_required(self) -> list[str]:
        """
        Validate environment settings.

        Returns:
            List of problems (empty if all settings are usable)
        """
        problems = []
        if self.log_level not in _LOG_LEVELS:
            problems.append(f"PLC_DISAGG_LOG_LEVEL must be one of {', '.join(_LOG_LEVELS)}")
        raw_seed = os.environ.get("PLC_DISAGG_PAYLOAD_SEED")
        if raw_seed is not None and not raw_seed.lstrip("-").isdigit():
            problems.append("PLC_DISAGG_PAYLOAD_SEED must be an integer")
        if problems:
            logger.error(f"Invalid environment configuration: {problems}")
        return problems

    def reset(self) -> None:
        """Clear overrides (for tests)."""
        self._log_level_override = None


# Global singleton instance
config = Config()


# =============================================================================
# PIPELINE CONFIGURATION
# =============================================================================


class PipelineConfig(BaseModel):
    """
    Every tunable of a pipeline run, one section per module.

    Sections and their defaults:
    - probe: ProbeConfig (address 127.0.0.1:5201, 64 KiB blocks, 1 s interval, 3 warm-up samples)
    - channel: ChannelConfig (B0 1e8 bit/s, no noise, no drift, bounds [0.7, 1.0])
    - detector: DetectorConfig (W=31, theta_on 0.05, theta_off 0.03, m=5, min gap 3 s)
    - classifier: ClassifierConfig (tau_margin 1.0, tau_unknown 4.0, sigma_floor 0.005)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    """
    Load a PipelineConfig from a JSON file (defaults when path is None).

    Raises:
        ConfigError: If the file is missing, not JSON, or has unknown/invalid keys
    """
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e


def merge_overrides(pipeline: PipelineConfig, section: str, **overrides: Any) -> PipelineConfig:
    """
    Apply command-line overrides to one section; None values are ignored.

    Returns a new PipelineConfig, re-validated so overrides obey the same invariants
    as file values.
    """
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return pipeline
    current = getattr(pipeline, section).model_dump()
    current.update(updates)
    data = pipeline.model_dump()
    data[section] = current
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid {section} override: {e}") from e

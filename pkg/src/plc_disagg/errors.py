"""
Exception hierarchy for plc-disagg.

Every operational failure raised by the package derives from PlcDisaggError so
the CLI can map it to exit code 1 without catching unrelated bugs.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from plc_disagg.models import RunSummary


class PlcDisaggError(Exception):
    """Base class for all plc-disagg errors."""


class ConfigError(PlcDisaggError):
    """Invalid or unreadable configuration file."""


class TraceFormatError(PlcDisaggError):
    """Malformed trace, event or label file."""

    def __init__(self, message: str, row: int | None = None) -> None:
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ScheduleError(PlcDisaggError):
    """Schedule violates its invariants (overlap, unknown appliance, out of range)."""


class ScenarioError(PlcDisaggError):
    """Scenario file could not be loaded or validated."""


class HandshakeError(PlcDisaggError):
    """Peer sent a handshake frame with the wrong magic, version or role."""


class ProbeConnectionError(PlcDisaggError):
    """Connection refused, reset or lost during a probe run."""

    def __init__(self, message: str, summary: RunSummary | None = None) -> None:
        self.summary = summary
        super().__init__(message)

"""
Pytest configuration and shared fixtures for plc-disagg tests
"""

import socket
from pathlib import Path
from typing import Callable, Sequence

import pytest

from plc_disagg.config import config
from plc_disagg.models import ApplianceModel, BandwidthSample, ChannelConfig, Scenario, Schedule, Trace

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def reset_config():
    """
    Clear Config overrides before and after each test.

    The Config singleton keeps a --log-level override across calls to main(),
    which would otherwise leak between CLI tests.
    """
    config.reset()
    yield
    config.reset()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def clean_channel() -> ChannelConfig:
    """Noiseless, drift-free channel at 1e8 bit/s."""
    return ChannelConfig(base_bandwidth_bps=1.0e8, noise_std_frac=0.0, drift_walk_std_frac=0.0)


@pytest.fixture
def noisy_channel() -> ChannelConfig:
    """1% multiplicative noise, no drift."""
    return ChannelConfig(base_bandwidth_bps=1.0e8, noise_std_frac=0.01, drift_walk_std_frac=0.0)


@pytest.fixture
def heater() -> ApplianceModel:
    return ApplianceModel(id="heater", label="heater", drop_mean_frac=0.3, drop_std_frac=0.0, kind="resistive")


@pytest.fixture
def lamp() -> ApplianceModel:
    return ApplianceModel(id="lamp", label="lamp", drop_mean_frac=0.2, drop_std_frac=0.0, kind="electronic")


@pytest.fixture
def two_appliance_scenario(clean_channel, heater, lamp) -> Scenario:
    """heater on [100,160), lamp on [220,280) over a clean channel."""
    return Scenario(
        channel=clean_channel,
        appliances=(heater, lamp),
        schedule=Schedule.from_rows([["heater", 100, 160], ["lamp", 220, 280]]),
    )


@pytest.fixture
def make_trace() -> Callable[..., Trace]:
    """Build a 1 Hz trace from throughput values, t starting at `start`."""

    def _make(values: Sequence[float], start: int = 0, warmup: int = 0) -> Trace:
        return Trace(
            samples=tuple(
                BandwidthSample(t=start + i, interval_bytes=int(v // 8), throughput_bps=float(v), warmup=i < warmup)
                for i, v in enumerate(values)
            )
        )

    return _make


@pytest.fixture
def free_port() -> Callable[[], int]:
    """Return an unused loopback TCP port."""

    def _port() -> int:
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
            s.bind(("127.0.0.1", 0))
            return int(s.getsockname()[1])

    return _port

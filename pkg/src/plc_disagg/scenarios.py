"""
Built-in scenario presets.

- home7: three tube lights, two CFLs and two fans on one circuit, drop means
  0.06 apart (about 12 standard deviations of the per-interval spread)
- home7-colocated: same set with cfl1 and cfl2 on one outlet, drop means
  0.0025 apart so the classifier cannot tell them apart
- chargers: two phone chargers at different outlets, drops 0.06 and 0.12

All presets run the sequential protocol (60 s on, 60 s off) after a 60 s
no-load lead-in, with 1% measurement noise and a slow bounded baseline drift.
"""

from __future__ import annotations

import logging
from typing import Callable

from plc_disagg.disagg import run_protocol
from plc_disagg.errors import ScenarioError
from plc_disagg.models import ApplianceKind, ApplianceModel, ChannelConfig, Scenario

logger = logging.getLogger(__name__)

PROTOCOL_ON_S = 60
PROTOCOL_GAP_S = 60
PROTOCOL_LEAD_S = 60

_CHANNEL = ChannelConfig(
    base_bandwidth_bps=1.0e8,
    noise_std_frac=0.01,
    drift_walk_std_frac=0.0002,
    drift_bounds=(0.7, 1.0),
    seed=0,
)

_DROP_STD = 0.005


def _appliance(
    appliance_id: str, mean: float, location: str, kind: ApplianceKind, std: float = _DROP_STD
) -> ApplianceModel:
    return ApplianceModel(
        id=appliance_id,
        label=appliance_id,
        location_tag=location,
        drop_mean_frac=mean,
        drop_std_frac=std,
        kind=kind,
    )


def _protocol_scenario(appliances: list[ApplianceModel]) -> Scenario:
    schedule = run_protocol(
        [a.id for a in appliances], on_s=PROTOCOL_ON_S, gap_s=PROTOCOL_GAP_S, lead_s=PROTOCOL_LEAD_S
    )
    return Scenario(channel=_CHANNEL, appliances=tuple(appliances), schedule=schedule)


def home7(colocated: bool = False) -> Scenario:
    """Seven-appliance protocol scenario; colocated puts cfl2 next to cfl1."""
    cfl2 = (
        _appliance("cfl2", 0.2825, "living-room-east", "electronic")
        if colocated
        else _appliance("cfl2", 0.34, "bedroom", "electronic")
    )
    return _protocol_scenario(
        [
            _appliance("tube1", 0.10, "kitchen", "reactive"),
            _appliance("tube2", 0.16, "hallway", "reactive"),
            _appliance("tube3", 0.22, "study", "reactive"),
            _appliance("cfl1", 0.28, "living-room-east", "electronic"),
            cfl2,
            _appliance("fan1", 0.40, "living-room-west", "reactive"),
            _appliance("fan2", 0.46, "bedroom", "reactive"),
        ]
    )


def chargers() -> Scenario:
    """Two low-power phone chargers at distinct outlets."""
    return _protocol_scenario(
        [
            _appliance("charger1", 0.06, "kitchen", "electronic", std=0.003),
            _appliance("charger2", 0.12, "bedroom", "electronic", std=0.003),
        ]
    )


PRESETS: dict[str, Callable[[], Scenario]] = {
    "home7": home7,
    "home7-colocated": lambda: home7(colocated=True),
    "chargers": chargers,
}


def get_preset(name: str) -> Scenario:
    """
    Build a preset scenario by name.

    Raises:
        ScenarioError: If no preset has that name
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ScenarioError(f"unknown scenario preset {name!r} (available: {', '.join(sorted(PRESETS))})") from None
    logger.debug(f"Loaded scenario preset {name}")
    return factory()

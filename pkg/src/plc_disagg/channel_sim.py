"""
PLC channel capacity model and synthetic trace generator.

capacity(t) = baseline(t) * (1 - effective_drop(t)) * (1 + eps_t)

- baseline(t): random walk from B0 clamped to [lo*B0, hi*B0]
- effective_drop(t): 0 when idle, the active appliance's drop (drawn once per
  on-interval) when one is on, combine_drops(...) when several are on
  (experimental overlap flag only)
- eps_t: Gaussian multiplicative noise truncated at +/-4 sigma

Random draws come from three independent numpy streams (drift, noise, drops)
spawned from one SeedSequence and consumed in fixed-size blocks, so a value at t
does not depend on which other t were evaluated first.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from plc_disagg.errors import ScheduleError
from plc_disagg.models import ApplianceModel, BandwidthSample, ChannelConfig, Scenario, Schedule, Trace

logger = logging.getLogger(__name__)

# Draws are generated in blocks of this many seconds
_BLOCK = 1024
_NOISE_TRUNCATION_SIGMA = 4.0
_DROP_TRUNCATION_SIGMA = 3.0


def combine_drops(active_drops: Sequence[float]) -> float:
    """
    Effective drop of simultaneously active appliances (experimental).

    Independent attenuation: 1 - prod(1 - d_i). Empty list gives 0, one drop is
    returned unchanged.

    Example:
        >>> combine_drops([0.3, 0.2])
        0.44000000000000006
    """
    for d in active_drops:
        if not 0 <= d < 1:
            raise ValueError(f"drop fractions must be in [0, 1), got {d}")
    if not active_drops:
        return 0.0
    if len(active_drops) == 1:
        return float(active_drops[0])
    survival = 1.0
    for d in active_drops:
        survival *= 1.0 - d
    return 1.0 - survival


class ChannelModel:
    """
    Capacity of one simulated link under one schedule, with explicit RNG state.

    Usage:
        model = ChannelModel(config, appliances, schedule, seed=7)
        model.capacity_at(120)
        model.capacity_series(600)
    """

    def __init__(
        self,
        config: ChannelConfig,
        appliances: Sequence[ApplianceModel],
        schedule: Schedule,
        seed: int | None = None,
    ) -> None:
        self.config = config
        self.schedule = schedule
        self.seed = config.seed if seed is None else seed
        by_id = {a.id: a for a in appliances}
        unknown = schedule.appliance_ids() - set(by_id)
        if unknown:
            raise ScheduleError(f"schedule references undefined appliances: {sorted(unknown)}")
        if not schedule.experimental_overlap:
            _check_no_overlap(schedule)

        drift_seq, noise_seq, drop_seq = np.random.SeedSequence(self.seed).spawn(3)
        self._drift_rng = np.random.default_rng(drift_seq)
        self._noise_rng = np.random.default_rng(noise_seq)
        drop_rng = np.random.default_rng(drop_seq)

        # One draw per on-interval, in schedule order
        self.entry_drops: tuple[float, ...] = tuple(
            _draw_drop(drop_rng, by_id[entry.appliance_id]) for entry in schedule.entries
        )

        b0 = config.base_bandwidth_bps
        lo, hi = config.drift_bounds
        self._lo = lo * b0
        self._hi = hi * b0
        self._baseline: list[float] = []
        self._eps = np.empty(0)
        self._walk_level = min(max(b0, self._lo), self._hi)

    # -------------------------------------------------------------------------
    # series
    # -------------------------------------------------------------------------

    def _extend(self, n: int) -> None:
        """Generate baseline and noise blocks until at least n seconds exist."""
        cfg = self.config
        step_std = cfg.drift_walk_std_frac * cfg.base_bandwidth_bps
        sigma = cfg.noise_std_frac
        while len(self._baseline) < n:
            steps = self._drift_rng.normal(0.0, step_std, _BLOCK) if step_std > 0 else np.zeros(_BLOCK)
            level = self._walk_level
            for step in steps:
                level = min(max(level + float(step), self._lo), self._hi)
                self._baseline.append(level)
            self._walk_level = level

            if sigma > 0:
                eps = self._noise_rng.normal(0.0, sigma, _BLOCK)
                bound = _NOISE_TRUNCATION_SIGMA * sigma
                eps = np.clip(eps, -bound, bound)
            else:
                eps = np.zeros(_BLOCK)
            self._eps = np.concatenate([self._eps, eps])

    def baseline_series(self, duration_s: int) -> np.ndarray:
        """No-load capacity for t in [0, duration_s)."""
        self._extend(duration_s)
        return np.asarray(self._baseline[:duration_s], dtype=np.float64)

    def survival_series(self, duration_s: int) -> np.ndarray:
        """1 - combined drop of the active entries for t in [0, duration_s)."""
        active: list[list[float]] = [[] for _ in range(duration_s)]
        for entry, drop in zip(self.schedule.entries, self.entry_drops):
            for t in range(max(entry.t_on, 0), min(entry.t_off, duration_s)):
                active[t].append(drop)
        return np.array([1.0 - combine_drops(d) for d in active], dtype=np.float64)

    def capacity_series(self, duration_s: int) -> np.ndarray:
        """Capacity in bits/s for t in [0, duration_s)."""
        if duration_s < 0:
            raise ValueError("duration_s must be >= 0")
        baseline = self.baseline_series(duration_s)
        return baseline * self.survival_series(duration_s) * (1.0 + self._eps[:duration_s])

    def capacity_at(self, t: int) -> float:
        """Capacity in bits/s at integer second t (t >= 0)."""
        if t < 0:
            raise ValueError("t must be >= 0")
        self._extend(t + 1)
        active = [drop for entry, drop in zip(self.schedule.entries, self.entry_drops) if entry.t_on <= t < entry.t_off]
        survival = 1.0 - combine_drops(active)
        return float(self._baseline[t] * survival * (1.0 + self._eps[t]))

    @classmethod
    def from_scenario(cls, scenario: Scenario, seed: int | None = None) -> ChannelModel:
        return cls(scenario.channel, scenario.appliances, scenario.schedule, seed=seed)


def _draw_drop(rng: np.random.Generator, appliance: ApplianceModel) -> float:
    mean, std = appliance.drop_mean_frac, appliance.drop_std_frac
    value = float(rng.normal(mean, std))
    lo = max(0.0, mean - _DROP_TRUNCATION_SIGMA * std)
    hi = mean + _DROP_TRUNCATION_SIGMA * std
    return min(max(value, lo), hi)


def _check_no_overlap(schedule: Schedule) -> None:
    ordered = sorted(schedule.entries, key=lambda e: (e.t_on, e.t_off))
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.overlaps(cur):
            raise ScheduleError(
                f"overlapping entries {prev.appliance_id} and {cur.appliance_id} require the experimental overlap flag"
            )


def capacity_at(
    t: int,
    config: ChannelConfig,
    appliances: Sequence[ApplianceModel],
    schedule: Schedule,
    seed: int | None = None,
) -> float:
    """Functional form of ChannelModel.capacity_at; deterministic given seed."""
    return ChannelModel(config, appliances, schedule, seed=seed).capacity_at(t)


def generate_trace(
    config: ChannelConfig,
    appliances: Sequence[ApplianceModel],
    schedule: Schedule,
    duration_s: int,
    seed: int | None = None,
) -> Trace:
    """
    Synthesize a 1 Hz trace of the channel under the schedule.

    Byte counts are throughput / 8 rounded down. Identical arguments give an
    identical trace.

    Raises:
        ScheduleError: If the schedule extends past duration_s or references unknown appliances
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if schedule.end > duration_s:
        raise ScheduleError(f"schedule ends at t={schedule.end}, beyond duration {duration_s}s")
    model = ChannelModel(config, appliances, schedule, seed=seed)
    capacity = model.capacity_series(duration_s)
    samples = tuple(
        BandwidthSample.model_construct(t=t, interval_bytes=int(value // 8), throughput_bps=float(value), warmup=False)
        for t, value in enumerate(capacity.tolist())
    )
    logger.debug(f"Generated {duration_s}s trace (seed={model.seed}, {len(schedule.entries)} scheduled intervals)")
    return Trace(samples=samples)


def generate_scenario_trace(scenario: Scenario, duration_s: int | None = None, seed: int | None = None) -> Trace:
    """generate_trace for a Scenario; duration defaults to the schedule end."""
    duration = duration_s if duration_s is not None else max(scenario.schedule.end, 1)
    return generate_trace(scenario.channel, scenario.appliances, scenario.schedule, duration, seed=seed)

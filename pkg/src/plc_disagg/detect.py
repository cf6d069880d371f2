"""
Bandwidth-drop event detection.

Threshold-with-hysteresis detector over a rolling-median no-load baseline:

1. The baseline is the median of the last W samples classified as no-load.
   Samples below baseline*(1 - theta_off) are held out of the window while the
   detector decides whether they start an event, and stay out if they do.
   A held run that reaches W samples without confirming an onset is a no-load
   level shift and is released into the window.
2. An event opens after m consecutive samples below baseline*(1 - theta_on);
   t_on is the first of them. The baseline is frozen for the duration of the event.
3. An event closes after m consecutive samples at or above
   baseline*(1 - theta_off); t_off is the first of them.
4. Events separated by less than min_gap_s merge.
5. drop_bps = frozen baseline - median(throughput during the event).

A trace that starts inside an event is scanned a second time, seeded with the
no-load level reached after the appliance switched off.

Warm-up samples are skipped. Each pass runs over plain lists, so
results are deterministic and scale-invariant (multiplying the trace by k
leaves t_on, t_off and drop_frac unchanged).
"""

from __future__ import annotations

import logging
import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import ValidationError

from plc_disagg.errors import ConfigError
from plc_disagg.models import DetectorConfig, Event, Trace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineEstimate:
    """Per-sample no-load baseline with the samples excluded as in-event."""

    values: np.ndarray
    in_event: np.ndarray
    degenerate: bool = False


@dataclass
class _Span:
    start: int
    baseline: float
    end: Optional[int] = None  # index of the first closing sample; None while open


@dataclass
class _ScanResult:
    estimate: BaselineEstimate
    spans: list[_Span] = field(default_factory=list)


def _scan_pass(values: list[float], warm: list[bool], config: DetectorConfig, seed: Optional[float]) -> _ScanResult:
    n = len(values)
    m = config.min_event_s
    on_factor = 1.0 - config.onset_threshold_frac
    off_factor = 1.0 - config.offset_threshold_frac

    window: deque[float] = deque(maxlen=config.baseline_window)
    baseline = np.full(n, np.nan)
    in_event = np.zeros(n, dtype=bool)
    spans: list[_Span] = []

    current: Optional[float] = seed
    held: list[int] = []
    streak = 0
    active: Optional[_Span] = None
    closing: list[int] = []

    for i, x in enumerate(values):
        if warm[i]:
            continue

        if current is None:
            window.append(x)
            current = statistics.median(window)
            baseline[i] = current
            continue

        if active is None:
            if x < current * off_factor:
                held.append(i)
                streak = streak + 1 if x < current * on_factor else 0
                baseline[i] = current
                if streak >= m:
                    start = held[0] if config.onset_backtrack else held[-m]
                    for j in held:
                        if j < start:
                            window.append(values[j])
                        else:
                            in_event[j] = True
                    active = _Span(start=start, baseline=current)
                    held, streak = [], 0
                elif len(held) - streak >= config.baseline_window:
                    # a no-load level shift into the hysteresis band: let the median follow it
                    settled = len(held) - streak
                    for j in held[:settled]:
                        window.append(values[j])
                    held = held[settled:]
                    current = statistics.median(window)
                    baseline[i] = current
                continue

            for j in held:
                window.append(values[j])
            held, streak = [], 0
            window.append(x)
            current = statistics.median(window)
            baseline[i] = current
            continue

        in_event[i] = True
        baseline[i] = active.baseline
        if x >= active.baseline * off_factor:
            closing.append(i)
        else:
            closing = []
        if len(closing) >= m:
            active.end = closing[0]
            spans.append(active)
            active = None
            for j in closing:
                in_event[j] = False
                window.append(values[j])
            current = statistics.median(window)
            for j in closing:
                baseline[j] = current
            closing = []

    usable = n - sum(warm)
    degenerate = current is None
    if active is not None:
        spans.append(active)
        open_len = sum(1 for j in range(active.start, n) if not warm[j])
        if open_len * 2 > usable:
            degenerate = True

    _fill_unset(baseline)
    return _ScanResult(BaselineEstimate(values=baseline, in_event=in_event, degenerate=degenerate), spans)


def _late_start_level(
    first: _ScanResult, values: list[float], warm: list[bool], config: DetectorConfig
) -> Optional[float]:
    """
    No-load level to restart from when the trace began inside an event.

    The opening m samples are compared with every later run of m samples up to
    the first event the first pass found. A run whose samples all sit more than
    theta_on above the opening median shows the opening was an appliance drop;
    the median of that run, extended while samples stay within the hysteresis
    band (at most W samples), is returned. None when the start looks like no-load.
    """
    m = config.min_event_s
    limit = first.spans[0].start if first.spans else len(values)
    usable = [i for i in range(limit) if not warm[i]]
    if len(usable) < 2 * m:
        return None

    on_factor = 1.0 - config.onset_threshold_frac
    off_factor = 1.0 - config.offset_threshold_frac
    opening = statistics.median(values[i] for i in usable[:m])

    run = 0
    for pos in range(m, len(usable)):
        run = run + 1 if values[usable[pos]] * on_factor > opening else 0
        if run < m:
            continue
        begin = pos - m + 1
        level = statistics.median(values[i] for i in usable[begin : pos + 1])
        stop = pos + 1
        end = min(len(usable), begin + config.baseline_window)
        while stop < end and values[usable[stop]] >= level * off_factor:
            stop += 1
        return statistics.median(values[i] for i in usable[begin:stop])
    return None


def _scan(trace: Trace, config: DetectorConfig) -> _ScanResult:
    values = trace.throughput().tolist()
    warm = trace.warmup_mask().tolist()

    result = _scan_pass(values, warm, config, seed=None)
    level = _late_start_level(result, values, warm, config)
    if level is not None:
        logger.info(f"Trace starts below the later no-load level; re-scanning from {level:.6g} bps")
        result = _scan_pass(values, warm, config, seed=level)

    if result.estimate.degenerate and values:
        usable = len(values) - sum(warm)
        logger.warning(
            f"Baseline frozen for most of the trace ({usable} usable samples); estimate held at last no-load value"
        )
    return result


def _fill_unset(values: np.ndarray) -> None:
    """Carry the running estimate into warm-up positions (back-filling the prefix)."""
    last = np.nan
    for i in range(len(values)):
        if np.isnan(values[i]):
            values[i] = last
        else:
            last = values[i]
    finite = np.flatnonzero(~np.isnan(values))
    if finite.size:
        values[: finite[0]] = values[finite[0]]


def _resolve_config(window: int | None, config: DetectorConfig | None) -> DetectorConfig:
    cfg = config or DetectorConfig()
    if window is None or window == cfg.baseline_window:
        return cfg
    try:
        return DetectorConfig.model_validate({**cfg.model_dump(), "baseline_window": window})
    except ValidationError as e:
        raise ConfigError(f"invalid baseline window {window}: {e.errors()[0]['msg']}") from e


def estimate_baseline(
    trace: Trace, window: int | None = None, config: DetectorConfig | None = None
) -> BaselineEstimate:
    """
    Rolling-median no-load baseline, one value per sample.

    Args:
        trace: Input trace (warm-up samples are excluded from the window)
        window: Window length W; overrides config.baseline_window when given
        config: Thresholds deciding which samples count as in-event

    Raises:
        ValueError: If the trace is empty
    """
    if not len(trace):
        raise ValueError("cannot estimate a baseline for an empty trace")
    return _scan(trace, _resolve_config(window, config)).estimate


def _merge(spans: list[_Span], timestamps: list[int], min_gap_s: int) -> list[_Span]:
    merged: list[_Span] = []
    for span in spans:
        if merged:
            prev = merged[-1]
            if prev.end is not None and timestamps[span.start] - timestamps[prev.end] < min_gap_s:
                logger.debug(f"Merging events at t={timestamps[prev.start]} and t={timestamps[span.start]}")
                prev.end = span.end
                continue
        merged.append(_Span(start=span.start, baseline=span.baseline, end=span.end))
    return merged


def detect_events(trace: Trace, config: DetectorConfig | None = None) -> list[Event]:
    """
    Detect bandwidth-drop events in a trace.

    Returns:
        Events sorted by t_on and never overlapping. An event still active at the
        end of the trace has t_off=None and open=True.
    """
    config = config or DetectorConfig()
    if not len(trace):
        return []

    scan = _scan(trace, config)
    timestamps = trace.timestamps().tolist()
    values = trace.throughput().tolist()
    warm = trace.warmup_mask().tolist()

    events: list[Event] = []
    for span in _merge(scan.spans, timestamps, config.min_gap_s):
        stop = span.end if span.end is not None else len(values)
        in_span = [values[j] for j in range(span.start, stop) if not warm[j]]
        level = statistics.median(in_span)
        drop_bps = span.baseline - level
        if drop_bps <= 0 or span.baseline <= 0:
            logger.debug(f"Discarding non-positive drop at t={timestamps[span.start]}")
            continue
        t_on = timestamps[span.start]
        t_off = timestamps[span.end] if span.end is not None else None
        events.append(
            Event(
                t_on=t_on,
                t_off=t_off,
                drop_bps=drop_bps,
                drop_frac=drop_bps / span.baseline,
                baseline_bps=span.baseline,
                n_samples=(t_off - t_on) if t_off is not None else len(in_span),
                open=t_off is None,
                outage=level == 0,
            )
        )

    logger.info(f"Detected {len(events)} events in {len(trace)} samples")
    return events

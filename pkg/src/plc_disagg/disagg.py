"""
Signature calibration, event classification and scoring.

Workflow:
1. run_protocol builds the sequential on/off schedule used for calibration runs
2. calibrate matches detected events to the schedule and summarizes each label's
   fractional drop as a Signature
3. classify assigns every event a verdict (labeled, ambiguous or unknown) by
   z-score against the signatures
4. evaluate scores classifications against a ground-truth schedule
5. compare_signatures checks that a repeat calibration reproduces a reference
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import pandas as pd

from plc_disagg.detect import detect_events
from plc_disagg.errors import ScheduleError
from plc_disagg.models import (
    ApplianceModel,
    Candidate,
    Classification,
    ClassifierConfig,
    DetectorConfig,
    Event,
    Metrics,
    Schedule,
    ScheduleEntry,
    Signature,
    SignatureShift,
    Trace,
)

logger = logging.getLogger(__name__)

MIN_MATCH_OVERLAP = 0.5
MIN_RECOMMENDED_OBSERVATIONS = 5
MISSED = "<missed>"
SPURIOUS = "<spurious>"


# =============================================================================
# PROTOCOL SCHEDULE
# =============================================================================


def run_protocol(
    labels: Sequence[str],
    on_s: int = 60,
    gap_s: int = 60,
    lead_s: int = 0,
    repeats: int = 1,
) -> Schedule:
    """
    Sequential calibration schedule: each label on for on_s, then gap_s off.

    Entry k occupies [lead_s + k*(on_s+gap_s), lead_s + k*(on_s+gap_s) + on_s).
    With repeats > 1 the whole label sequence is run again back to back.

    Example:
        >>> run_protocol(["a", "b"]).to_rows()
        [['a', 0, 60], ['b', 120, 180]]

    Raises:
        ScheduleError: If labels is empty or a duration is not positive
    """
    if not labels:
        raise ScheduleError("run_protocol needs at least one label")
    if on_s <= 0 or gap_s <= 0:
        raise ScheduleError(f"on_s and gap_s must be positive (got {on_s}, {gap_s})")
    if lead_s < 0 or repeats < 1:
        raise ScheduleError("lead_s must be >= 0 and repeats >= 1")
    period = on_s + gap_s
    entries = tuple(
        ScheduleEntry(appliance_id=label, t_on=lead_s + k * period, t_off=lead_s + k * period + on_s)
        for k, label in enumerate(list(labels) * repeats)
    )
    return Schedule(entries=entries)


# =============================================================================
# CALIBRATION
# =============================================================================


@dataclass(frozen=True)
class Observation:
    """A detected event matched to the schedule entry it overlaps most."""

    entry: ScheduleEntry
    event: Event
    label: str


@dataclass
class CalibrationResult:
    signatures: list[Signature] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)
    unmatched_events: list[Event] = field(default_factory=list)
    missed_entries: list[ScheduleEntry] = field(default_factory=list)


def _overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> int:
    return max(0, min(a_end, b_end) - max(a_start, b_start))


def match_events(
    events: Sequence[Event], schedule: Schedule
) -> tuple[list[tuple[ScheduleEntry, Event]], list[Event], list[ScheduleEntry]]:
    """
    Pair events with schedule entries by maximal interval overlap.

    An event pairs with the entry it overlaps most, provided the overlap covers at
    least half of the entry. Each entry keeps at most one event (the largest
    overlap, earliest on ties).

    Returns:
        (pairs, unmatched events, missed entries)
    """
    best: dict[int, tuple[int, int]] = {}  # entry index -> (overlap, event index)
    unmatched: list[Event] = []
    for ei, event in enumerate(events):
        scored = [
            (_overlap(event.t_on, event.end, entry.t_on, entry.t_off), -k, k)
            for k, entry in enumerate(schedule.entries)
        ]
        if not scored:
            unmatched.append(event)
            continue
        overlap, _, k = max(scored)
        entry = schedule.entries[k]
        if overlap < MIN_MATCH_OVERLAP * (entry.t_off - entry.t_on):
            unmatched.append(event)
            continue
        if k in best and best[k][0] >= overlap:
            unmatched.append(event)
            continue
        if k in best:
            unmatched.append(events[best[k][1]])
        best[k] = (overlap, ei)

    pairs = [(schedule.entries[k], events[ei]) for k, (_, ei) in sorted(best.items())]
    missed = [entry for k, entry in enumerate(schedule.entries) if k not in best]
    unmatched.sort(key=lambda e: e.t_on)
    return pairs, unmatched, missed


def _common(values: Iterable[Optional[str]]) -> Optional[str]:
    distinct = set(values)
    return distinct.pop() if len(distinct) == 1 else None


def build_signatures(
    observations: Sequence[Observation], appliances: Sequence[ApplianceModel] = ()
) -> list[Signature]:
    """Mean and sample standard deviation of matched drops, one Signature per label."""
    by_label: dict[str, list[Event]] = {}
    for obs in observations:
        by_label.setdefault(obs.label, []).append(obs.event)

    signatures = []
    for label in sorted(by_label):
        events = by_label[label]
        fracs = [e.drop_frac for e in events]
        bps = [e.drop_bps for e in events]
        models = [a for a in appliances if a.label == label]
        signatures.append(
            Signature(
                label=label,
                drop_mean_bps=statistics.fmean(bps),
                drop_std_bps=statistics.stdev(bps) if len(bps) > 1 else 0.0,
                drop_mean_frac=statistics.fmean(fracs),
                drop_std_frac=statistics.stdev(fracs) if len(fracs) > 1 else 0.0,
                n_observations=len(events),
                location_tag=_common(a.location_tag for a in models) if models else None,
                kind=_common(a.kind for a in models) if models else None,
            )
        )
    return signatures


def _observe(
    trace: Trace,
    schedule: Schedule,
    detector_config: DetectorConfig,
    label_map: Mapping[str, str],
    result: CalibrationResult,
) -> None:
    events = detect_events(trace, detector_config)
    pairs, unmatched, missed = match_events(events, schedule)
    for entry, event in pairs:
        label = label_map.get(entry.appliance_id, entry.appliance_id)
        result.observations.append(Observation(entry=entry, event=event, label=label))
    result.unmatched_events.extend(unmatched)
    result.missed_entries.extend(missed)
    for entry in missed:
        logger.warning(f"No event matched scheduled {entry.appliance_id} [{entry.t_on}, {entry.t_off})")
    if unmatched:
        logger.warning(f"{len(unmatched)} detected event(s) matched no schedule entry")


def calibrate(
    trace: Trace,
    schedule: Schedule,
    detector_config: DetectorConfig | None = None,
    label_map: Mapping[str, str] | None = None,
    appliances: Sequence[ApplianceModel] = (),
) -> CalibrationResult:
    """
    Learn drop signatures from one run with a known schedule.

    Args:
        trace: Trace recorded or generated under the schedule
        schedule: Ground truth; must not contain overlapping entries
        detector_config: Detector settings (defaults when None)
        label_map: appliance_id -> label; ids map to themselves when absent
        appliances: Appliance models supplying location_tag/kind for reporting

    Returns:
        CalibrationResult with one signature per label that had at least one match
    """
    return calibrate_runs([(trace, schedule)], detector_config, label_map, appliances)


def calibrate_runs(
    runs: Iterable[tuple[Trace, Schedule]],
    detector_config: DetectorConfig | None = None,
    label_map: Mapping[str, str] | None = None,
    appliances: Sequence[ApplianceModel] = (),
) -> CalibrationResult:
    """calibrate over several runs, pooling every matched observation."""
    detector_config = detector_config or DetectorConfig()
    if label_map is None:
        label_map = {a.id: a.label for a in appliances}
    result = CalibrationResult()
    n_runs = 0
    for trace, schedule in runs:
        if schedule.experimental_overlap:
            raise ScheduleError("calibration schedules must not overlap")
        _observe(trace, schedule, detector_config, label_map, result)
        n_runs += 1
    result.signatures = build_signatures(result.observations, appliances)
    thin = [s.label for s in result.signatures if s.n_observations < MIN_RECOMMENDED_OBSERVATIONS]
    if thin:
        logger.warning(
            f"Fewer than {MIN_RECOMMENDED_OBSERVATIONS} observations for: {', '.join(thin)}; signature spread is unreliable"
        )
    logger.info(
        f"Calibrated {len(result.signatures)} signatures from {len(result.observations)} observations over {n_runs} run(s)"
    )
    return result


# =============================================================================
# CLASSIFICATION
# =============================================================================


def _z_scores(drop_frac: float, signatures: Sequence[Signature], sigma_floor: float) -> list[Candidate]:
    scored = [
        Candidate(label=s.label, z_score=abs(drop_frac - s.drop_mean_frac) / max(s.std_frac, sigma_floor))
        for s in signatures
    ]
    return sorted(scored, key=lambda c: (c.z_score, c.label))


def classify_event(event: Event, signatures: Sequence[Signature], config: ClassifierConfig) -> Classification:
    """Verdict for one event; signatures must be non-empty with unique labels."""
    ranked = _z_scores(event.drop_frac, signatures, config.sigma_floor)
    best = ranked[0]
    if best.z_score > config.tau_unknown:
        return Classification(event=event, verdict="unknown", z_score=best.z_score)

    runner_up = ranked[1].z_score if len(ranked) > 1 else math.inf
    if runner_up - best.z_score >= config.tau_margin:
        return Classification(
            event=event, verdict="labeled", label=best.label, z_score=best.z_score, candidates=(best,)
        )

    close = tuple(c for c in ranked if c.z_score - best.z_score < config.tau_margin)
    return Classification(event=event, verdict="ambiguous", z_score=best.z_score, candidates=close)


def classify(
    events: Sequence[Event],
    signatures: Sequence[Signature],
    tau_margin: float = 1.0,
    tau_unknown: float = 4.0,
    sigma_floor: float = 0.005,
) -> list[Classification]:
    """
    Classify events by z-score of their drop_frac against each signature.

    z = |drop_frac - mean_frac| / max(std_frac, sigma_floor). The best label is
    accepted when its z is at most tau_unknown and the runner-up trails by at
    least tau_margin; when the runner-up is closer every label within
    tau_margin of the best is reported as ambiguous. Ties order by label, so
    the signature order never matters.

    Raises:
        ValueError: If signatures is empty or labels repeat
    """
    if not signatures:
        raise ValueError("classify needs at least one signature")
    labels = [s.label for s in signatures]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate signature labels: {sorted({x for x in labels if labels.count(x) > 1})}")
    config = ClassifierConfig(tau_margin=tau_margin, tau_unknown=tau_unknown, sigma_floor=sigma_floor)

    results = [classify_event(event, signatures, config) for event in events]
    counts = {v: sum(1 for r in results if r.verdict == v) for v in ("labeled", "ambiguous", "unknown")}
    logger.info(
        f"Classified {len(results)} events: {counts['labeled']} labeled, "
        f"{counts['ambiguous']} ambiguous, {counts['unknown']} unknown"
    )
    return results


# =============================================================================
# EVALUATION
# =============================================================================


def evaluate(
    classifications: Sequence[Classification],
    truth: Schedule,
    timing_tolerance_s: int = 5,
    label_map: Mapping[str, str] | None = None,
) -> Metrics:
    """
    Score classifications against a ground-truth schedule.

    Each truth entry is widened by timing_tolerance_s on both sides; a
    classification and a truth entry can match when their intervals overlap.
    Pairs are taken greedily by largest overlap, then smallest onset error,
    one-to-one.

    Returns:
        Metrics; label accuracy credits ambiguous verdicts that list the truth
        label, accuracy_strict counts them as wrong.
    """
    label_map = label_map or {}
    truth_labels = [label_map.get(e.appliance_id, e.appliance_id) for e in truth.entries]

    candidates = []
    for ci, item in enumerate(classifications):
        event = item.event
        for ti, entry in enumerate(truth.entries):
            overlap = _overlap(
                event.t_on, event.end, entry.t_on - timing_tolerance_s, entry.t_off + timing_tolerance_s
            )
            if overlap > 0:
                candidates.append((-overlap, abs(event.t_on - entry.t_on), ci, ti))
    candidates.sort()

    used_c: set[int] = set()
    used_t: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _, _, ci, ti in candidates:
        if ci in used_c or ti in used_t:
            continue
        used_c.add(ci)
        used_t.add(ti)
        pairs.append((ci, ti))

    n_events, n_truth, n_matched = len(classifications), len(truth.entries), len(pairs)
    if not n_matched and not n_events and not n_truth:
        return Metrics()

    precision = n_matched / n_events if n_events else 0.0
    recall = n_matched / n_truth if n_truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    credited = sum(1 for ci, ti in pairs if classifications[ci].credited(truth_labels[ti]))
    strict = sum(
        1
        for ci, ti in pairs
        if classifications[ci].verdict == "labeled" and classifications[ci].label == truth_labels[ti]
    )
    ambiguous = sum(1 for ci, _ in pairs if classifications[ci].verdict == "ambiguous")
    onset_errors = [abs(classifications[ci].event.t_on - truth.entries[ti].t_on) for ci, ti in pairs]

    rows = [(truth_labels[ti], classifications[ci].predicted) for ci, ti in pairs]
    rows += [(truth_labels[ti], MISSED) for ti in range(n_truth) if ti not in used_t]
    rows += [(SPURIOUS, classifications[ci].predicted) for ci in range(n_events) if ci not in used_c]

    return Metrics(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=credited / n_matched if n_matched else 0.0,
        accuracy_strict=strict / n_matched if n_matched else 0.0,
        ambiguous_rate=ambiguous / n_matched if n_matched else 0.0,
        n_events=n_events,
        n_truth=n_truth,
        n_matched=n_matched,
        mean_onset_error_s=statistics.fmean(onset_errors) if onset_errors else 0.0,
        confusion=confusion_matrix(rows),
    )


def confusion_matrix(rows: Sequence[tuple[str, str]]) -> dict[str, dict[str, int]]:
    """truth -> predicted -> count, via pandas.crosstab (labels sorted)."""
    if not rows:
        return {}
    frame = pd.DataFrame(rows, columns=["truth", "predicted"])
    table = pd.crosstab(frame["truth"], frame["predicted"])
    return {
        str(truth): {str(pred): int(count) for pred, count in row.items()}
        for truth, row in table.to_dict(orient="index").items()
    }


# =============================================================================
# STABILITY
# =============================================================================


def compare_signatures(
    reference: Sequence[Signature],
    current: Sequence[Signature],
    tau: float = 2.0,
    sigma_floor: float = 0.005,
) -> list[SignatureShift]:
    """
    Check that a repeat calibration reproduces a reference signature set.

    shift_z is the change of drop_mean_frac in reference z-units; labels with
    shift_z above tau are reported as shifted.
    """
    ref = {s.label: s for s in reference}
    cur = {s.label: s for s in current}
    report = []
    for label in sorted(set(ref) | set(cur)):
        if label not in cur:
            report.append(SignatureShift(label=label, reference_frac=ref[label].drop_mean_frac, status="missing"))
            continue
        if label not in ref:
            report.append(SignatureShift(label=label, current_frac=cur[label].drop_mean_frac, status="new"))
            continue
        r, c = ref[label], cur[label]
        shift = abs(c.drop_mean_frac - r.drop_mean_frac) / max(r.std_frac, sigma_floor)
        report.append(
            SignatureShift(
                label=label,
                reference_frac=r.drop_mean_frac,
                current_frac=c.drop_mean_frac,
                shift_z=shift,
                status="shifted" if shift > tau else "stable",
            )
        )
    shifted = [s.label for s in report if s.status != "stable"]
    if shifted:
        logger.warning(f"Signatures not reproduced: {', '.join(shifted)}")
    return report

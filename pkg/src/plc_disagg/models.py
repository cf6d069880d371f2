"""
Pydantic models shared by every stage of the pipeline.

This module defines the value types that flow between probe, simulator,
detector and classifier:
- Probe types: BandwidthSample, Trace, ProbeConfig, RunSummary
- Channel types: ChannelConfig, ApplianceModel, ScheduleEntry, Schedule, Scenario
- Detection types: DetectorConfig, Event
- Disaggregation types: Signature, Candidate, Classification, ClassifierConfig,
  SignatureShift, Metrics

All models are frozen; completed traces, events and signatures can be shared
across threads.
"""

from __future__ import annotations

import math
import sys
from typing import Any, Literal, Optional

if sys.version_info >= (3, 11):
    from typing import Self
else:  # pragma: no cover
    from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

_FROZEN = ConfigDict(frozen=True, extra="forbid")
ApplianceKind = Literal["resistive", "reactive", "electronic"]

# =============================================================================
# PROBE MODELS
# =============================================================================


class BandwidthSample(BaseModel):
    """One receiver-side goodput observation."""

    model_config = _FROZEN

    t: int = Field(..., description="Integer seconds, run-relative or epoch")
    interval_bytes: int = Field(..., ge=0, description="Payload bytes received in the interval")
    throughput_bps: float = Field(..., ge=0, allow_inf_nan=False, description="Goodput in bits per second")
    warmup: bool = Field(default=False, description="Sample falls in the congestion-control ramp")


class Trace(BaseModel):
    """
    Uniformly sampled sequence of BandwidthSamples.

    Timestamps must be strictly increasing. Gaps larger than interval_s are
    allowed but reported through the gaps property rather than filled.
    """

    model_config = _FROZEN

    samples: tuple[BandwidthSample, ...] = Field(default=(), description="Samples in time order")
    interval_s: float = Field(default=1.0, gt=0, description="Nominal sampling interval")

    @model_validator(mode="after")
    def validate_monotonic(self) -> Self:
        """Reject non-increasing timestamps"""
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.t <= prev.t:
                raise ValueError(f"timestamps must be strictly increasing (t={prev.t} then t={cur.t})")
        return self

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def gaps(self) -> list[tuple[int, int]]:
        """(t_prev, t_next) pairs where consecutive samples are further apart than interval_s."""
        return [
            (prev.t, cur.t)
            for prev, cur in zip(self.samples, self.samples[1:])
            if cur.t - prev.t > self.interval_s
        ]

    def timestamps(self) -> np.ndarray:
        return np.fromiter((s.t for s in self.samples), dtype=np.int64, count=len(self.samples))

    def throughput(self) -> np.ndarray:
        return np.fromiter((s.throughput_bps for s in self.samples), dtype=np.float64, count=len(self.samples))

    def warmup_mask(self) -> np.ndarray:
        return np.fromiter((s.warmup for s in self.samples), dtype=bool, count=len(self.samples))

    def scaled(self, factor: float) -> Trace:
        """Copy of the trace with every throughput multiplied by factor (bytes recomputed)."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return Trace(
            samples=tuple(
                BandwidthSample(
                    t=s.t,
                    interval_bytes=int(s.throughput_bps * factor * self.interval_s // 8),
                    throughput_bps=s.throughput_bps * factor,
                    warmup=s.warmup,
                )
                for s in self.samples
            ),
            interval_s=self.interval_s,
        )

    def with_warmup(self, n: int) -> Trace:
        """Copy of the trace with the first n samples marked as warm-up."""
        return Trace(
            samples=tuple(s.model_copy(update={"warmup": i < n}) for i, s in enumerate(self.samples)),
            interval_s=self.interval_s,
        )


class ProbeConfig(BaseModel):
    """Settings shared by the probe sender and receiver."""

    model_config = _FROZEN

    address: str = Field(default="127.0.0.1:5201", description="host:port to bind (recv) or connect to (send)")
    block_size_bytes: int = Field(default=65536, ge=1, description="Payload write granularity")
    duration_s: Optional[int] = Field(default=None, gt=0, description="Run length in seconds; None is unbounded")
    interval_s: float = Field(default=1.0, gt=0, description="Sampling interval in seconds")
    clock: Literal["relative", "epoch"] = Field(default="relative", description="Timestamp origin")
    warmup_samples: int = Field(default=3, ge=0, description="Leading samples marked as warm-up")
    connect_attempts: int = Field(default=3, ge=1, description="Outbound connect attempts")
    connect_retry_delay_s: float = Field(default=0.5, ge=0, description="Initial backoff between attempts")
    payload_seed: Optional[int] = Field(default=None, description="Seed of the pseudorandom payload stream")

    @field_validator("address")
    @classmethod
    def validate_address(cls, v: str) -> str:
        """Ensure address is host:port with a numeric port"""
        host, sep, port = v.rpartition(":")
        if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
            raise ValueError(f"address must be host:port, got {v!r}")
        return v


class RunSummary(BaseModel):
    """Totals reported by a sender, receiver or proxy run."""

    model_config = _FROZEN

    run_id: str = Field(..., description="ULID run identifier")
    role: Literal["sender", "receiver", "proxy"]
    started_at: str = Field(..., description="ISO 8601 UTC start time")
    total_bytes: int = Field(default=0, ge=0)
    duration_s: float = Field(default=0.0, ge=0)
    mean_throughput_bps: float = Field(default=0.0, ge=0)
    n_samples: int = Field(default=0, ge=0)
    connected: bool = False
    rejected_connections: int = Field(default=0, ge=0)
    error: Optional[str] = Field(default=None, description="Set when the run aborted")


# =============================================================================
# CHANNEL MODELS
# =============================================================================


class ChannelConfig(BaseModel):
    """No-load capacity, noise and baseline drift of the simulated PLC link."""

    model_config = _FROZEN

    base_bandwidth_bps: float = Field(default=1.0e8, gt=0, allow_inf_nan=False, description="No-load capacity B0")
    noise_std_frac: float = Field(default=0.0, ge=0, lt=0.25, description="Multiplicative Gaussian noise std")
    drift_walk_std_frac: float = Field(default=0.0, ge=0, description="Baseline random-walk step std, fraction of B0")
    drift_bounds: tuple[float, float] = Field(default=(0.7, 1.0), description="Walk clamp, fractions of B0")
    seed: int = Field(default=0, description="Default seed when none is passed explicitly")

    @field_validator("drift_bounds")
    @classmethod
    def validate_drift_bounds(cls, v: tuple[float, float]) -> tuple[float, float]:
        """Ensure 0 < lo <= hi"""
        lo, hi = v
        if not 0 < lo <= hi:
            raise ValueError("drift_bounds must satisfy 0 < lo <= hi")
        return v


class ApplianceModel(BaseModel):
    """Drop distribution of one appliance instance at one outlet."""

    model_config = _FROZEN

    id: str = Field(..., min_length=1, description="Unique instance id referenced by schedules")
    label: str = Field(..., min_length=1, description="Class label the classifier should report")
    location_tag: str = Field(default="", description="Outlet/room tag, reporting only")
    drop_mean_frac: float = Field(..., ge=0, lt=1, description="Mean fractional capacity reduction when on")
    drop_std_frac: float = Field(default=0.0, ge=0, description="Std of the per-interval drop draw")
    kind: ApplianceKind = Field(default="resistive")

    @model_validator(mode="after")
    def validate_three_sigma(self) -> Self:
        """Capacity must stay positive at 3 sigma"""
        if self.drop_mean_frac + 3 * self.drop_std_frac >= 1:
            raise ValueError(f"appliance {self.id}: drop_mean_frac + 3*drop_std_frac must be < 1")
        return self


class ScheduleEntry(BaseModel):
    """One on-interval [t_on, t_off) of an appliance."""

    model_config = _FROZEN

    appliance_id: str = Field(..., min_length=1)
    t_on: int = Field(..., ge=0)
    t_off: int

    @model_validator(mode="after")
    def validate_interval(self) -> Self:
        """Ensure t_on < t_off"""
        if self.t_on >= self.t_off:
            raise ValueError(f"{self.appliance_id}: t_on ({self.t_on}) must be < t_off ({self.t_off})")
        return self

    def overlaps(self, other: ScheduleEntry) -> bool:
        return self.t_on < other.t_off and other.t_on < self.t_off

    def to_row(self) -> list[Any]:
        return [self.appliance_id, self.t_on, self.t_off]


class Schedule(BaseModel):
    """
    Ground-truth on/off intervals.

    Entries must be pairwise non-overlapping unless experimental_overlap is set,
    which enables the independent-attenuation composition in the simulator.
    """

    model_config = _FROZEN

    entries: tuple[ScheduleEntry, ...] = ()
    experimental_overlap: bool = False

    @model_validator(mode="after")
    def validate_overlap(self) -> Self:
        """Reject overlapping entries unless composition is enabled"""
        if self.experimental_overlap:
            return self
        ordered = sorted(self.entries, key=lambda e: (e.t_on, e.t_off))
        for prev, cur in zip(ordered, ordered[1:]):
            if prev.overlaps(cur):
                raise ValueError(
                    f"entries {prev.appliance_id}[{prev.t_on},{prev.t_off}) and "
                    f"{cur.appliance_id}[{cur.t_on},{cur.t_off}) overlap; set the experimental overlap flag to allow"
                )
        return self

    @classmethod
    def from_rows(cls, rows: list[list[Any]] | list[tuple[Any, ...]], experimental_overlap: bool = False) -> Schedule:
        entries = []
        for row in rows:
            if isinstance(row, dict):
                entries.append(ScheduleEntry.model_validate(row))
                continue
            if len(row) != 3:
                raise ValueError(f"schedule row must be [appliance_id, t_on, t_off], got {row!r}")
            entries.append(ScheduleEntry(appliance_id=row[0], t_on=row[1], t_off=row[2]))
        return cls(entries=tuple(entries), experimental_overlap=experimental_overlap)

    def to_rows(self) -> list[list[Any]]:
        return [e.to_row() for e in self.entries]

    @property
    def end(self) -> int:
        """Latest t_off, 0 for an empty schedule."""
        return max((e.t_off for e in self.entries), default=0)

    def appliance_ids(self) -> set[str]:
        return {e.appliance_id for e in self.entries}


class Scenario(BaseModel):
    """Simulator input: channel, appliance instances and their schedule."""

    model_config = _FROZEN

    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    appliances: tuple[ApplianceModel, ...] = ()
    schedule: Schedule = Field(default_factory=Schedule)
    experimental_overlap: bool = False

    @model_validator(mode="before")
    @classmethod
    def build_schedule(cls, data: Any) -> Any:
        """Accept the [[id, t_on, t_off], ...] row form and propagate the overlap flag"""
        if not isinstance(data, dict):
            return data
        schedule = data.get("schedule")
        if isinstance(schedule, list):
            data = dict(data)
            data["schedule"] = Schedule.from_rows(
                schedule, experimental_overlap=bool(data.get("experimental_overlap", False))
            )
        elif isinstance(schedule, Schedule) and "experimental_overlap" not in data:
            data = dict(data)
            data["experimental_overlap"] = schedule.experimental_overlap
        return data

    @model_validator(mode="after")
    def validate_references(self) -> Self:
        """Appliance ids must be unique and every schedule entry must reference one"""
        ids = [a.id for a in self.appliances]
        duplicates = {i for i in ids if ids.count(i) > 1}
        if duplicates:
            raise ValueError(f"duplicate appliance ids: {sorted(duplicates)}")
        unknown = self.schedule.appliance_ids() - set(ids)
        if unknown:
            raise ValueError(f"schedule references undefined appliances: {sorted(unknown)}")
        if self.schedule.experimental_overlap != self.experimental_overlap:
            raise ValueError("schedule overlap flag must match scenario experimental_overlap")
        return self

    def appliance(self, appliance_id: str) -> ApplianceModel:
        for a in self.appliances:
            if a.id == appliance_id:
                return a
        raise KeyError(appliance_id)

    def label_map(self) -> dict[str, str]:
        """appliance_id -> label"""
        return {a.id: a.label for a in self.appliances}

    def to_file_dict(self) -> dict[str, Any]:
        return {
            "channel": self.channel.model_dump(mode="json"),
            "appliances": [a.model_dump(mode="json") for a in self.appliances],
            "schedule": self.schedule.to_rows(),
            "experimental_overlap": self.experimental_overlap,
        }


# =============================================================================
# DETECTION MODELS
# =============================================================================


class DetectorConfig(BaseModel):
    """Threshold-with-hysteresis detector settings."""

    model_config = _FROZEN

    baseline_window: int = Field(default=31, ge=1, description="Rolling median window W (odd)")
    onset_threshold_frac: float = Field(default=0.05, gt=0, lt=1, description="theta_on")
    offset_threshold_frac: float = Field(default=0.03, ge=0, lt=1, description="theta_off (hysteresis band)")
    min_event_s: int = Field(default=5, ge=1, description="Consecutive samples to open or close an event")
    min_gap_s: int = Field(default=3, ge=1, description="Events closer than this merge")
    onset_backtrack: bool = Field(default=False, description="Move t_on back to the start of the sub-theta_off run")

    @field_validator("baseline_window")
    @classmethod
    def validate_window_odd(cls, v: int) -> int:
        """Ensure W is odd"""
        if v % 2 == 0:
            raise ValueError("baseline_window must be odd")
        return v

    @model_validator(mode="after")
    def validate_hysteresis(self) -> Self:
        """Ensure theta_off < theta_on"""
        if self.offset_threshold_frac >= self.onset_threshold_frac:
            raise ValueError("offset_threshold_frac must be < onset_threshold_frac")
        return self


class Event(BaseModel):
    """A detected bandwidth-drop interval."""

    model_config = _FROZEN

    t_on: int
    t_off: Optional[int] = Field(default=None, description="None while still open at trace end")
    drop_bps: float = Field(..., gt=0, allow_inf_nan=False)
    drop_frac: float = Field(..., gt=0, le=1)
    baseline_bps: float = Field(..., gt=0, allow_inf_nan=False, description="Baseline estimate at onset")
    n_samples: int = Field(..., ge=1)
    open: bool = Field(default=False, description="Event still active at trace end")
    outage: bool = Field(default=False, description="Median in-event throughput was zero")

    @model_validator(mode="after")
    def validate_consistency(self) -> Self:
        """Interval bounds, sample count and drop ratio must agree"""
        if self.t_off is not None:
            if self.t_off <= self.t_on:
                raise ValueError("t_off must be > t_on")
            if self.n_samples != self.t_off - self.t_on:
                raise ValueError("n_samples must equal t_off - t_on")
        if not math.isclose(self.drop_frac, self.drop_bps / self.baseline_bps, rel_tol=1e-9):
            raise ValueError("drop_frac must equal drop_bps / baseline_bps")
        return self

    @property
    def end(self) -> int:
        """Exclusive end used for overlap matching (t_on + n_samples for open events)."""
        return self.t_off if self.t_off is not None else self.t_on + self.n_samples

    def to_record(self) -> dict[str, Any]:
        """JSONL record; flags are only written when set."""
        record = self.model_dump(include={"t_on", "t_off", "drop_bps", "drop_frac", "baseline_bps", "n_samples"})
        if self.open:
            record["open"] = True
        if self.outage:
            record["outage"] = True
        return record


# =============================================================================
# DISAGGREGATION MODELS
# =============================================================================


class Signature(BaseModel):
    """Per-label drop statistics learned from calibration runs."""

    model_config = _FROZEN

    label: str = Field(..., min_length=1)
    drop_mean_bps: float = Field(..., gt=0, allow_inf_nan=False)
    drop_std_bps: float = Field(..., ge=0, allow_inf_nan=False)
    drop_mean_frac: float = Field(..., gt=0, le=1)
    n_observations: int = Field(..., ge=1)
    drop_std_frac: Optional[float] = Field(default=None, ge=0, description="Derived from bps values when absent")
    location_tag: Optional[str] = None
    kind: Optional[str] = None

    @property
    def std_frac(self) -> float:
        """Fractional std, falling back to drop_std_bps scaled by the implied baseline."""
        if self.drop_std_frac is not None:
            return self.drop_std_frac
        return self.drop_std_bps * self.drop_mean_frac / self.drop_mean_bps

    def to_record(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


class Candidate(BaseModel):
    """A signature label with its z-score for one event."""

    model_config = _FROZEN

    label: str
    z_score: float = Field(..., ge=0)


class Classification(BaseModel):
    """Verdict assigned to one event."""

    model_config = _FROZEN

    event: Event
    verdict: Literal["labeled", "ambiguous", "unknown"]
    label: Optional[str] = Field(default=None, description="Set for labeled verdicts")
    z_score: Optional[float] = Field(default=None, description="Best z-score")
    candidates: tuple[Candidate, ...] = Field(default=(), description="Labels within tau_margin of the best")

    @model_validator(mode="after")
    def validate_verdict(self) -> Self:
        """Ensure verdict-specific fields are present"""
        if self.verdict == "labeled" and (self.label is None or self.z_score is None):
            raise ValueError("labeled verdict requires label and z_score")
        if self.verdict == "ambiguous" and len(self.candidates) < 2:
            raise ValueError("ambiguous verdict requires at least two candidates")
        return self

    def credited(self, truth_label: str) -> bool:
        """True when the verdict names truth_label, ambiguous candidates included."""
        if self.verdict == "labeled":
            return self.label == truth_label
        if self.verdict == "ambiguous":
            return any(c.label == truth_label for c in self.candidates)
        return False

    @property
    def predicted(self) -> str:
        """Column name used in the confusion matrix."""
        if self.verdict == "labeled" and self.label is not None:
            return self.label
        return f"<{self.verdict}>"


class ClassifierConfig(BaseModel):
    """Z-score thresholds of the signature classifier."""

    model_config = _FROZEN

    tau_margin: float = Field(default=1.0, gt=0, description="Required z gap between best and runner-up")
    tau_unknown: float = Field(default=4.0, gt=0, description="Best z above this is unknown")
    sigma_floor: float = Field(default=0.005, gt=0, description="Lower bound on signature std_frac")


class SignatureShift(BaseModel):
    """Drift of one label's signature between a reference and a repeat calibration."""

    model_config = _FROZEN

    label: str
    reference_frac: Optional[float] = None
    current_frac: Optional[float] = None
    shift_z: Optional[float] = Field(default=None, description="|current - reference| in reference z-units")
    status: Literal["stable", "shifted", "missing", "new"]


class Metrics(BaseModel):
    """Event- and label-level scores of classifications against ground truth."""

    model_config = _FROZEN

    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    accuracy: float = Field(default=0.0, description="Ambiguous verdicts credited when truth is a candidate")
    accuracy_strict: float = Field(default=0.0, description="Ambiguous verdicts count as wrong")
    ambiguous_rate: float = 0.0
    n_events: int = 0
    n_truth: int = 0
    n_matched: int = 0
    mean_onset_error_s: float = 0.0
    confusion: dict[str, dict[str, int]] = Field(default_factory=dict)

"""
Reading and writing of pipeline artifacts other than traces.

- Events: JSONL, keys t_on, t_off, drop_bps, drop_frac, baseline_bps, n_samples
- Classifications: JSONL, one Classification per line (event nested)
- Signatures: JSON list of objects
- Schedules: JSON list of [appliance_id, t_on, t_off]
- Scenarios: JSON object {channel, appliances, schedule} or a built-in preset name
- Metrics: JSON object

Output formatting is stable: identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence, TypeVar

from pydantic import BaseModel, ValidationError

from plc_disagg.errors import ScenarioError, ScheduleError, TraceFormatError
from plc_disagg.models import Classification, Event, Metrics, Scenario, Schedule, Signature

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


def _dump_json(data: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _load_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"{path}: invalid JSON ({e.msg})", row=e.lineno) from e


def _read_jsonl(path: str | Path, model: type[M]) -> list[M]:
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                items.append(model.model_validate_json(line))
            except ValidationError as e:
                raise TraceFormatError(f"{path}: {e.errors()[0]['msg']}", row=row) from e
    return items


# =============================================================================
# EVENTS
# =============================================================================


def write_events(events: Iterable[Event], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for event in events:
            fh.write(json.dumps(event.to_record()) + "\n")


def read_events(path: str | Path) -> list[Event]:
    return _read_jsonl(path, Event)


# =============================================================================
# CLASSIFICATIONS
# =============================================================================


def write_classifications(classifications: Iterable[Classification], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for item in classifications:
            fh.write(item.model_dump_json(exclude_defaults=True) + "\n")


def read_classifications(path: str | Path) -> list[Classification]:
    return _read_jsonl(path, Classification)


# =============================================================================
# SIGNATURES
# =============================================================================


def write_signatures(signatures: Sequence[Signature], path: str | Path) -> None:
    _dump_json([s.to_record() for s in signatures], path)
    logger.info(f"Wrote {len(signatures)} signatures to {path}")


def read_signatures(path: str | Path) -> list[Signature]:
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise TraceFormatError(f"{path}: signature file must be a JSON list")
    signatures = []
    for index, item in enumerate(raw, start=1):
        try:
            signatures.append(Signature.model_validate(item))
        except ValidationError as e:
            raise TraceFormatError(f"{path}: signature {index}: {e.errors()[0]['msg']}", row=index) from e
    return signatures


# =============================================================================
# SCHEDULES
# =============================================================================


def write_schedule(schedule: Schedule, path: str | Path) -> None:
    _dump_json(schedule.to_rows(), path)


def read_schedule(path: str | Path, experimental_overlap: bool = False) -> Schedule:
    """
    Read a schedule file.

    Accepts either the bare row list or a scenario file (its schedule is used).

    Raises:
        ScheduleError: If rows are malformed or overlap without the experimental flag
    """
    raw = _load_json(path)
    if isinstance(raw, dict) and "schedule" in raw:
        experimental_overlap = experimental_overlap or bool(raw.get("experimental_overlap", False))
        raw = raw["schedule"]
    if not isinstance(raw, list):
        raise ScheduleError(f"{path}: schedule must be a list of [appliance_id, t_on, t_off]")
    try:
        return Schedule.from_rows(raw, experimental_overlap=experimental_overlap)
    except (ValidationError, ValueError, TypeError) as e:
        raise ScheduleError(f"{path}: {e}") from e


# =============================================================================
# SCENARIOS
# =============================================================================


def load_scenario(source: str | Path) -> Scenario:
    """
    Load a scenario from a JSON file or a built-in preset name.

    Raises:
        ScenarioError: If the file is missing or invalid and no preset matches
    """
    from plc_disagg.scenarios import PRESETS, get_preset

    path = Path(source)
    if not path.exists() and str(source) in PRESETS:
        return get_preset(str(source))
    if not path.exists():
        raise ScenarioError(f"scenario not found: {source} (presets: {', '.join(sorted(PRESETS))})")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        return Scenario.model_validate(raw)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON ({e.msg})") from e
    except ValidationError as e:
        raise ScenarioError(f"{path}: {e}") from e


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    _dump_json(scenario.to_file_dict(), path)


# =============================================================================
# METRICS
# =============================================================================


def write_metrics(metrics: Metrics, path: str | Path) -> None:
    _dump_json(metrics.model_dump(mode="json"), path)

"""
Run identifiers and wall-clock helpers.

ULIDs sort by creation time, so run summaries from a sender, proxy and
receiver started together list in start order.
"""

import time
from datetime import datetime, timezone

from ulid import ULID


def new_run_id() -> str:
    """
    Generate a ULID identifying one probe or proxy run.

    Returns:
        str: 26-character ULID, e.g. '01JCK3Q7H8ZVXN3BARC9GWAEZM'
    """
    return str(ULID())


def utc_now_iso() -> str:
    """Current UTC time as ISO 8601 with Z suffix and microseconds."""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class TickSchedule:
    """
    Interval boundaries anchored at a monotonic start instant.

    Boundaries are computed from the anchor (start + k * interval) rather than
    by accumulating sleeps, so ticks do not drift when a tick handler is slow.
    """

    def __init__(self, interval_s: float, anchor: float | None = None) -> None:
        if interval_s <= 0:
            raise ValueError("interval_s must be positive")
        self.interval_s = interval_s
        self.anchor = time.monotonic() if anchor is None else anchor
        self.wall_anchor = time.time() - (time.monotonic() - self.anchor)
        self.index = 0

    def next_boundary(self) -> float:
        """Monotonic time at which the current interval ends."""
        return self.anchor + (self.index + 1) * self.interval_s

    def seconds_until_boundary(self) -> float:
        return max(0.0, self.next_boundary() - time.monotonic())

    def advance(self) -> int:
        """Close the current interval, returning its index."""
        closed = self.index
        self.index += 1
        return closed

    def interval_start_offset(self, index: int) -> float:
        """Seconds from the anchor to the start of interval index."""
        return index * self.interval_s

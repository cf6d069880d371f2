"""
Unit tests for plc_disagg.clock.
"""

import re
import time

import pytest

from plc_disagg.clock import TickSchedule, new_run_id, utc_now_iso


class TestRunId:
    """Test ULID run identifiers."""

    def test_format(self):
        """Test 26-character Crockford base32."""
        assert re.fullmatch(r"[0-9A-HJKMNP-TV-Z]{26}", new_run_id())

    def test_unique(self):
        """Test ids do not repeat."""
        assert len({new_run_id() for _ in range(100)}) == 100


class TestUtcNow:
    """Test the ISO timestamp helper."""

    def test_format(self):
        """Test the Z-suffixed microsecond format."""
        assert re.fullmatch(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{6}Z", utc_now_iso())


class TestTickSchedule:
    """Test anchored interval boundaries."""

    def test_boundaries_from_anchor(self):
        """Test boundaries are anchor + k * interval."""
        ticks = TickSchedule(1.0, anchor=50.0)
        assert ticks.next_boundary() == 51.0
        assert ticks.advance() == 0
        assert ticks.advance() == 1
        assert ticks.next_boundary() == 53.0
        assert ticks.interval_start_offset(2) == 2.0

    def test_past_boundary_does_not_wait(self):
        """Test an overdue boundary yields zero wait."""
        ticks = TickSchedule(1.0, anchor=time.monotonic() - 5.0)
        assert ticks.seconds_until_boundary() == 0.0

    def test_wall_anchor_tracks_wall_clock(self):
        """Test the wall-clock anchor matches the monotonic anchor."""
        ticks = TickSchedule(1.0)
        assert ticks.wall_anchor == pytest.approx(time.time(), abs=0.5)

    def test_invalid_interval(self):
        """Test a non-positive interval."""
        with pytest.raises(ValueError):
            TickSchedule(0.0)

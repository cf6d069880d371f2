"""
Unit tests for plc_disagg.trace_io.

Tests cover the exact CSV format, the JSONL alternative, error reporting with
row numbers, and the write/read round trip.
"""

import logging

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from plc_disagg.channel_sim import generate_trace
from plc_disagg.errors import TraceFormatError
from plc_disagg.models import BandwidthSample, Schedule
from plc_disagg.trace_io import TraceWriter, format_throughput, infer_format, read_trace, write_trace

HEADER = "t,interval_bytes,throughput_bps\n"


# =============================================================================
# FORMAT TESTS
# =============================================================================


class TestFormat:
    """Test the on-disk formats."""

    def test_empty_trace_writes_header_only(self, tmp_path):
        """Test [] produces exactly the header line."""
        path = tmp_path / "t.csv"
        write_trace([], path)
        assert path.read_text() == HEADER

    def test_single_row_exact(self, tmp_path):
        """Test one sample gives the exact row text."""
        path = tmp_path / "t.csv"
        write_trace([BandwidthSample(t=0, interval_bytes=125000, throughput_bps=1.0e6)], path)
        assert path.read_bytes() == (HEADER + "0,125000,1000000.0\n").encode("utf-8")

    @pytest.mark.parametrize(
        "value,text",
        [(0.0, "0.0"), (1e6, "1000000.0"), (1234.5, "1234.5"), (1e16, "1.0e+16"), (2.5e-7, "2.5e-07")],
    )
    def test_throughput_has_fraction(self, value, text):
        """Test throughput always carries a fractional part."""
        assert format_throughput(value) == text

    def test_jsonl_carries_warmup(self, tmp_path):
        """Test JSONL rows keep the warmup flag."""
        path = tmp_path / "t.jsonl"
        write_trace([BandwidthSample(t=0, interval_bytes=1, throughput_bps=8.0, warmup=True)], path)
        assert '"warmup":true' in path.read_text()
        assert read_trace(path).samples[0].warmup is True

    @pytest.mark.parametrize("name,fmt", [("a.csv", "csv"), ("a.jsonl", "jsonl"), ("a.ndjson", "jsonl"), ("a", "csv")])
    def test_infer_format(self, name, fmt):
        """Test format inference from the suffix."""
        assert infer_format(name) == fmt


# =============================================================================
# ROUND TRIP TESTS
# =============================================================================


@st.composite
def traces(draw: st.DrawFn, with_warmup: bool = False) -> list[BandwidthSample]:
    n = draw(st.integers(min_value=0, max_value=40))
    start = draw(st.integers(min_value=-(10**9), max_value=2 * 10**9))
    steps = draw(st.lists(st.integers(min_value=1, max_value=5), min_size=n, max_size=n))
    samples = []
    t = start
    for step in steps:
        t += step
        n_bytes = draw(st.integers(min_value=0, max_value=10**13))
        samples.append(
            BandwidthSample(
                t=t,
                interval_bytes=n_bytes,
                throughput_bps=n_bytes * 8 + draw(st.floats(min_value=0, max_value=7.5)),
                warmup=draw(st.booleans()) if with_warmup else False,
            )
        )
    return samples


class TestRoundTrip:
    """Test read_trace(write_trace(x)) == x."""

    @settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(samples=traces())
    def test_csv_round_trip(self, tmp_path, samples):
        """Test CSV round trip is exact for any valid trace."""
        path = tmp_path / "rt.csv"
        write_trace(samples, path)
        assert list(read_trace(path).samples) == samples

    @settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(samples=traces(with_warmup=True))
    def test_jsonl_round_trip(self, tmp_path, samples):
        """Test JSONL round trip keeps warm-up flags."""
        path = tmp_path / "rt.jsonl"
        write_trace(samples, path)
        assert list(read_trace(path).samples) == samples

    def test_hour_long_trace(self, tmp_path, noisy_channel):
        """Test a 3600-sample generated trace round-trips losslessly."""
        trace = generate_trace(noisy_channel, [], Schedule(), 3600, seed=3)
        path = tmp_path / "hour.csv"
        write_trace(trace, path)
        assert read_trace(path) == trace

    def test_csv_drops_warmup_flags(self, tmp_path, make_trace):
        """Test CSV round trip needs the warm-up count supplied again."""
        trace = make_trace([8.0] * 4, warmup=2)
        path = tmp_path / "w.csv"
        write_trace(trace, path)
        assert not any(s.warmup for s in read_trace(path).samples)
        assert read_trace(path, warmup_samples=2) == trace

    def test_warmup_remarked_on_read(self, tmp_path, make_trace):
        """Test CSV readers can re-mark the warm-up prefix."""
        path = tmp_path / "w.csv"
        write_trace(make_trace([8.0] * 5), path)
        assert read_trace(path, warmup_samples=3).warmup_mask().tolist() == [True, True, True, False, False]


# =============================================================================
# ERROR TESTS
# =============================================================================


class TestReadErrors:
    """Test malformed files are reported with row numbers."""

    def _write(self, tmp_path, text: str):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        return path

    def test_missing_file(self, tmp_path):
        """Test a missing path raises FileNotFoundError naming it."""
        with pytest.raises(FileNotFoundError, match="missing.csv"):
            read_trace(tmp_path / "missing.csv")

    def test_empty_file(self, tmp_path):
        """Test a file without header."""
        with pytest.raises(TraceFormatError, match="empty"):
            read_trace(self._write(tmp_path, ""))

    def test_wrong_header(self, tmp_path):
        """Test the header is checked."""
        with pytest.raises(TraceFormatError, match="header"):
            read_trace(self._write(tmp_path, "time,bytes,bps\n0,1,8.0\n"))

    def test_extra_field_row_number(self, tmp_path):
        """Test a row with too many fields is located."""
        with pytest.raises(TraceFormatError) as exc:
            read_trace(self._write(tmp_path, HEADER + "0,1,8.0\n1,2,16.0,99\n"))
        assert exc.value.row == 2

    def test_missing_field_row_number(self, tmp_path):
        """Test a row with too few fields is located."""
        with pytest.raises(TraceFormatError) as exc:
            read_trace(self._write(tmp_path, HEADER + "0,1,8.0\n1,2,16.0\n2,3\n"))
        assert exc.value.row == 3

    def test_non_integer_timestamp(self, tmp_path):
        """Test t must be an integer."""
        with pytest.raises(TraceFormatError) as exc:
            read_trace(self._write(tmp_path, HEADER + "0,1,8.0\n1.5,2,16.0\n"))
        assert exc.value.row == 2

    def test_negative_bytes(self, tmp_path):
        """Test interval_bytes must be non-negative."""
        with pytest.raises(TraceFormatError) as exc:
            read_trace(self._write(tmp_path, HEADER + "0,-1,8.0\n"))
        assert exc.value.row == 1

    def test_non_numeric_throughput(self, tmp_path):
        """Test throughput must parse as a number."""
        with pytest.raises(TraceFormatError, match="row 2"):
            read_trace(self._write(tmp_path, HEADER + "0,1,8.0\n1,1,fast\n"))

    def test_infinite_throughput(self, tmp_path):
        """Test throughput must be finite."""
        with pytest.raises(TraceFormatError, match="finite"):
            read_trace(self._write(tmp_path, HEADER + "0,1,inf\n"))

    def test_non_monotonic(self, tmp_path):
        """Test decreasing timestamps are rejected with the offending row."""
        with pytest.raises(TraceFormatError) as exc:
            read_trace(self._write(tmp_path, HEADER + "0,1,8.0\n1,1,8.0\n1,1,8.0\n"))
        assert exc.value.row == 3

    def test_gaps_logged(self, tmp_path, caplog):
        """Test gaps are flagged, not filled."""
        path = self._write(tmp_path, HEADER + "0,1,8.0\n1,1,8.0\n5,1,8.0\n")
        with caplog.at_level(logging.WARNING):
            trace = read_trace(path)
        assert len(trace) == 3
        assert trace.gaps == [(1, 5)]
        assert "gap" in caplog.text

    def test_bad_jsonl_row(self, tmp_path):
        """Test JSONL rows are validated."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"t":0,"interval_bytes":1,"throughput_bps":8.0}\n{"t":1,"interval_bytes":-1}\n')
        with pytest.raises(TraceFormatError) as exc:
            read_trace(path)
        assert exc.value.row == 2


class TestWriteErrors:
    """Test invalid input is rejected before anything is written."""

    def test_non_monotonic_input_not_written(self, tmp_path):
        """Test write_trace validates first."""
        path = tmp_path / "out.csv"
        sample = BandwidthSample(t=1, interval_bytes=0, throughput_bps=0.0)
        with pytest.raises(TraceFormatError):
            write_trace([sample, sample], path)
        assert not path.exists()

    def test_throughput_byte_mismatch_not_written(self, tmp_path):
        """Test a throughput that disagrees with the byte count is rejected."""
        path = tmp_path / "out.csv"
        good = BandwidthSample(t=0, interval_bytes=125000, throughput_bps=1.0e6)
        bad = BandwidthSample(t=1, interval_bytes=125000, throughput_bps=5.0e6)
        with pytest.raises(TraceFormatError, match="row 2"):
            write_trace([good, bad], path)
        assert not path.exists()

    def test_floor_rounded_bytes_accepted(self, tmp_path):
        """Test bytes rounded down from the throughput are within tolerance."""
        path = tmp_path / "out.csv"
        write_trace([BandwidthSample(t=0, interval_bytes=124999, throughput_bps=999999.0)], path)
        assert path.read_text() == "t,interval_bytes,throughput_bps\n0,124999,999999.0\n"

    def test_unwritable_path(self, tmp_path):
        """Test OSError for a path in a missing directory."""
        with pytest.raises(OSError):
            write_trace([], tmp_path / "no-such-dir" / "t.csv")

    def test_streaming_writer_enforces_order(self, tmp_path):
        """Test TraceWriter rejects a repeated timestamp."""
        with TraceWriter(tmp_path / "s.csv") as writer:
            writer(BandwidthSample(t=3, interval_bytes=0, throughput_bps=0.0))
            with pytest.raises(TraceFormatError):
                writer(BandwidthSample(t=3, interval_bytes=0, throughput_bps=0.0))
        assert writer.count == 1

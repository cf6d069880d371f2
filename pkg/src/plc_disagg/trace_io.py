"""
Trace file reading and writing.

Formats:
- CSV: header `t,interval_bytes,throughput_bps`, one row per sample, `\n` line ends,
  throughput always written with a fractional part (1000000.0)
- JSONL: one object per line with the same keys plus `warmup`

TraceWriter streams samples as they arrive so it can serve as the live receiver sink;
write_trace validates a complete sample list before touching the file.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from types import TracebackType
from typing import IO, Iterable, Literal

import pandas as pd
from pydantic import ValidationError

from plc_disagg.errors import TraceFormatError
from plc_disagg.models import BandwidthSample, Trace

logger = logging.getLogger(__name__)

TraceFormat = Literal["csv", "jsonl"]

CSV_HEADER = ("t", "interval_bytes", "throughput_bps")
_INT_PATTERN = r"-?\d+"
_UINT_PATTERN = r"\d+"
_PANDAS_LINE = re.compile(r"line (\d+)")
# interval_bytes is floor(throughput / 8), so the two may differ by under one byte
_ROUNDING_BITS = 8


def infer_format(path: str | Path) -> TraceFormat:
    """jsonl for .jsonl/.ndjson suffixes, csv otherwise."""
    return "jsonl" if Path(path).suffix.lower() in (".jsonl", ".ndjson") else "csv"


def format_throughput(value: float) -> str:
    """
    Shortest round-trip decimal with at least one fractional digit.

    Example:
        >>> format_throughput(1e6)
        '1000000.0'
        >>> format_throughput(1e16)
        '1.0e+16'
    """
    text = repr(float(value))
    if "e" in text:
        mantissa, exponent = text.split("e")
        if "." not in mantissa:
            text = f"{mantissa}.0e{exponent}"
    return text


def format_csv_row(sample: BandwidthSample) -> str:
    return f"{sample.t},{sample.interval_bytes},{format_throughput(sample.throughput_bps)}\n"


class TraceWriter:
    """
    Streaming sample sink.

    Enforces strictly increasing timestamps across writes; flushes after every
    sample when flush_each is set so a live trace survives an interrupted run.

    Usage:
        with TraceWriter("trace.csv") as sink:
            run_receiver(probe_config, sink)
    """

    def __init__(self, path: str | Path, fmt: TraceFormat | None = None, flush_each: bool = False) -> None:
        self.path = Path(path)
        self.fmt: TraceFormat = fmt or infer_format(path)
        self.flush_each = flush_each
        self.count = 0
        self._last_t: int | None = None
        self._fh: IO[str] = self.path.open("w", encoding="utf-8", newline="")
        if self.fmt == "csv":
            self._fh.write(",".join(CSV_HEADER) + "\n")

    def write(self, sample: BandwidthSample) -> None:
        if self._last_t is not None and sample.t <= self._last_t:
            raise TraceFormatError(f"non-increasing timestamp {sample.t} after {self._last_t}", row=self.count + 1)
        if self.fmt == "csv":
            self._fh.write(format_csv_row(sample))
        else:
            self._fh.write(sample.model_dump_json() + "\n")
        self._last_t = sample.t
        self.count += 1
        if self.flush_each:
            self._fh.flush()

    __call__ = write

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
            logger.debug(f"Wrote {self.count} samples to {self.path}")

    def __enter__(self) -> TraceWriter:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()


def write_trace(samples: Iterable[BandwidthSample] | Trace, path: str | Path, fmt: TraceFormat | None = None) -> None:
    """
    Write samples to path in csv or jsonl format.

    Raises:
        TraceFormatError: If the samples violate the trace invariants (nothing is written)
        OSError: If the path is not writable
    """
    if isinstance(samples, Trace):
        trace = samples
    else:
        try:
            trace = Trace(samples=tuple(samples))
        except ValidationError as e:
            raise TraceFormatError(f"invalid trace: {e.errors()[0]['msg']}") from e
    for row, sample in enumerate(trace.samples, start=1):
        bits = sample.throughput_bps * trace.interval_s
        if abs(sample.interval_bytes * 8 - bits) >= _ROUNDING_BITS:
            raise TraceFormatError(
                f"throughput {sample.throughput_bps} bit/s does not match {sample.interval_bytes} bytes "
                f"per {trace.interval_s}s interval",
                row=row,
            )
    with TraceWriter(path, fmt=fmt) as writer:
        for sample in trace.samples:
            writer.write(sample)
    logger.info(f"Wrote trace of {len(trace)} samples to {path}")


def read_trace(
    path: str | Path,
    fmt: TraceFormat | None = None,
    warmup_samples: int = 0,
    interval_s: float = 1.0,
) -> Trace:
    """
    Read a trace file written by write_trace or a live receiver.

    The trace is rebuilt with the caller's interval_s, and CSV files carry no
    warm-up column, so read_trace(write_trace(x)) == x holds for JSONL files
    and for CSV traces with a 1 s interval (or a matching interval_s) and no
    warm-up samples. Pass warmup_samples to re-mark a CSV warm-up prefix.

    Args:
        path: Trace file
        fmt: csv or jsonl (inferred from the suffix when None)
        warmup_samples: Mark the first N samples as warm-up (CSV has no warm-up column)
        interval_s: Nominal interval used for gap reporting

    Returns:
        Trace with samples in file order; gaps are logged and exposed via Trace.gaps

    Raises:
        TraceFormatError: Malformed row (row number reported) or non-monotonic timestamps
        OSError: If the file cannot be read
    """
    fmt = fmt or infer_format(path)
    samples = _read_jsonl_samples(Path(path)) if fmt == "jsonl" else _read_csv_samples(Path(path))

    for row, (prev, cur) in enumerate(zip(samples, samples[1:]), start=2):
        if cur.t <= prev.t:
            raise TraceFormatError(f"non-monotonic timestamp {cur.t} after {prev.t}", row=row)

    trace = Trace(samples=tuple(samples), interval_s=interval_s)
    if warmup_samples:
        trace = trace.with_warmup(warmup_samples)
    gaps = trace.gaps
    if gaps:
        logger.warning(f"Trace {path} has {len(gaps)} timestamp gap(s), first at t={gaps[0][0]}->{gaps[0][1]}")
    return trace


def _read_csv_samples(path: Path) -> list[BandwidthSample]:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, skipinitialspace=False)
    except pd.errors.EmptyDataError as e:
        raise TraceFormatError(f"{path}: empty file, expected header {','.join(CSV_HEADER)}") from e
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        # pandas counts physical lines from 1 including the header; rows are data rows
        row = int(match.group(1)) - 1 if match else None
        raise TraceFormatError(f"{path}: wrong number of fields", row=row) from e

    df = df.fillna("")
    if tuple(df.columns) != CSV_HEADER:
        raise TraceFormatError(f"{path}: header must be {','.join(CSV_HEADER)}, got {','.join(df.columns)}")

    bad_t = ~df["t"].str.fullmatch(_INT_PATTERN)
    bad_bytes = ~df["interval_bytes"].str.fullmatch(_UINT_PATTERN)
    bad = bad_t | bad_bytes
    if bad.any():
        row = int(bad.to_numpy().argmax()) + 1
        raise TraceFormatError(f"{path}: t must be an integer and interval_bytes a non-negative integer", row=row)

    try:
        throughput = df["throughput_bps"].astype(float)
    except ValueError:
        throughput = pd.to_numeric(df["throughput_bps"], errors="coerce")
        row = int(throughput.isna().to_numpy().argmax()) + 1
        raise TraceFormatError(f"{path}: throughput_bps is not a number", row=row) from None

    invalid = ~throughput.between(0, float("inf"), inclusive="left")
    if invalid.any():
        row = int(invalid.to_numpy().argmax()) + 1
        raise TraceFormatError(f"{path}: throughput_bps must be finite and >= 0", row=row)

    return [
        BandwidthSample(t=int(t), interval_bytes=int(b), throughput_bps=float(v))
        for t, b, v in zip(df["t"], df["interval_bytes"], throughput)
    ]


def _read_jsonl_samples(path: Path) -> list[BandwidthSample]:
    samples = []
    with path.open("r", encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(BandwidthSample.model_validate_json(line))
            except ValidationError as e:
                raise TraceFormatError(f"{path}: {e.errors()[0]['msg']}", row=row) from e
    return samples

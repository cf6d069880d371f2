"""
Goodput probe: a saturating sender and a counting receiver.

Receiver:
- accepts one sender per run, rejecting connections with a bad handshake
- counts payload bytes on the socket thread; a ticker thread snapshots and
  resets the counter at every interval boundary and emits a BandwidthSample
- emits zero samples while connected but starved, nothing before a session
- on disconnect emits the final partial interval if it carried bytes, so the
  sample byte counts always add up to the summary total

Sender:
- sends the handshake, then cycles through seeded pseudorandom payload blocks
  until the duration elapses

Timestamps are integer seconds. In relative mode t counts from the moment the
handshake was accepted; in epoch mode t is the rounded wall-clock start of
the interval.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Callable, Optional

import numpy as np

from plc_disagg.clock import TickSchedule, new_run_id, utc_now_iso
from plc_disagg.config import config as env_config
from plc_disagg.errors import ConfigError, HandshakeError, ProbeConnectionError
from plc_disagg.models import BandwidthSample, ProbeConfig, RunSummary
from plc_disagg.net import (
    HANDSHAKE_SIZE,
    connect_with_retry,
    encode_handshake,
    listen,
    recv_exact,
    validate_handshake,
)

logger = logging.getLogger(__name__)

SampleSink = Callable[[BandwidthSample], None]

HANDSHAKE_TIMEOUT_S = 5.0
POLL_S = 0.25
PAYLOAD_RING = 8
# Small send buffer keeps bytes-written close to bytes the path accepted
SENDER_SNDBUF = 32768


class ByteCounter:
    """Byte counter shared by the socket loop and the interval ticker."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._interval = 0
        self._total = 0

    def add(self, n: int) -> None:
        with self._lock:
            self._interval += n
            self._total += n

    def snapshot_and_reset(self) -> int:
        """Bytes counted since the previous snapshot."""
        with self._lock:
            value, self._interval = self._interval, 0
            return value

    @property
    def total(self) -> int:
        with self._lock:
            return self._total


def payload_blocks(seed: int, block_size: int, count: int = PAYLOAD_RING) -> list[bytes]:
    """Incompressible payload blocks from a seeded generator."""
    rng = np.random.default_rng(seed)
    return [rng.bytes(block_size) for _ in range(count)]


# =============================================================================
# RECEIVER
# =============================================================================


def _check_receiver_interval(interval_s: float) -> int:
    if interval_s < 1 or not float(interval_s).is_integer():
        raise ConfigError(f"receiver interval_s must be a whole number of seconds >= 1, got {interval_s}")
    return int(interval_s)


class _Session:
    """One accepted sender connection and its ticker."""

    def __init__(self, conn: socket.socket, config: ProbeConfig, sink: SampleSink, deadline: Optional[float]) -> None:
        self.conn = conn
        self.config = config
        self.sink = sink
        self.deadline = deadline
        self.interval = _check_receiver_interval(config.interval_s)
        self.counter = ByteCounter()
        self.ticks = TickSchedule(float(self.interval))
        self.done = threading.Event()
        self.n_samples = 0
        self.emitted_bytes = 0
        self.error: Optional[str] = None

    def _timestamp(self, index: int) -> int:
        offset = index * self.interval
        if self.config.clock == "epoch":
            return int(round(self.ticks.wall_anchor + offset))
        return offset

    def _emit(self, index: int, nbytes: int, elapsed: float) -> None:
        sample = BandwidthSample(
            t=self._timestamp(index),
            interval_bytes=nbytes,
            throughput_bps=nbytes * 8 / elapsed,
            warmup=index < self.config.warmup_samples,
        )
        try:
            self.sink(sample)
        except Exception as e:
            self.error = f"sink write failed: {e}"
            logger.error(f"Aborting receiver run: {self.error}")
            self.done.set()
            return
        self.n_samples += 1
        self.emitted_bytes += nbytes
        logger.debug(f"t={sample.t} bytes={nbytes} rate={sample.throughput_bps:.0f} bit/s")

    def _tick(self) -> None:
        while not self.done.wait(self.ticks.seconds_until_boundary()):
            nbytes = self.counter.snapshot_and_reset()
            self._emit(self.ticks.advance(), nbytes, float(self.interval))
            if self.deadline is not None and time.monotonic() >= self.deadline:
                self.done.set()

    def run(self) -> None:
        ticker = threading.Thread(target=self._tick, name="probe-ticker", daemon=True)
        ticker.start()
        buf = bytearray(max(self.config.block_size_bytes, 65536))
        self.conn.settimeout(POLL_S)
        try:
            while not self.done.is_set():
                try:
                    n = self.conn.recv_into(buf)
                except TimeoutError:
                    continue
                if n == 0:
                    logger.info("Sender disconnected")
                    break
                self.counter.add(n)
        except OSError as e:
            logger.warning(f"Connection lost: {e}")
        finally:
            self.done.set()
            ticker.join()

        remainder = self.counter.snapshot_and_reset()
        if remainder and self.error is None:
            index = self.ticks.index
            elapsed = time.monotonic() - (self.ticks.anchor + self.ticks.interval_start_offset(index))
            self._emit(index, remainder, elapsed if elapsed > 0 else float(self.interval))


def run_receiver(
    config: ProbeConfig,
    sink: SampleSink,
    stop_event: Optional[threading.Event] = None,
    ready_event: Optional[threading.Event] = None,
) -> RunSummary:
    """
    Measure goodput of one sender connection, emitting a sample per interval.

    Args:
        config: Bind address, interval, duration, clock and warm-up settings
        sink: Called once per sample, in order, from the ticker thread
        stop_event: Set to end the run early
        ready_event: Set once the listening socket is bound

    Returns:
        RunSummary (role receiver). total_bytes equals the sum of emitted
        interval_bytes unless the sink failed (error is then set).

    Raises:
        ConfigError: If interval_s is not a whole number of seconds
        OSError: If the address cannot be bound
    """
    _check_receiver_interval(config.interval_s)
    run_id, started_at = new_run_id(), utc_now_iso()
    run_start = time.monotonic()
    deadline = run_start + config.duration_s if config.duration_s else None
    rejected = 0

    def expired() -> bool:
        stopped = stop_event is not None and stop_event.is_set()
        return stopped or (deadline is not None and time.monotonic() >= deadline)

    with listen(config.address) as server:
        server.settimeout(POLL_S)
        if ready_event is not None:
            ready_event.set()
        logger.info(f"Receiver {run_id} waiting on {config.address}")
        while not expired():
            try:
                conn, peer = server.accept()
            except TimeoutError:
                continue
            with conn:
                frame = recv_exact(conn, HANDSHAKE_SIZE, timeout=HANDSHAKE_TIMEOUT_S)
                try:
                    validate_handshake(frame)
                except HandshakeError as e:
                    rejected += 1
                    logger.warning(f"Rejected connection from {peer[0]}:{peer[1]}: {e}")
                    continue
                logger.info(f"Accepted sender {peer[0]}:{peer[1]}")
                session = _Session(conn, config, sink, deadline)
                session.run()

            duration = time.monotonic() - run_start
            total = session.counter.total
            logger.info(f"Receiver done: {total} bytes in {session.n_samples} samples over {duration:.1f}s")
            return RunSummary(
                run_id=run_id,
                role="receiver",
                started_at=started_at,
                total_bytes=total,
                duration_s=duration,
                mean_throughput_bps=total * 8 / duration if duration > 0 else 0.0,
                n_samples=session.n_samples,
                connected=True,
                rejected_connections=rejected,
                error=session.error,
            )

    logger.info("Receiver finished without a sender connection")
    return RunSummary(
        run_id=run_id,
        role="receiver",
        started_at=started_at,
        duration_s=time.monotonic() - run_start,
        rejected_connections=rejected,
    )


# =============================================================================
# SENDER
# =============================================================================


def run_sender(config: ProbeConfig, stop_event: Optional[threading.Event] = None) -> RunSummary:
    """
    Saturate the connection to config.address until duration_s elapses.

    Returns:
        RunSummary (role sender) with the payload bytes written and wall-clock duration

    Raises:
        ProbeConnectionError: Connection refused, reset or rejected; the partial
            summary is attached as .summary
    """
    run_id, started_at = new_run_id(), utc_now_iso()
    seed = config.payload_seed if config.payload_seed is not None else env_config.payload_seed
    start = time.monotonic()
    sent = 0

    def summary(error: Optional[str] = None, connected: bool = True) -> RunSummary:
        duration = time.monotonic() - start
        return RunSummary(
            run_id=run_id,
            role="sender",
            started_at=started_at,
            total_bytes=sent,
            duration_s=duration,
            mean_throughput_bps=sent * 8 / duration if duration > 0 else 0.0,
            connected=connected,
            error=error,
        )

    try:
        sock = connect_with_retry(config.address, config.connect_attempts, config.connect_retry_delay_s)
    except OSError as e:
        raise ProbeConnectionError(f"cannot connect to {config.address}: {e}", summary(str(e), False)) from e

    blocks = payload_blocks(seed, config.block_size_bytes)
    deadline = start + config.duration_s if config.duration_s else None
    with sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, SENDER_SNDBUF)
        try:
            sock.sendall(encode_handshake())
            sock.settimeout(POLL_S)
            index = 0

            def running() -> bool:
                stopped = stop_event is not None and stop_event.is_set()
                return not stopped and (deadline is None or time.monotonic() < deadline)

            while running():
                view = memoryview(blocks[index % len(blocks)])
                offset = 0
                while offset < len(view) and running():
                    try:
                        written = sock.send(view[offset:])
                    except TimeoutError:
                        continue
                    offset += written
                    sent += written
                index += 1
            sock.shutdown(socket.SHUT_WR)
        except OSError as e:
            # The protocol has no ack: a rejected handshake surfaces as a reset
            logger.error(f"Sender aborted after {sent} bytes: {e}")
            raise ProbeConnectionError(f"connection to {config.address} lost: {e}", summary(str(e))) from e

    result = summary()
    logger.info(
        f"Sender done: {result.total_bytes} bytes in {result.duration_s:.1f}s "
        f"({result.mean_throughput_bps / 1e6:.2f} Mbit/s)"
    )
    return result

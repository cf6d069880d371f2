"""
Live channel emulation: a TCP proxy that throttles a probe stream to the
simulated PLC capacity.

    sender --> [proxy: token bucket @ capacity_at(t)] --> receiver

The capacity clock starts when the sender connects. Once per second a
background thread sets the bucket rate to capacity_at(t); the forwarding loop
charges every payload byte against the bucket. The 6-byte handshake is
forwarded first, unmodified and free of charge.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Callable, Optional, Sequence

from plc_disagg.channel_sim import ChannelModel
from plc_disagg.clock import TickSchedule, new_run_id, utc_now_iso
from plc_disagg.errors import ProbeConnectionError
from plc_disagg.models import ApplianceModel, ChannelConfig, ProbeConfig, RunSummary, Schedule
from plc_disagg.net import HANDSHAKE_SIZE, connect_with_retry, listen, recv_exact

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_S = 0.25
# Forward in slices of about this many seconds of the current rate
FORWARD_SLICE_S = 0.02
MIN_CHUNK = 1024
MAX_CHUNK = 65536
# Small inbound buffer keeps the sender's byte count close to what was forwarded
PROXY_RCVBUF = 32768


class TokenBucket:
    """
    Thread-safe token bucket in bytes.

    Refill rate is rate_bps / 8 bytes per second, depth is depth_s seconds of
    the current rate. consume() may drive the balance negative and then sleeps
    until the debt is repaid, so any chunk size is accepted.

    Usage:
        bucket = TokenBucket(1e7)
        bucket.consume(len(data))
        bucket.set_rate(5e6)
    """

    def __init__(
        self,
        rate_bps: float,
        depth_s: float = DEFAULT_DEPTH_S,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        if rate_bps <= 0 or depth_s <= 0:
            raise ValueError("rate_bps and depth_s must be positive")
        self._lock = threading.Lock()
        self._clock = clock
        self._depth_s = depth_s
        self._rate = rate_bps / 8.0
        self._tokens = self.capacity_bytes
        self._last = clock()

    @property
    def rate_bps(self) -> float:
        return self._rate * 8.0

    @property
    def capacity_bytes(self) -> float:
        return self._rate * self._depth_s

    @property
    def tokens(self) -> float:
        with self._lock:
            self._refill(self._clock())
            return self._tokens

    def _refill(self, now: float) -> None:
        self._tokens = min(self.capacity_bytes, self._tokens + (now - self._last) * self._rate)
        self._last = now

    def set_rate(self, rate_bps: float) -> None:
        """Switch to a new refill rate; tokens earned so far are kept up to the new depth."""
        if rate_bps <= 0:
            raise ValueError("rate_bps must be positive")
        with self._lock:
            self._refill(self._clock())
            self._rate = rate_bps / 8.0
            self._tokens = min(self._tokens, self.capacity_bytes)

    def reserve(self, amount: int) -> float:
        """Take amount tokens now and return the seconds to wait before using them."""
        with self._lock:
            self._refill(self._clock())
            self._tokens -= amount
            return max(0.0, -self._tokens / self._rate)

    def consume(self, amount: int) -> None:
        wait = self.reserve(amount)
        if wait > 0:
            time.sleep(wait)

    def chunk_size(self) -> int:
        """Read size keeping each forwarded slice short relative to one second."""
        return int(min(MAX_CHUNK, max(MIN_CHUNK, self._rate * FORWARD_SLICE_S)))


def _accept(server: socket.socket, stop_event: Optional[threading.Event]) -> Optional[socket.socket]:
    while stop_event is None or not stop_event.is_set():
        try:
            conn, peer = server.accept()
        except TimeoutError:
            continue
        logger.info(f"Sender connected from {peer[0]}:{peer[1]}")
        return conn
    return None


def run_throttle_proxy(
    listen_addr: str,
    upstream_addr: str,
    config: ChannelConfig,
    appliances: Sequence[ApplianceModel],
    schedule: Schedule,
    seed: int | None = None,
    probe: ProbeConfig | None = None,
    stop_event: Optional[threading.Event] = None,
    ready_event: Optional[threading.Event] = None,
) -> RunSummary:
    """
    Forward one sender connection to the upstream receiver at the simulated capacity.

    Args:
        listen_addr: host:port the sender connects to
        upstream_addr: host:port of the receiver
        config, appliances, schedule, seed: Channel model driving the rate
        probe: Connect retry settings for the upstream dial
        stop_event: Set to abandon waiting for a sender
        ready_event: Set once the listening socket is bound

    Returns:
        RunSummary (role proxy) with the payload bytes forwarded

    Raises:
        ProbeConnectionError: If the upstream receiver is unreachable
        ScheduleError: If the schedule is invalid for the appliances
        OSError: If listen_addr cannot be bound
    """
    probe = probe or ProbeConfig()
    run_id, started_at = new_run_id(), utc_now_iso()
    model = ChannelModel(config, appliances, schedule, seed=seed)

    with listen(listen_addr) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, PROXY_RCVBUF)
        server.settimeout(0.25)
        if ready_event is not None:
            ready_event.set()
        downstream = _accept(server, stop_event)
        if downstream is None:
            logger.info("Proxy stopped before any sender connected")
            return RunSummary(run_id=run_id, role="proxy", started_at=started_at)

    with downstream:
        try:
            upstream = connect_with_retry(upstream_addr, probe.connect_attempts, probe.connect_retry_delay_s)
        except OSError as e:
            summary = RunSummary(run_id=run_id, role="proxy", started_at=started_at, connected=True, error=str(e))
            raise ProbeConnectionError(f"upstream {upstream_addr} unreachable: {e}", summary=summary) from e
        with upstream:
            return _forward(downstream, upstream, model, run_id, started_at, stop_event)


def _forward(
    downstream: socket.socket,
    upstream: socket.socket,
    model: ChannelModel,
    run_id: str,
    started_at: str,
    stop_event: Optional[threading.Event],
) -> RunSummary:
    start = time.monotonic()
    bucket = TokenBucket(model.capacity_at(0))
    done = threading.Event()

    def update_rate() -> None:
        ticks = TickSchedule(1.0, anchor=start)
        while not done.wait(ticks.seconds_until_boundary()):
            second = ticks.advance() + 1
            rate = model.capacity_at(second)
            bucket.set_rate(rate)
            logger.debug(f"t={second}s rate={rate:.0f} bit/s")

    updater = threading.Thread(target=update_rate, name="proxy-rate", daemon=True)
    updater.start()

    total = 0
    error: Optional[str] = None
    try:
        handshake = recv_exact(downstream, HANDSHAKE_SIZE, timeout=5.0)
        upstream.sendall(handshake)
        downstream.settimeout(0.25)
        while stop_event is None or not stop_event.is_set():
            try:
                data = downstream.recv(bucket.chunk_size())
            except TimeoutError:
                continue
            if not data:
                break
            bucket.consume(len(data))
            upstream.sendall(data)
            total += len(data)
    except (ConnectionResetError, ConnectionAbortedError, BrokenPipeError) as e:
        error = f"connection lost: {e}"
        logger.error(f"Proxy forwarding aborted after {total} bytes: {e}")
    finally:
        done.set()
        updater.join()
        try:
            upstream.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    duration = time.monotonic() - start
    logger.info(f"Proxy forwarded {total} bytes in {duration:.1f}s")
    return RunSummary(
        run_id=run_id,
        role="proxy",
        started_at=started_at,
        total_bytes=total,
        duration_s=duration,
        mean_throughput_bps=total * 8 / duration if duration > 0 else 0.0,
        connected=True,
        error=error,
    )

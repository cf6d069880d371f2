"""
Socket helpers shared by the probe endpoints and the throttle proxy.

Provides:
- host:port parsing
- retry_with_backoff for transient connect failures
- The 6-byte handshake frame ("PLCB" + version + role)
- recv_exact for reading fixed-size frames under a deadline
"""

from __future__ import annotations

import logging
import socket
import time
from functools import wraps
from typing import Callable, ParamSpec, TypeVar

from plc_disagg import PROTOCOL_VERSION
from plc_disagg.errors import HandshakeError

logger = logging.getLogger(__name__)

P = ParamSpec("P")
R = TypeVar("R")

HANDSHAKE_MAGIC = b"PLCB"
HANDSHAKE_SIZE = 6
ROLE_SENDER = 0x01

# Connect failures worth retrying: the peer may still be starting up.
TRANSIENT_ERRORS: tuple[type[BaseException], ...] = (
    ConnectionRefusedError,
    ConnectionResetError,
    ConnectionAbortedError,
    TimeoutError,
)


def parse_address(address: str) -> tuple[str, int]:
    """
    Split 'host:port' into its parts.

    Example:
        >>> parse_address("127.0.0.1:5201")
        ('127.0.0.1', 5201)
        >>> parse_address("[::1]:5201")
        ('::1', 5201)
    """
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {address!r}")
    return host.strip("[]"), int(port)


def retry_with_backoff(
    max_attempts: int = 3,
    initial_delay: float = 0.5,
    backoff_factor: float = 2.0,
    exceptions: tuple[type[BaseException], ...] = TRANSIENT_ERRORS,
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """
    Decorator retrying a call on transient errors with exponential backoff.

    Attempt 1 runs immediately, attempt k waits initial_delay * backoff_factor**(k-2).
    The last exception is re-raised once all attempts fail.

    Example:
        >>> @retry_with_backoff(max_attempts=5, initial_delay=0.2)
        ... def dial():
        ...     return socket.create_connection(("127.0.0.1", 5201))
    """

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            delay = initial_delay
            for attempt in range(1, max_attempts + 1):
                try:
                    return func(*args, **kwargs)
                except exceptions as e:
                    if attempt == max_attempts:
                        logger.error(f"All {max_attempts} attempts failed. Last error: {e}")
                        raise
                    logger.warning(f"Attempt {attempt}/{max_attempts} failed: {e}. Retrying in {delay:.1f}s...")
                    time.sleep(delay)
                    delay *= backoff_factor
            raise RuntimeError("unreachable: retry loop exited without result")

        return wrapper

    return decorator


def connect_with_retry(address: str, attempts: int, initial_delay: float, timeout: float = 5.0) -> socket.socket:
    """Open a TCP connection to address, retrying transient failures."""
    host, port = parse_address(address)

    @retry_with_backoff(max_attempts=attempts, initial_delay=initial_delay)
    def _dial() -> socket.socket:
        return socket.create_connection((host, port), timeout=timeout)

    sock = _dial()
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    logger.info(f"Connected to {address}")
    return sock


def listen(address: str, backlog: int = 1) -> socket.socket:
    """Bind and listen on address; OSError propagates on bind failure."""
    host, port = parse_address(address)
    family = socket.AF_INET6 if ":" in host else socket.AF_INET
    server = socket.create_server((host, port), family=family, backlog=backlog)
    logger.info(f"Listening on {address}")
    return server


def encode_handshake(role: int = ROLE_SENDER, version: int = PROTOCOL_VERSION) -> bytes:
    """Build the 6-byte handshake frame."""
    return HANDSHAKE_MAGIC + bytes([version, role])


def validate_handshake(frame: bytes) -> int:
    """
    Check a received handshake frame and return its role byte.

    Raises:
        HandshakeError: On short frame, wrong magic, version or role
    """
    if len(frame) != HANDSHAKE_SIZE:
        raise HandshakeError(f"short handshake ({len(frame)} of {HANDSHAKE_SIZE} bytes)")
    if frame[:4] != HANDSHAKE_MAGIC:
        raise HandshakeError(f"bad magic {frame[:4]!r}")
    if frame[4] != PROTOCOL_VERSION:
        raise HandshakeError(f"unsupported protocol version {frame[4]:#04x}")
    if frame[5] != ROLE_SENDER:
        raise HandshakeError(f"unexpected role {frame[5]:#04x}")
    return frame[5]


def recv_exact(sock: socket.socket, size: int, timeout: float) -> bytes:
    """
    Read exactly size bytes or fewer if the peer closes or the timeout expires.

    The caller decides whether a short read is an error.
    """
    deadline = time.monotonic() + timeout
    chunks = bytearray()
    while len(chunks) < size:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        sock.settimeout(remaining)
        try:
            chunk = sock.recv(size - len(chunks))
        except TimeoutError:
            break
        if not chunk:
            break
        chunks.extend(chunk)
    return bytes(chunks)

"""
Pytest configuration and fixtures for integration tests.

Live tests run the receiver, proxy and sender in threads over loopback on
ephemeral ports. Each helper joins its thread with a timeout so a stuck socket
fails the test instead of hanging the run.
"""

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import pytest

from plc_disagg.models import BandwidthSample, ProbeConfig, RunSummary
from plc_disagg.probe import run_receiver

JOIN_TIMEOUT_S = 30.0


@dataclass
class Background:
    """A probe role running in a thread, with its result or exception."""

    thread: threading.Thread
    ready: threading.Event
    stop: threading.Event
    result: Optional[RunSummary] = None
    error: Optional[BaseException] = None
    samples: list[BandwidthSample] = field(default_factory=list)

    def join(self) -> RunSummary:
        self.thread.join(JOIN_TIMEOUT_S)
        assert not self.thread.is_alive(), f"{self.thread.name} did not finish"
        if self.error is not None:
            raise self.error
        assert self.result is not None
        return self.result


def start_background(name: str, target: Callable[..., RunSummary], **kwargs: Any) -> Background:
    ready, stop = threading.Event(), threading.Event()
    holder = Background(thread=threading.Thread(name=name, daemon=True), ready=ready, stop=stop)

    def run() -> None:
        try:
            holder.result = target(stop_event=stop, ready_event=ready, **kwargs)
        except BaseException as e:  # surfaced by join()
            holder.error = e
            ready.set()

    holder.thread = threading.Thread(target=run, name=name, daemon=True)
    holder.thread.start()
    assert ready.wait(5.0), f"{name} never became ready"
    return holder


@pytest.fixture
def start_receiver() -> Callable[..., Background]:
    """Start run_receiver in a thread collecting samples in memory."""
    started: list[Background] = []

    def _start(config: ProbeConfig) -> Background:
        samples: list[BandwidthSample] = []
        holder = start_background("receiver", run_receiver, config=config, sink=samples.append)
        holder.samples = samples
        started.append(holder)
        return holder

    yield _start
    for holder in started:
        holder.stop.set()

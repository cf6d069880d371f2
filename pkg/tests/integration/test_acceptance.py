"""
Acceptance runs over many seeds.

These are the long Monte Carlo checks of detection, calibration and
classification on the simulator, plus two live loopback runs through the
throttling proxy. Deselect with -m "not slow".
"""

import numpy as np
import pytest

from plc_disagg.channel_sim import generate_trace
from plc_disagg.detect import detect_events
from plc_disagg.disagg import calibrate_runs, classify, match_events
from plc_disagg.models import (
    ApplianceModel,
    ChannelConfig,
    ProbeConfig,
    Scenario,
    Schedule,
    ScheduleEntry,
    Trace,
)
from plc_disagg.pipeline import run_demo
from plc_disagg.probe import run_sender
from plc_disagg.scenarios import get_preset
from plc_disagg.throttle_proxy import run_throttle_proxy

from .conftest import start_background

pytestmark = pytest.mark.slow


def random_scenario(rng: np.random.Generator, channel: ChannelConfig) -> tuple[Scenario, int]:
    """1-8 back-to-back events with drops 0.06-0.6 and durations 10-300 s."""
    appliances, entries = [], []
    t = int(rng.integers(10, 60))
    for k in range(int(rng.integers(1, 9))):
        duration = int(rng.integers(10, 301))
        appliances.append(ApplianceModel(id=f"a{k}", label=f"a{k}", drop_mean_frac=float(rng.uniform(0.06, 0.6))))
        entries.append(ScheduleEntry(appliance_id=f"a{k}", t_on=t, t_off=t + duration))
        t += duration + int(rng.integers(10, 121))
    scenario = Scenario(channel=channel, appliances=tuple(appliances), schedule=Schedule(entries=tuple(entries)))
    return scenario, t


def simulate(scenario: Scenario, duration_s: int, seed: int) -> Trace:
    return generate_trace(scenario.channel, scenario.appliances, scenario.schedule, duration_s, seed=seed)


# =============================================================================
# DETECTION
# =============================================================================


class TestDetectionAcceptance:
    """Test detection quality over seeded random scenarios."""

    def test_noiseless_round_trip(self):
        """Test 200 noiseless scenarios are recovered exactly."""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            scenario, duration = random_scenario(rng, ChannelConfig())
            events = detect_events(simulate(scenario, duration, seed=0))

            assert [(e.t_on, e.t_off) for e in events] == [(s.t_on, s.t_off) for s in scenario.schedule.entries]
            for event, appliance in zip(events, scenario.appliances):
                assert abs(event.drop_frac - appliance.drop_mean_frac) <= 1e-9

    def test_noisy_detection(self):
        """Test precision, recall and onset error under 1% noise."""
        rng = np.random.default_rng(7)
        n_events = n_truth = n_matched = 0
        onset_errors: list[int] = []
        for seed in range(100):
            scenario, duration = random_scenario(rng, ChannelConfig(noise_std_frac=0.01))
            events = detect_events(simulate(scenario, duration, seed=seed))
            pairs, _, _ = match_events(events, scenario.schedule)

            n_events += len(events)
            n_truth += len(scenario.schedule.entries)
            n_matched += len(pairs)
            onset_errors.extend(abs(event.t_on - entry.t_on) for entry, event in pairs)

        assert n_matched / n_events >= 0.95
        assert n_matched / n_truth >= 0.95
        assert np.percentile(onset_errors, 95) <= 2

    def test_drift_false_events(self):
        """Test an hour of drifting no-load channel averages at most one false event."""
        channel = ChannelConfig(noise_std_frac=0.01, drift_walk_std_frac=0.002)
        false_events = [len(detect_events(generate_trace(channel, [], Schedule(), 3600, seed=s))) for s in range(100)]
        assert np.mean(false_events) <= 1


# =============================================================================
# PROTOCOL REPRODUCTION
# =============================================================================


class TestProtocolAcceptance:
    """Test the calibrate-then-classify protocol on the preset scenarios."""

    def test_seven_appliances(self):
        """Test label accuracy on the seven-appliance protocol over 50 seeds."""
        result = run_demo(get_preset("home7"), n_seeds=50)
        assert result.metrics.recall >= 0.95
        assert result.metrics.accuracy >= 0.95

    def test_low_power_chargers(self):
        """Test two small charger drops are detected and told apart."""
        result = run_demo(get_preset("chargers"), n_seeds=100)
        assert result.metrics.recall >= 0.95
        assert result.metrics.accuracy >= 0.95

    def test_colocated_lamps_ambiguous(self):
        """Test co-located identical lamps come back ambiguous between each other."""
        scenario = get_preset("home7-colocated")
        duration = scenario.schedule.end + 60
        traces = {seed: simulate(scenario, duration, seed) for seed in range(100)}
        calibration = calibrate_runs(
            ((traces[s], scenario.schedule) for s in range(50)),
            label_map=scenario.label_map(),
            appliances=scenario.appliances,
        )
        cfl_entries = [e for e in scenario.schedule.entries if e.appliance_id in ("cfl1", "cfl2")]

        verdicts = []
        for seed in range(50, 100):
            events = detect_events(traces[seed])
            by_onset = {c.event.t_on: c for c in classify(events, calibration.signatures)}
            pairs, _, _ = match_events(events, Schedule(entries=tuple(cfl_entries)))
            verdicts.extend(by_onset[event.t_on] for _, event in pairs)

        assert len(verdicts) >= 95
        ambiguous = [c for c in verdicts if c.verdict == "ambiguous"]
        assert len(ambiguous) >= 0.9 * len(verdicts)
        assert all({"cfl1", "cfl2"} <= {x.label for x in c.candidates} for c in ambiguous)


# =============================================================================
# LIVE RUNS
# =============================================================================


@pytest.mark.integration
@pytest.mark.e2e
class TestLiveAcceptance:
    """Test real sockets through the throttling proxy."""

    def run_live(self, free_port, start_receiver, channel, appliances, schedule, duration_s):
        receiver_addr = f"127.0.0.1:{free_port()}"
        proxy_addr = f"127.0.0.1:{free_port()}"
        receiver = start_receiver(ProbeConfig(address=receiver_addr))
        proxy = start_background(
            "proxy",
            run_throttle_proxy,
            listen_addr=proxy_addr,
            upstream_addr=receiver_addr,
            config=channel,
            appliances=appliances,
            schedule=schedule,
        )
        sent = run_sender(ProbeConfig(address=proxy_addr, duration_s=duration_s))
        proxy.join()
        received = receiver.join()
        assert received.total_bytes == sent.total_bytes
        return receiver.samples

    def test_constant_rate(self, free_port, start_receiver):
        """Test a minute at 10 Mbit/s measures within 10% every full second."""
        samples = self.run_live(free_port, start_receiver, ChannelConfig(base_bandwidth_bps=1.0e7), [], Schedule(), 60)
        # the final sample covers a partial interval
        steady = [s for s in samples[:-1] if not s.warmup]
        assert len(steady) >= 55
        assert all(s.throughput_bps == pytest.approx(1.0e7, rel=0.1) for s in steady)

    def test_schedule_detected(self, free_port, start_receiver):
        """Test two appliances switched through the proxy are detected on time."""
        appliances = [
            ApplianceModel(id="heater", label="heater", drop_mean_frac=0.5),
            ApplianceModel(id="lamp", label="lamp", drop_mean_frac=0.25),
        ]
        schedule = Schedule.from_rows([["heater", 30, 60], ["lamp", 80, 100]])
        samples = self.run_live(
            free_port, start_receiver, ChannelConfig(base_bandwidth_bps=8.0e6), appliances, schedule, 120
        )

        events = detect_events(Trace(samples=tuple(samples)))
        assert len(events) == 2
        for event, entry, appliance in zip(events, schedule.entries, appliances):
            assert abs(event.t_on - entry.t_on) <= 2
            assert abs(event.t_off - entry.t_off) <= 2
            assert event.drop_frac == pytest.approx(appliance.drop_mean_frac, abs=0.05)

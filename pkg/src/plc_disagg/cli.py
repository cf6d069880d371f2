"""
plc-disagg command-line interface.

Subcommands:
    recv          Run the probe receiver and log samples to a trace file
    send          Run the saturating probe sender
    simulate      Generate a synthetic trace from a scenario
    proxy         Throttle a live probe stream to the simulated capacity
    detect        Detect bandwidth-drop events in a trace
    calibrate     Learn appliance signatures from a trace and its schedule
    classify      Label events against signatures
    eval          Score labels against a ground-truth schedule
    run-protocol  Write the sequential on/off calibration schedule
    demo          Simulate, detect, calibrate, classify and evaluate over many seeds
    stability     Compare a repeat calibration against a reference

Settings come from built-in defaults, then --config (a JSON file with
probe/channel/detector/classifier sections), then command-line flags.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Callable, Optional, Sequence

from pydantic import BaseModel

from plc_disagg import PROTOCOL_VERSION, __version__
from plc_disagg.artifacts import (
    load_scenario,
    read_classifications,
    read_events,
    read_schedule,
    read_signatures,
    write_classifications,
    write_events,
    write_metrics,
    write_schedule,
    write_signatures,
)
from plc_disagg.channel_sim import generate_trace
from plc_disagg.config import PipelineConfig, config, load_pipeline_config, merge_overrides
from plc_disagg.detect import detect_events
from plc_disagg.disagg import calibrate, classify, compare_signatures, evaluate, run_protocol
from plc_disagg.errors import PlcDisaggError, ProbeConnectionError
from plc_disagg.models import ClassifierConfig, DetectorConfig, ProbeConfig, Scenario
from plc_disagg.pipeline import DEFAULT_TAIL_S, format_metrics_table, run_demo
from plc_disagg.probe import run_receiver, run_sender
from plc_disagg.throttle_proxy import run_throttle_proxy
from plc_disagg.trace_io import TraceWriter, read_trace, write_trace

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, PipelineConfig], int]


def _default(model: type[BaseModel], name: str) -> Any:
    return model.model_fields[name].default


def _emit_json(data: Any) -> None:
    sys.stdout.write(json.dumps(data, indent=2) + "\n")


def _scenario_with_channel(scenario: Scenario, pipeline: PipelineConfig) -> Scenario:
    """A channel section in --config replaces the scenario's own channel."""
    if "channel" in pipeline.model_fields_set:
        return scenario.model_copy(update={"channel": pipeline.channel})
    return scenario


# =============================================================================
# PROBE COMMANDS
# =============================================================================


def cmd_recv(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    pipeline = merge_overrides(
        pipeline,
        "probe",
        address=args.bind,
        interval_s=args.interval,
        duration_s=args.duration,
        clock=args.clock,
        warmup_samples=args.warmup,
    )
    with TraceWriter(args.out, fmt=args.format, flush_each=True) as writer:
        summary = run_receiver(pipeline.probe, writer)
    _emit_json(summary.model_dump(mode="json"))
    return 1 if summary.error else 0


def cmd_send(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    pipeline = merge_overrides(
        pipeline,
        "probe",
        address=args.target,
        duration_s=args.duration,
        block_size_bytes=args.block_size,
        payload_seed=args.seed,
    )
    try:
        summary = run_sender(pipeline.probe)
    except ProbeConnectionError as e:
        if e.summary is not None:
            _emit_json(e.summary.model_dump(mode="json"))
        raise
    _emit_json(summary.model_dump(mode="json"))
    return 0


# =============================================================================
# SIMULATOR COMMANDS
# =============================================================================


def cmd_simulate(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    scenario = _scenario_with_channel(load_scenario(args.scenario), pipeline)
    duration = args.duration or scenario.schedule.end + DEFAULT_TAIL_S
    trace = generate_trace(scenario.channel, scenario.appliances, scenario.schedule, duration, seed=args.seed)
    write_trace(trace, args.out, fmt=args.format)
    return 0


def cmd_proxy(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    scenario = _scenario_with_channel(load_scenario(args.scenario), pipeline)
    summary = run_throttle_proxy(
        args.listen,
        args.upstream,
        scenario.channel,
        scenario.appliances,
        scenario.schedule,
        seed=args.seed,
        probe=pipeline.probe,
    )
    _emit_json(summary.model_dump(mode="json"))
    return 1 if summary.error else 0


# =============================================================================
# ANALYSIS COMMANDS
# =============================================================================


def cmd_detect(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    pipeline = merge_overrides(
        pipeline,
        "detector",
        baseline_window=args.window,
        onset_threshold_frac=args.theta_on,
        offset_threshold_frac=args.theta_off,
        min_event_s=args.min_event,
        min_gap_s=args.min_gap,
    )
    trace = read_trace(args.input, warmup_samples=args.warmup)
    events = detect_events(trace, pipeline.detector)
    write_events(events, args.out)
    return 0


def cmd_calibrate(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    trace = read_trace(args.input, warmup_samples=args.warmup)
    schedule = read_schedule(args.schedule)
    appliances = load_scenario(args.scenario).appliances if args.scenario else ()
    result = calibrate(trace, schedule, pipeline.detector, appliances=appliances)
    write_signatures(result.signatures, args.out)
    if result.missed_entries:
        logger.warning(f"{len(result.missed_entries)} scheduled interval(s) produced no matching event")
    return 0


def cmd_classify(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    pipeline = merge_overrides(
        pipeline,
        "classifier",
        tau_margin=args.tau_margin,
        tau_unknown=args.tau_unknown,
        sigma_floor=args.sigma_floor,
    )
    events = read_events(args.events)
    signatures = read_signatures(args.sigs)
    cfg = pipeline.classifier
    labels = classify(events, signatures, cfg.tau_margin, cfg.tau_unknown, cfg.sigma_floor)
    write_classifications(labels, args.out)
    return 0


def cmd_eval(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    labels = read_classifications(args.labels)
    truth = read_schedule(args.truth)
    label_map = load_scenario(args.scenario).label_map() if args.scenario else None
    metrics = evaluate(labels, truth, args.tolerance, label_map=label_map)
    if args.out:
        write_metrics(metrics, args.out)
    print(format_metrics_table(metrics))
    return 0


def cmd_run_protocol(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    labels = [label.strip() for label in args.labels.split(",") if label.strip()]
    schedule = run_protocol(labels, on_s=args.on, gap_s=args.gap, lead_s=args.lead, repeats=args.repeats)
    if args.out:
        write_schedule(schedule, args.out)
    else:
        _emit_json(schedule.to_rows())
    return 0


def cmd_demo(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    scenario = _scenario_with_channel(load_scenario(args.scenario), pipeline)
    result = run_demo(
        scenario,
        n_seeds=args.seeds,
        duration_s=args.duration,
        detector=pipeline.detector,
        classifier=pipeline.classifier,
        out_dir=args.out,
    )
    print(format_metrics_table(result.metrics))
    return 0


def cmd_stability(args: argparse.Namespace, pipeline: PipelineConfig) -> int:
    report = compare_signatures(
        read_signatures(args.ref), read_signatures(args.sigs), tau=args.tau, sigma_floor=pipeline.classifier.sigma_floor
    )
    for row in report:
        shift = f"{row.shift_z:.2f}" if row.shift_z is not None else "-"
        print(f"{row.label:<16}{row.status:<10}{shift}")
    return 0


# =============================================================================
# PARSER
# =============================================================================


def _common_options(suppress: bool) -> argparse.ArgumentParser:
    """--config/--log-level, accepted before or after the subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    default: Any = argparse.SUPPRESS if suppress else None
    parent.add_argument("--config", default=default, metavar="PATH", help="Pipeline config JSON (default: built-ins)")
    parent.add_argument(
        "--log-level",
        default=default,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        type=str.upper,
        help="Log level (default: $PLC_DISAGG_LOG_LEVEL or INFO)",
    )
    return parent


def _add_trace_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format", choices=["csv", "jsonl"], default=None, help="Trace format (default: from file suffix)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plc-disagg",
        description="Measure, simulate and disaggregate PLC bandwidth drops caused by appliances.",
        parents=[_common_options(suppress=False)],
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__} (protocol 0x{PROTOCOL_VERSION:02x})"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_common_options(suppress=True)]

    def add(name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, parents=common)
        p.set_defaults(func=handler)
        return p

    probe_addr = _default(ProbeConfig, "address")
    p = add("recv", cmd_recv, "Run the probe receiver")
    p.add_argument("--bind", default=None, metavar="H:P", help=f"Listen address (default: {probe_addr})")
    p.add_argument("--interval", type=float, default=None, help="Sampling interval in whole seconds (default: 1)")
    p.add_argument("--duration", type=int, default=None, help="Run length in seconds (default: until disconnect)")
    p.add_argument("--clock", choices=["relative", "epoch"], default=None, help="Timestamp origin (default: relative)")
    p.add_argument("--warmup", type=int, default=None, help="Samples marked as warm-up (default: 3)")
    p.add_argument("--out", required=True, help="Trace output file")
    _add_trace_format(p)

    p = add("send", cmd_send, "Run the saturating probe sender")
    p.add_argument("--target", default=None, metavar="H:P", help=f"Receiver or proxy address (default: {probe_addr})")
    p.add_argument("--duration", type=int, default=None, help="Send duration in seconds (default: unbounded)")
    p.add_argument(
        "--block-size",
        type=int,
        default=None,
        help=f"Payload write size in bytes (default: {_default(ProbeConfig, 'block_size_bytes')})",
    )
    p.add_argument("--seed", type=int, default=None, help="Payload seed (default: $PLC_DISAGG_PAYLOAD_SEED or 0)")

    p = add("simulate", cmd_simulate, "Generate a synthetic trace from a scenario")
    p.add_argument("--scenario", required=True, help="Scenario JSON file or preset (home7, home7-colocated, chargers)")
    p.add_argument("--duration", type=int, default=None, help="Trace length in seconds (default: schedule end + 60)")
    p.add_argument("--seed", type=int, default=None, help="Random seed (default: the scenario channel seed)")
    p.add_argument("--out", required=True, help="Trace output file")
    _add_trace_format(p)

    p = add("proxy", cmd_proxy, "Throttle a live probe stream to the simulated capacity")
    p.add_argument("--listen", required=True, metavar="H:P", help="Address the sender connects to")
    p.add_argument("--upstream", required=True, metavar="H:P", help="Receiver address")
    p.add_argument("--scenario", required=True, help="Scenario JSON file or preset")
    p.add_argument("--seed", type=int, default=None, help="Random seed (default: the scenario channel seed)")

    det = DetectorConfig.model_fields
    p = add("detect", cmd_detect, "Detect bandwidth-drop events in a trace")
    p.add_argument("--in", dest="input", required=True, help="Trace file (csv or jsonl)")
    p.add_argument("--out", required=True, help="Events JSONL output")
    p.add_argument("--warmup", type=int, default=0, help="Mark the first N samples as warm-up (default: 0)")
    p.add_argument("--window", type=int, default=None, help=f"Baseline window W (default: {det['baseline_window'].default})")
    p.add_argument(
        "--theta-on", type=float, default=None, help=f"Onset threshold (default: {det['onset_threshold_frac'].default})"
    )
    p.add_argument(
        "--theta-off", type=float, default=None, help=f"Offset threshold (default: {det['offset_threshold_frac'].default})"
    )
    p.add_argument(
        "--min-event", type=int, default=None, help=f"Samples to open/close (default: {det['min_event_s'].default})"
    )
    p.add_argument("--min-gap", type=int, default=None, help=f"Merge gap in seconds (default: {det['min_gap_s'].default})")

    p = add("calibrate", cmd_calibrate, "Learn appliance signatures from a trace and its schedule")
    p.add_argument("--in", dest="input", required=True, help="Trace file")
    p.add_argument("--schedule", required=True, help="Schedule JSON ([[id, t_on, t_off], ...] or a scenario file)")
    p.add_argument("--scenario", default=None, help="Scenario supplying labels and locations (default: ids are labels)")
    p.add_argument("--warmup", type=int, default=0, help="Mark the first N samples as warm-up (default: 0)")
    p.add_argument("--out", required=True, help="Signatures JSON output")

    cls = ClassifierConfig.model_fields
    p = add("classify", cmd_classify, "Label events against signatures")
    p.add_argument("--events", required=True, help="Events JSONL")
    p.add_argument("--sigs", required=True, help="Signatures JSON")
    p.add_argument("--out", required=True, help="Classifications JSONL output")
    p.add_argument("--tau-margin", type=float, default=None, help=f"Margin in z-units (default: {cls['tau_margin'].default})")
    p.add_argument(
        "--tau-unknown", type=float, default=None, help=f"Unknown cutoff in z-units (default: {cls['tau_unknown'].default})"
    )
    p.add_argument(
        "--sigma-floor", type=float, default=None, help=f"Minimum signature std (default: {cls['sigma_floor'].default})"
    )

    p = add("eval", cmd_eval, "Score labels against a ground-truth schedule")
    p.add_argument("--labels", required=True, help="Classifications JSONL")
    p.add_argument("--truth", required=True, help="Ground-truth schedule JSON")
    p.add_argument("--scenario", default=None, help="Scenario mapping appliance ids to labels (default: identity)")
    p.add_argument("--tolerance", type=int, default=5, help="Timing tolerance in seconds (default: 5)")
    p.add_argument("--out", default=None, help="Metrics JSON output (default: table only)")

    p = add("run-protocol", cmd_run_protocol, "Write the sequential on/off calibration schedule")
    p.add_argument("--labels", required=True, help="Comma-separated appliance ids, in switching order")
    p.add_argument("--on", type=int, default=60, help="Seconds each appliance stays on (default: 60)")
    p.add_argument("--gap", type=int, default=60, help="Seconds between appliances (default: 60)")
    p.add_argument("--lead", type=int, default=0, help="No-load seconds before the first appliance (default: 0)")
    p.add_argument("--repeats", type=int, default=1, help="Protocol repetitions (default: 1)")
    p.add_argument("--out", default=None, help="Schedule JSON output (default: stdout)")

    p = add("demo", cmd_demo, "Simulate, detect, calibrate, classify and evaluate over many seeds")
    p.add_argument("--scenario", default="home7", help="Scenario JSON file or preset (default: home7)")
    p.add_argument("--seeds", type=int, default=10, help="Number of seeds, half used for calibration (default: 10)")
    p.add_argument("--duration", type=int, default=None, help="Trace length (default: schedule end + 60)")
    p.add_argument("--out", default=None, help="Directory for traces, events, labels and metrics (default: none)")

    p = add("stability", cmd_stability, "Compare a repeat calibration against a reference")
    p.add_argument("--ref", required=True, help="Reference signatures JSON")
    p.add_argument("--sigs", required=True, help="Repeat-run signatures JSON")
    p.add_argument("--tau", type=float, default=2.0, help="Shift in z-units flagged as unstable (default: 2.0)")

    return parser


def _configure_logging(level: Optional[str]) -> list[str]:
    """Set up stderr logging; returns environment problems instead of raising."""
    config.set_log_level(level)
    problems = config.validate_required()
    logging.basicConfig(
        level=logging.INFO if problems else config.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    return problems


def main(argv: Sequence[str] | None = None) -> int:
    """Parse argv, dispatch the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    problems = _configure_logging(args.log_level)
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1

    try:
        pipeline = load_pipeline_config(args.config)
        return int(args.func(args, pipeline))
    except (PlcDisaggError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())

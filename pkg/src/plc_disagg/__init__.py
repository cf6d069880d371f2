"""
plc-disagg: appliance disaggregation from powerline-communication bandwidth drops.

Modules:
- probe: saturating sender / counting receiver measuring 1 Hz goodput
- channel_sim: PLC capacity model, synthetic traces, token-bucket throttle proxy
- detect: drifting-baseline drop-event detector
- disagg: signature calibration, classification, evaluation, protocol schedules
- cli: the plc-disagg command
"""

__version__ = "1.0.0"

# Handshake protocol version byte sent by the probe sender.
PROTOCOL_VERSION = 0x01

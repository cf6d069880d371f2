# Scenario and schedule fixtures for plc-disagg tests

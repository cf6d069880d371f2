"""Loopback and acceptance tests for plc-disagg."""

"""Packet-level simulator and switch AQM library for receive-window rewriting (RWNDQ)."""

__version__ = "0.1.0"

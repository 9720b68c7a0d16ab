"""Packet-level wireless mesh simulator comparing DSDV link metrics (HOP, ETX, IBETX)."""

__version__ = "0.1.0"

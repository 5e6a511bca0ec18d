"""Discrete-event MPTCP simulator for satellite-terrestrial networks."""

__version__ = "0.1.0"

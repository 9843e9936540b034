"""Simulated DVFS governors for periodic soft-deadline workloads."""

__version__ = "0.1.0"

"""Rollover-preventive active suspension: optimal control, disjunctive constraints and gain synthesis."""

__version__ = "0.1.0"

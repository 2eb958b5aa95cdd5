"""Optimal control of driven, dissipative two-level quantum systems."""

__version__ = "0.1.0"

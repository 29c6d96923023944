"""Batch harness for interval elicitation, scoring, and conformal recalibration."""

__version__ = "0.1.0"

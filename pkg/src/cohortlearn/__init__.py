"""Estimation and inference for cohort panels with learning from experience."""

__version__ = "0.1.0"

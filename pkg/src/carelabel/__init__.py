"""Certification suite for ML methods and models: probes, grades, labels."""

__version__ = "0.1.0"

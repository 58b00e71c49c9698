"""Deterministic simulator for energy-aware federated learning with exact forgetting."""

__version__ = "0.1.0"

"""Federated multimodal training engine for radiotherapy structure naming."""

__version__ = "0.1.0"

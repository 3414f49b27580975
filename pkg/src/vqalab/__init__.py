"""Automatic benchmarking of multimodal models through orchestrated VQA experiments."""

__version__ = "0.1.0"

"""Scoring and generation server for real multimodal models.

Exposes /v1/score/<model> and /v1/generate with the exact field names the
benchmarking harness speaks, so the hermetic conformance fixtures replay
against hosted checkpoints unmodified.
"""

__version__ = "0.1.0"

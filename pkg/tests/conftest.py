"""Shared fixtures: corpus manifest, mock backends, synthetic images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from vqalab.datasources import Codebook, DataContext, load_manifest
from vqalab.images import ImageBuffer
from vqalab.toolbox import TransformContext, default_registry
from vqalab.wire import MockGenerationClient

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def manifest():
    return load_manifest(DATA_DIR / "corpus" / "manifest.json")


@pytest.fixture(scope="session")
def codebook(manifest):
    return Codebook.from_manifest(manifest)


@pytest.fixture(scope="session")
def mock_generator(codebook):
    return MockGenerationClient(codebook)


@pytest.fixture()
def data_ctx(manifest, mock_generator):
    return DataContext(manifest, mock_generator)


def make_textured_image(seed: int = 0) -> ImageBuffer:
    """Mid-range textured fixture; headroom avoids clamping under added noise."""
    rng = np.random.default_rng(seed)
    x, y = np.meshgrid(np.arange(512), np.arange(512))
    base = 0.5 + 0.1 * np.sin(x / 9.0) * np.cos(y / 13.0)
    img = np.stack(
        [base, 0.5 + 0.08 * np.sin(x / 7.0 + 1.0), 0.5 + 0.07 * np.cos(y / 11.0)],
        axis=-1,
    )
    img += rng.normal(0.0, 0.04, img.shape)
    return ImageBuffer.from_float(np.clip(img, 0.3, 0.7))


@pytest.fixture(scope="session")
def textured_image():
    return make_textured_image(0)


@pytest.fixture()
def transform_ctx(mock_generator):
    def factory(seed: int = 0, label: str | None = None, companion: ImageBuffer | None = None):
        return TransformContext(
            rng=np.random.default_rng(seed),
            generation_client=mock_generator,
            companion_sampler=(lambda: companion) if companion is not None else None,
            sample_label=label,
        )

    return factory


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed"):
        for report in terminalreporter.stats.get(status, []):
            if getattr(report, "when", None) != "call":
                continue
            if "test_acceptance.py" in report.nodeid:
                lines.append((report.nodeid.split("::", 1)[1], status == "passed"))
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok in sorted(lines):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")

"""Shim test fixtures: in-process app with the deterministic tiny model."""

from __future__ import annotations

from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from modelshim.generation import ProceduralGenerator
from modelshim.scoring import TinyAnswerRanker
from modelshim.server import HostedModel, create_app


def repo_root() -> Path:
    current = Path(__file__).resolve()
    for parent in current.parents:
        if (parent / ".git").exists():
            return parent
    raise FileNotFoundError("repository root not found")


@pytest.fixture(scope="session")
def protocol_dir() -> Path:
    return repo_root() / "tests" / "data" / "protocol"


@pytest.fixture(scope="session")
def app():
    models = {
        "tiny-deterministic": HostedModel(
            name="tiny-deterministic", scorer=TinyAnswerRanker(seed=0)
        ),
        "tiny-alt": HostedModel(name="tiny-alt", scorer=TinyAnswerRanker(seed=9)),
    }
    return create_app(models, ProceduralGenerator(base_seed=0))


@pytest.fixture()
def client(app):
    return TestClient(app)

"""The harness's protocol conformance fixtures, replayed against the shim."""

from __future__ import annotations

import base64
import io
import json
import math

from PIL import Image


def score_fixtures(protocol_dir):
    return sorted(protocol_dir.glob("score_request_*.json"))


def generate_fixtures(protocol_dir):
    return sorted(protocol_dir.glob("generate_request_*.json"))


class TestScoreConformance:
    def test_fixtures_present(self, protocol_dir):
        assert score_fixtures(protocol_dir), "harness protocol fixtures not found"

    def test_shape_and_finiteness(self, client, protocol_dir):
        for path in score_fixtures(protocol_dir):
            body = json.loads(path.read_text())
            response = client.post("/v1/score/tiny-deterministic", json=body)
            assert response.status_code == 200, path.name
            values = response.json()["log_likelihoods"]
            assert len(values) == len(body["choices"])
            assert all(isinstance(v, float) and math.isfinite(v) for v in values)

    def test_repeat_call_equality(self, client, protocol_dir):
        for path in score_fixtures(protocol_dir):
            body = json.loads(path.read_text())
            first = client.post("/v1/score/tiny-deterministic", json=body).json()
            second = client.post("/v1/score/tiny-deterministic", json=body).json()
            assert first == second, path.name

    def test_models_differ_but_are_each_deterministic(self, client, protocol_dir):
        body = json.loads(score_fixtures(protocol_dir)[0].read_text())
        a = client.post("/v1/score/tiny-deterministic", json=body).json()
        b = client.post("/v1/score/tiny-alt", json=body).json()
        assert a != b


class TestGenerateConformance:
    def test_shape_and_decodability(self, client, protocol_dir):
        for path in generate_fixtures(protocol_dir):
            body = json.loads(path.read_text())
            response = client.post("/v1/generate", json=body)
            assert response.status_code == 200, path.name
            png = base64.b64decode(response.json()["image"])
            image = Image.open(io.BytesIO(png))
            assert image.size == (body["width"], body["height"])

    def test_repeat_call_equality(self, client, protocol_dir):
        body = json.loads(generate_fixtures(protocol_dir)[0].read_text())
        first = client.post("/v1/generate", json=body).json()
        second = client.post("/v1/generate", json=body).json()
        assert first == second

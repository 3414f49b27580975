"""Network protocols: scoring, generation, and chat clients plus local mocks.

Three stateless request/response protocols cross process boundaries:

- POST /v1/score/<model-route>  {image (base64 PNG), question, choices[]}
                                -> {log_likelihoods[]}
- POST /v1/generate             {prompt, seed, width, height}
                                -> {image (base64 PNG)}
- POST /v1/chat/completions     chat-completions format with tool declarations

PNG is the only wire image codec so transform contracts survive transport
bit-exactly. The mock server and the mock clients are deterministic functions
of (request, mounted fixtures), which is what makes hermetic end-to-end runs
byte-stable.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests
import yaml

from vqalab.datasources import (
    Codebook,
    DatasetManifest,
    decode_barcode,
    mock_generate,
    normalize_class_name,
    parse_generation_prompt,
)
from vqalab.errors import (
    ConfigurationError,
    MalformedResponseError,
    ProtocolError,
    TransportError,
)
from vqalab.images import ImageBuffer

RETRY_ATTEMPTS = 2  # retries after the first attempt
RETRY_BACKOFF = 0.05  # seconds, doubled per retry
BIAS_DEFAULT_LOGLIK = -10.0


# --- protocol payloads ------------------------------------------------------


@dataclass(frozen=True)
class ScoreRequest:
    image_png: bytes
    question: str
    choices: tuple[str, ...]

    def to_json_obj(self) -> dict:
        return {
            "image": base64.b64encode(self.image_png).decode("ascii"),
            "question": self.question,
            "choices": list(self.choices),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScoreRequest":
        try:
            image = base64.b64decode(obj["image"])
            question = obj["question"]
            choices = tuple(obj["choices"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed score request: {exc}") from None
        if not choices or not all(isinstance(c, str) for c in choices):
            raise ProtocolError("score request needs a non-empty list of string choices")
        return cls(image, question, choices)


@dataclass(frozen=True)
class ScoreResponse:
    log_likelihoods: tuple[float, ...]

    def validate_against(self, request: ScoreRequest) -> "ScoreResponse":
        if len(self.log_likelihoods) != len(request.choices):
            raise ProtocolError(
                f"endpoint returned {len(self.log_likelihoods)} scores "
                f"for {len(request.choices)} choices"
            )
        if not all(np.isfinite(v) for v in self.log_likelihoods):
            raise ProtocolError("endpoint returned non-finite log-likelihoods")
        return self


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    seed: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ProtocolError("generate request needs positive dimensions")
        if self.seed < 0:
            raise ProtocolError("generate request needs a non-negative seed")

    def to_json_obj(self) -> dict:
        return {
            "prompt": self.prompt,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GenerateRequest":
        try:
            return cls(obj["prompt"], int(obj["seed"]), int(obj["width"]), int(obj["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed generate request: {exc}") from None


@dataclass(frozen=True)
class GenerateResponse:
    image_png: bytes

    def validate_against(self, request: GenerateRequest) -> "GenerateResponse":
        try:
            img = ImageBuffer.from_png_bytes(self.image_png)
        except Exception:
            raise ProtocolError("generation endpoint returned undecodable image bytes") from None
        if (img.width, img.height) != (request.width, request.height):
            raise ProtocolError(
                f"generated image is {img.width}x{img.height}, "
                f"requested {request.width}x{request.height}"
            )
        return self


@dataclass(frozen=True)
class Message:
    role: str
    content: str


# --- mock model routes ------------------------------------------------------


def _normalize_text(text: str) -> str:
    return " ".join(text.strip().lower().split())


class OracleScoreClient:
    """Decodes the mock barcode and votes for the matching choice.

    A choice matches when its normalized text equals the decoded class name
    or contains it as a whole word. With no decode or no match the oracle
    abstains via the trailing "Unknown" slot.
    """

    def __init__(self, name: str, codebook: Codebook):
        self.name = name
        self.codebook = codebook

    def score(self, request: ScoreRequest) -> ScoreResponse:
        image = ImageBuffer.from_png_bytes(request.image_png)
        index = decode_barcode(image)
        class_name = self.codebook.name_of(index) if index is not None else None
        scores = []
        matched = False
        for choice in request.choices[:-1]:
            if class_name is not None and _choice_matches(choice, class_name):
                scores.append(-0.5)
                matched = True
            else:
                scores.append(-8.0)
        scores.append(-0.5 if not matched else -15.0)  # Unknown slot
        return ScoreResponse(tuple(scores)).validate_against(request)


def _choice_matches(choice: str, class_name: str) -> bool:
    choice_norm = _normalize_text(choice)
    if choice_norm == class_name:
        return True
    return re.search(rf"\b{re.escape(class_name)}\b", choice_norm) is not None


class SeededRandomScoreClient:
    """Uniform-random argmax, derived deterministically from the request bytes."""

    def __init__(self, name: str, seed: int = 0):
        self.name = name
        self.seed = int(seed)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        digest = hashlib.sha256()
        digest.update(self.seed.to_bytes(8, "big", signed=False))
        digest.update(request.image_png)
        digest.update(request.question.encode("utf-8"))
        for choice in request.choices:
            digest.update(b"\x00" + choice.encode("utf-8"))
        rng = np.random.default_rng(int.from_bytes(digest.digest()[:8], "big"))
        scores = tuple(float(v) for v in -rng.uniform(0.0, 10.0, size=len(request.choices)))
        return ScoreResponse(scores).validate_against(request)


@dataclass(frozen=True)
class BiasTable:
    """Log-likelihood table for the accuracy-targeting biased model route.

    Plain entries key on (question, choice). Truth-conditioned entries key on
    (question, true class, choice), where the true class is decoded from the
    mock barcode; they take precedence when present. Unmatched pairs fall back
    to a constant low likelihood.
    """

    plain: dict = field(default_factory=dict)
    conditioned: dict = field(default_factory=dict)
    default: float = BIAS_DEFAULT_LOGLIK

    @classmethod
    def from_json_obj(cls, obj: dict) -> "BiasTable":
        plain = {}
        conditioned = {}
        for entry in obj.get("entries", []):
            question = _normalize_text(entry["question"])
            choice = entry["choice"]
            value = float(entry["log_likelihood"])
            truth = entry.get("truth_class")
            if truth is None:
                plain[(question, choice)] = value
            else:
                conditioned[(question, normalize_class_name(truth), choice)] = value
        return cls(plain, conditioned, float(obj.get("default", BIAS_DEFAULT_LOGLIK)))

    @classmethod
    def load(cls, path) -> "BiasTable":
        return cls.from_json_obj(json.loads(Path(path).read_text()))


class BiasedScoreClient:
    """Replays a mounted (question, choice) -> log-likelihood table."""

    def __init__(self, name: str, table: BiasTable, codebook: Optional[Codebook] = None):
        self.name = name
        self.table = table
        self.codebook = codebook

    def score(self, request: ScoreRequest) -> ScoreResponse:
        question = _normalize_text(request.question)
        truth = None
        if self.table.conditioned and self.codebook is not None:
            index = decode_barcode(ImageBuffer.from_png_bytes(request.image_png))
            truth = self.codebook.name_of(index) if index is not None else None
        scores = []
        for choice in request.choices:
            value = None
            if truth is not None:
                value = self.table.conditioned.get((question, truth, choice))
            if value is None:
                value = self.table.plain.get((question, choice))
            scores.append(self.table.default if value is None else value)
        return ScoreResponse(tuple(scores)).validate_against(request)


class MockGenerationClient:
    """In-process deterministic generator backed by the mock codebook."""

    kind = "mock"

    def __init__(self, codebook: Codebook):
        self.codebook = codebook

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        image = self.generate_image(request.prompt, request.seed, request.width, request.height)
        return GenerateResponse(image.to_png_bytes()).validate_against(request)

    def generate_image(self, prompt: str, seed: int, width: int, height: int) -> ImageBuffer:
        class_name, image_type = parse_generation_prompt(prompt)
        image = mock_generate(self.codebook, class_name, image_type, seed)
        if (width, height) != (image.width, image.height):
            pil = image.to_pil().resize((width, height), resample=0)  # nearest
            image = ImageBuffer.from_pil(pil)
        return image


# --- HTTP clients -----------------------------------------------------------


def _post_with_retries(url: str, payload: dict, timeout: float) -> dict:
    last_error = None
    for attempt in range(1 + RETRY_ATTEMPTS):
        try:
            response = requests.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = f"{type(exc).__name__}: {exc}"
        else:
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
            elif response.status_code >= 400:
                raise ProtocolError(f"{url}: HTTP {response.status_code}: {response.text[:200]}")
            else:
                try:
                    return response.json()
                except ValueError:
                    raise ProtocolError(f"{url}: response is not JSON") from None
        if attempt < RETRY_ATTEMPTS:
            time.sleep(RETRY_BACKOFF * (2**attempt))
    raise TransportError(f"{url}: {last_error} after {1 + RETRY_ATTEMPTS} attempts")


class HTTPScoreClient:
    def __init__(self, name: str, url: str, timeout: float = 30.0):
        self.name = name
        self.url = url
        self.timeout = timeout

    def score(self, request: ScoreRequest) -> ScoreResponse:
        obj = _post_with_retries(self.url, request.to_json_obj(), self.timeout)
        values = obj.get("log_likelihoods")
        if not isinstance(values, list):
            raise ProtocolError(f"{self.url}: missing log_likelihoods")
        try:
            scores = tuple(float(v) for v in values)
        except (TypeError, ValueError):
            raise ProtocolError(f"{self.url}: log_likelihoods must be numbers") from None
        return ScoreResponse(scores).validate_against(request)


class HTTPGenerationClient:
    kind = "generation"

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        obj = _post_with_retries(self.url, request.to_json_obj(), self.timeout)
        image = obj.get("image")
        if not isinstance(image, str):
            raise ProtocolError(f"{self.url}: missing image")
        try:
            png = base64.b64decode(image)
        except ValueError:
            raise ProtocolError(f"{self.url}: image is not base64") from None
        return GenerateResponse(png).validate_against(request)

    def generate_image(self, prompt: str, seed: int, width: int, height: int) -> ImageBuffer:
        response = self.generate(GenerateRequest(prompt, seed, width, height))
        return ImageBuffer.from_png_bytes(response.image_png)


# --- chat backends ----------------------------------------------------------


@dataclass(frozen=True)
class ChatBackendConfig:
    base_url: str
    model: str
    api_key_env: str = "CHAT_API_KEY"
    timeout: float = 120.0


class RemoteChatBackend:
    """Chat-completions client with forced tool calls and temperature 0."""

    def __init__(self, config: ChatBackendConfig):
        self.config = config

    def complete(self, messages: Sequence[Message], schema) -> dict:
        import os

        headers = {}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": 0,
            "tools": [
                {
                    "type": "function",
                    "function": {
                        "name": schema.name,
                        "description": f"Submit the {schema.name} decision.",
                        "parameters": schema.argument_schema,
                    },
                }
            ],
            "tool_choice": {"type": "function", "function": {"name": schema.name}},
        }
        url = self.config.base_url.rstrip("/") + "/v1/chat/completions"
        last_error = None
        for attempt in range(1 + RETRY_ATTEMPTS):
            try:
                response = requests.post(
                    url, json=payload, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 400:
                    raise TransportError(f"{url}: HTTP {response.status_code}: {response.text[:200]}")
                else:
                    return _extract_tool_call(response.json(), schema.name)
            if attempt < RETRY_ATTEMPTS:
                time.sleep(RETRY_BACKOFF * (2**attempt))
        raise TransportError(f"{url}: {last_error} after {1 + RETRY_ATTEMPTS} attempts")


def _extract_tool_call(obj: dict, expected_name: str) -> dict:
    """Exactly one well-formed tool call is accepted; anything else heals."""
    try:
        calls = obj["choices"][0]["message"]["tool_calls"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponseError(
            "response did not contain a tool call; respond by calling the declared function"
        ) from None
    if not isinstance(calls, list) or len(calls) != 1:
        count = len(calls) if isinstance(calls, list) else 0
        raise MalformedResponseError(
            f"expected exactly one tool call, got {count}; call the declared function once"
        )
    function = calls[0].get("function", {})
    if function.get("name") != expected_name:
        raise MalformedResponseError(
            f"tool call named {function.get('name')!r}, expected {expected_name!r}"
        )
    try:
        payload = json.loads(function.get("arguments", ""))
    except (TypeError, ValueError):
        raise MalformedResponseError(
            "tool call arguments were not valid JSON; emit a JSON object"
        ) from None
    if not isinstance(payload, dict):
        raise MalformedResponseError("tool call arguments must be a JSON object")
    return payload


@dataclass
class ScriptStep:
    expect_schema: str
    payload: dict


class ScriptedBackend:
    """Ordered script of {expect_schema, payload} entries, one per call.

    A schema mismatch means the test fixture and the session disagree on the
    decision order, so it raises immediately instead of healing. Calls are
    recorded for order and heal-transparency assertions.
    """

    def __init__(self, steps: Sequence[ScriptStep]):
        self._steps = list(steps)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[tuple[tuple[Message, ...], str]] = []

    @classmethod
    def from_obj(cls, obj) -> "ScriptedBackend":
        if not isinstance(obj, list):
            raise ConfigurationError("script must be a list of {expect_schema, payload} entries")
        steps = []
        for i, entry in enumerate(obj):
            if not isinstance(entry, dict) or "expect_schema" not in entry or "payload" not in entry:
                raise ConfigurationError(f"script entry {i} needs expect_schema and payload")
            steps.append(ScriptStep(entry["expect_schema"], entry["payload"]))
        return cls(steps)

    @classmethod
    def load(cls, path) -> "ScriptedBackend":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"script file {path} does not exist")
        text = path.read_text()
        obj = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
        return cls.from_obj(obj)

    @property
    def consumed(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._steps) - self._cursor

    def complete(self, messages: Sequence[Message], schema) -> dict:
        with self._lock:
            self.calls.append((tuple(messages), schema.name))
            if self._cursor >= len(self._steps):
                raise AssertionError(
                    f"scripted backend exhausted after {len(self._steps)} steps; "
                    f"unexpected call for schema {schema.name}"
                )
            step = self._steps[self._cursor]
            self._cursor += 1
        if step.expect_schema != schema.name:
            raise AssertionError(
                f"script step {self._cursor - 1} expects schema {step.expect_schema}, "
                f"session asked for {schema.name}"
            )
        return json.loads(json.dumps(step.payload))  # defensive deep copy


# --- mock HTTP server -------------------------------------------------------


class MockServerHandle:
    """Running local server; stop() or use as a context manager."""

    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread):
        self._server = server
        self._thread = thread

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockServerHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_mocks(
    manifest: DatasetManifest,
    port: int = 0,
    *,
    script: Optional[ScriptedBackend] = None,
    bias_table: Optional[BiasTable] = None,
    random_seed: int = 0,
) -> MockServerHandle:
    """Start the deterministic mock services on a local port (0 = ephemeral).

    Routes: /v1/score/{oracle,random,biased}, /v1/generate, and
    /v1/chat/completions when a script is mounted. Binding a busy port raises
    OSError.
    """
    codebook = Codebook.from_manifest(manifest)
    generator = MockGenerationClient(codebook)
    score_routes = {
        "oracle": OracleScoreClient("oracle", codebook),
        "random": SeededRandomScoreClient("random", random_seed),
    }
    if bias_table is not None:
        score_routes["biased"] = BiasedScoreClient("biased", bias_table, codebook)

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output clean
            pass

        def _reply(self, status: int, obj: dict) -> None:
            body = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", "0"))
                obj = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, TypeError):
                self._reply(400, {"error": "invalid JSON body"})
                return
            try:
                self._route(self.path, obj)
            except ProtocolError as exc:
                self._reply(400, {"error": str(exc)})
            except Exception as exc:  # surfaced to the client as a 500
                self._reply(500, {"error": f"{type(exc).__name__}: {exc}"})

        def _route(self, path: str, obj: dict) -> None:
            if path.startswith("/v1/score/"):
                route = path[len("/v1/score/") :]
                client = score_routes.get(route)
                if client is None:
                    self._reply(404, {"error": f"unknown score route {route!r}"})
                    return
                request = ScoreRequest.from_json_obj(obj)
                response = client.score(request)
                self._reply(200, {"log_likelihoods": list(response.log_likelihoods)})
            elif path == "/v1/generate":
                request = GenerateRequest.from_json_obj(obj)
                response = generator.generate(request)
                self._reply(
                    200, {"image": base64.b64encode(response.image_png).decode("ascii")}
                )
            elif path == "/v1/chat/completions":
                if script is None:
                    self._reply(503, {"error": "no script mounted"})
                    return
                self._reply(200, _scripted_chat_response(script, obj))
            else:
                self._reply(404, {"error": f"unknown path {path}"})

    server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return MockServerHandle(server, thread)


def _scripted_chat_response(script: ScriptedBackend, obj: dict) -> dict:
    tool_choice = obj.get("tool_choice", {})
    name = tool_choice.get("function", {}).get("name", "")
    messages = tuple(
        Message(m.get("role", ""), m.get("content", "")) for m in obj.get("messages", [])
    )
    payload = script.complete(messages, _SchemaName(name))
    return {
        "choices": [
            {
                "message": {
                    "tool_calls": [
                        {
                            "type": "function",
                            "function": {"name": name, "arguments": json.dumps(payload)},
                        }
                    ]
                }
            }
        ]
    }


@dataclass(frozen=True)
class _SchemaName:
    name: str

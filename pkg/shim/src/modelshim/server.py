"""FastAPI app implementing the /v1/score and /v1/generate wire contracts."""

from __future__ import annotations

import base64
import binascii
import math
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from modelshim.generation import ImageGenerator
from modelshim.scoring import AnswerScorer


@dataclass
class HostedModel:
    """One scoring route: name, underlying checkpoint, quantization, scorer.

    Requests are serialized per hosted model (single-accelerator assumption);
    different models may score concurrently.
    """

    name: str
    scorer: AnswerScorer
    checkpoint: str = ""
    quantization: str = "none"
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class ScoreBody(BaseModel):
    image: str
    question: str
    choices: list[str] = Field(min_length=1)


class GenerateBody(BaseModel):
    prompt: str
    seed: int = Field(ge=0)
    width: int = Field(gt=0)
    height: int = Field(gt=0)


def create_app(models: dict[str, HostedModel], generator: ImageGenerator) -> FastAPI:
    app = FastAPI(title="modelshim")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": sorted(models)}

    @app.post("/v1/score/{model_name}")
    def score(model_name: str, body: ScoreBody):
        hosted = models.get(model_name)
        if hosted is None:
            raise HTTPException(404, f"unknown model {model_name!r}")
        try:
            image_png = base64.b64decode(body.image, validate=True)
        except (binascii.Error, ValueError):
            raise HTTPException(400, "image is not valid base64") from None
        try:
            with hosted.lock:
                values = hosted.scorer.score(image_png, body.question, list(body.choices))
        except MemoryError:
            raise HTTPException(503, "model out of memory") from None
        if len(values) != len(body.choices) or not all(math.isfinite(v) for v in values):
            raise HTTPException(500, "scorer violated the response contract")
        return {"log_likelihoods": [float(v) for v in values]}

    @app.post("/v1/generate")
    def generate(body: GenerateBody):
        try:
            png = generator.generate(body.prompt, body.seed, body.width, body.height)
        except MemoryError:
            raise HTTPException(503, "generator out of memory") from None
        return {"image": base64.b64encode(png).decode("ascii")}

    return app


def serve(models: dict[str, HostedModel], generator: ImageGenerator,
          port: int = 8600, host: str = "127.0.0.1") -> None:
    """Run the server until interrupted; checkpoint load errors surface before bind."""
    import uvicorn

    uvicorn.run(create_app(models, generator), host=host, port=port, log_level="warning")

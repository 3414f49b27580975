"""Seeded text-to-image backends behind the /v1/generate contract."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from PIL import Image


class ImageGenerator(Protocol):
    def generate(self, prompt: str, seed: int, width: int, height: int) -> bytes:
        """Return PNG bytes at exactly the requested size."""


@dataclass
class ProceduralGenerator:
    """Deterministic fallback generator: seeded smooth color fields.

    Stands in for the diffusion checkpoint where no accelerator or weights are
    available; same request, same bytes.
    """

    base_seed: int = 0

    def generate(self, prompt: str, seed: int, width: int, height: int) -> bytes:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        rng = np.random.default_rng(
            [self.base_seed, int.from_bytes(digest[:8], "big"), abs(int(seed))]
        )
        ys = np.linspace(0.0, 1.0, height)[:, None]
        xs = np.linspace(0.0, 1.0, width)[None, :]
        channels = []
        for _ in range(3):
            fx, fy = rng.uniform(1.0, 6.0, size=2)
            px, py = rng.uniform(0.0, 2 * np.pi, size=2)
            field = 0.5 + 0.45 * np.sin(2 * np.pi * fx * xs + px) * np.cos(
                2 * np.pi * fy * ys + py
            )
            channels.append(field)
        pixels = np.clip(np.stack(channels, axis=-1) * 255.0, 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()


class DiffusersGenerator:
    """Diffusion-checkpoint generator (optional extra).

    The request seed drives the torch generator, so identical requests
    reproduce identical images on a fixed device and dtype.
    """

    def __init__(self, checkpoint: str, device: str | None = None):
        try:
            import torch
            from diffusers import AutoPipelineForText2Image
        except ImportError as exc:
            raise RuntimeError(f"diffusers/torch unavailable: {exc}") from exc
        self._torch = torch
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.pipeline = AutoPipelineForText2Image.from_pretrained(checkpoint)
        self.pipeline.to(self.device)

    def generate(self, prompt: str, seed: int, width: int, height: int) -> bytes:
        torch = self._torch
        generator = torch.Generator(device=self.device).manual_seed(int(seed))
        image = self.pipeline(
            prompt=prompt,
            width=width,
            height=height,
            num_inference_steps=1,
            guidance_scale=0.0,
            generator=generator,
        ).images[0]
        if image.size != (width, height):
            image = image.resize((width, height))
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


def build_generator(backend: str, checkpoint: str = "", seed: int = 0) -> ImageGenerator:
    if backend == "procedural":
        return ProceduralGenerator(base_seed=seed)
    if backend == "diffusers":
        return DiffusersGenerator(checkpoint)
    raise RuntimeError(f"unknown generator backend {backend!r}")

"""Answer-ranking scorers.

A scorer computes, per candidate answer, the hosted model's log-likelihood of
generating that answer text given the image and the question. The reported
value is the sum of answer-token log-probabilities by default (not the mean),
so scores are comparable across shims; pass length_normalize="mean" to switch,
which changes absolute accuracies for answers of different token counts.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Protocol

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class AnswerScorer(Protocol):
    def score(self, image_png: bytes, question: str, choices: list[str]) -> list[float]:
        ...


@dataclass
class TinyAnswerRanker:
    """Deterministic toy autoregressive scorer for tests and dry runs.

    Implements the same contract as the checkpoint-backed ranker: each answer
    token gets a log-probability conditioned on the image digest, the
    question, and the answer prefix; per-answer scores are the sum (or mean)
    of those token log-probabilities. Inference is a keyed hash, so repeated
    calls are bit-identical and need no accelerator.
    """

    seed: int = 0
    length_normalize: str = "sum"  # "sum" | "mean"

    def _token_logprob(self, context: bytes, token: str) -> float:
        digest = hashlib.sha256()
        digest.update(self.seed.to_bytes(8, "big", signed=False))
        digest.update(context)
        digest.update(token.encode("utf-8"))
        unit = int.from_bytes(digest.digest()[:8], "big") / 2**64
        return math.log(0.01 + 0.98 * unit)

    def score(self, image_png: bytes, question: str, choices: list[str]) -> list[float]:
        image_digest = hashlib.sha256(image_png).digest()
        question_tokens = tokenize(question)
        scores = []
        for choice in choices:
            tokens = tokenize(choice) or [""]
            prefix = list(question_tokens)
            total = 0.0
            for token in tokens:
                context = image_digest + "\x1f".join(prefix).encode("utf-8")
                total += self._token_logprob(context, token)
                prefix.append(token)
            if self.length_normalize == "mean":
                total /= len(tokens)
            scores.append(total)
        return scores


class CheckpointLoadError(RuntimeError):
    """Raised at startup when a requested checkpoint cannot be loaded."""


class HFAnswerRanker:
    """Checkpoint-backed ranker for vision-language models on HuggingFace.

    Loads the processor and model once at startup; scoring teacher-forces the
    answer tokens after the question (and image features) and sums their
    log-probabilities. Deterministic: pure likelihood evaluation in
    inference mode, no sampling.
    """

    def __init__(self, checkpoint: str, quantization: str = "none",
                 length_normalize: str = "sum", device: str | None = None):
        try:
            import torch
            from transformers import AutoModelForVision2Seq, AutoProcessor
        except ImportError as exc:
            raise CheckpointLoadError(f"transformers/torch unavailable: {exc}") from exc
        self.length_normalize = length_normalize
        self._torch = torch
        kwargs = {}
        if quantization == "8bit":
            kwargs["load_in_8bit"] = True
        try:
            self.processor = AutoProcessor.from_pretrained(checkpoint)
            self.model = AutoModelForVision2Seq.from_pretrained(checkpoint, **kwargs)
        except Exception as exc:
            raise CheckpointLoadError(f"cannot load {checkpoint}: {exc}") from exc
        self.model.eval()
        if device and quantization != "8bit":
            self.model.to(device)
        self.device = next(self.model.parameters()).device

    def score(self, image_png: bytes, question: str, choices: list[str]) -> list[float]:
        import io

        from PIL import Image

        torch = self._torch
        image = Image.open(io.BytesIO(image_png)).convert("RGB")
        scores = []
        with torch.inference_mode():
            for choice in choices:
                prompt = f"Question: {question} Answer:"
                inputs = self.processor(
                    images=image, text=f"{prompt} {choice}", return_tensors="pt"
                ).to(self.device)
                prefix = self.processor(images=image, text=prompt, return_tensors="pt")
                prefix_len = prefix["input_ids"].shape[1]
                outputs = self.model(**inputs)
                logits = outputs.logits[0]
                input_ids = inputs["input_ids"][0]
                logprobs = torch.log_softmax(logits[:-1].float(), dim=-1)
                answer_positions = range(prefix_len - 1, input_ids.shape[0] - 1)
                token_logprobs = [
                    float(logprobs[pos, input_ids[pos + 1]]) for pos in answer_positions
                ]
                if not token_logprobs:
                    token_logprobs = [float(logprobs[-1, input_ids[-1]])]
                total = sum(token_logprobs)
                if self.length_normalize == "mean":
                    total /= len(token_logprobs)
                scores.append(total)
        return scores


def build_scorer(backend: str, checkpoint: str = "", quantization: str = "none",
                 length_normalize: str = "sum", seed: int = 0) -> AnswerScorer:
    if backend == "tiny":
        return TinyAnswerRanker(seed=seed, length_normalize=length_normalize)
    if backend == "hf":
        return HFAnswerRanker(checkpoint, quantization, length_normalize)
    raise CheckpointLoadError(f"unknown scorer backend {backend!r}")

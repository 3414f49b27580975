"""Answer-ranking evaluation of model clients over a labeled dataset.

Each item is scored once per model with the ground-truth choices plus the
always-appended "Unknown" option; the prediction is the argmax of the
returned log-likelihoods. Abstentions count as incorrect for accuracy and
are reported separately as the abstention rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from vqalab.datasources import LabeledDataset
from vqalab.errors import EvaluationError, ProtocolError, TransportError, VqalabError
from vqalab.report import ModelResult, ResultSet, UNKNOWN_CHOICE
from vqalab.wire import ScoreRequest


@runtime_checkable
class ModelClient(Protocol):
    """A scoring endpoint for one model."""

    name: str

    def score(self, request: ScoreRequest):
        ...


@dataclass(frozen=True)
class Prediction:
    item_index: int
    selected: int
    abstained: bool


def rank_answer(scores: Sequence[float]) -> tuple[int, bool]:
    """Argmax selection; ties break toward the lowest index.

    The tie rule means real answers beat the trailing "Unknown" slot on exact
    ties. Returns (selected index, abstained flag).
    """
    if not scores:
        raise ProtocolError("empty score vector")
    best = 0
    for i, value in enumerate(scores):
        if not math.isfinite(value):
            raise ProtocolError(f"non-finite log-likelihood at choice {i}")
        if value > scores[best]:
            best = i
    return best, best == len(scores) - 1


def compute_metrics(predictions: Sequence[Prediction], dataset: LabeledDataset) -> ModelResult:
    """Aggregate predictions into accuracy, class-wise accuracy, abstention rate."""
    if len(predictions) != len(dataset.items):
        raise VqalabError(
            f"prediction count {len(predictions)} != item count {len(dataset.items)}"
        )
    correct = 0
    abstained = 0
    per_class_total = {c: 0 for c in dataset.choices}
    per_class_correct = {c: 0 for c in dataset.choices}
    for pred, item in zip(predictions, dataset.items):
        truth_text = dataset.choices[item.truth_index]
        per_class_total[truth_text] += 1
        if pred.abstained:
            abstained += 1
        elif pred.selected == item.truth_index:
            correct += 1
            per_class_correct[truth_text] += 1
    n = len(dataset.items)
    class_wise = {
        c: (per_class_correct[c] / per_class_total[c]) if per_class_total[c] else 0.0
        for c in dataset.choices
    }
    return ModelResult(
        accuracy=correct / n,
        class_wise=class_wise,
        abstention_rate=abstained / n,
    )


def evaluate(
    models: Sequence[ModelClient], dataset: LabeledDataset, concurrency: int = 1
) -> ResultSet:
    """Score every model on every item and aggregate metrics.

    A model whose endpoint fails on any item loses its entry; the other
    models still complete, and an EvaluationError carrying the partial
    results is raised at the end.
    """
    if not dataset.items:
        raise VqalabError("dataset is empty")
    presented = list(dataset.choices) + [UNKNOWN_CHOICE]
    requests = [
        ScoreRequest(
            image_png=item.sample.image.to_png_bytes(),
            question=dataset.question,
            choices=tuple(presented),
        )
        for item in dataset.items
    ]

    results: ResultSet = {}
    failures: dict[str, str] = {}
    for model in models:
        try:
            predictions = _score_all(model, requests, concurrency)
        except (TransportError, ProtocolError) as exc:
            failures[model.name] = str(exc)
            continue
        results[model.name] = compute_metrics(predictions, dataset)
    if failures:
        detail = "; ".join(f"{name}: {msg}" for name, msg in sorted(failures.items()))
        raise EvaluationError(f"evaluation failed for {detail}", results, failures)
    return results


def _score_all(model: ModelClient, requests, concurrency: int) -> list[Prediction]:
    def score_one(pair):
        index, request = pair
        try:
            response = model.score(request)
        except (TransportError, ProtocolError) as exc:
            raise type(exc)(f"model {model.name!r}, item {index}: {exc}") from exc
        selected, abstained = rank_answer(response.log_likelihoods)
        return Prediction(index, selected, abstained)

    indexed = list(enumerate(requests))
    if concurrency <= 1:
        return [score_one(pair) for pair in indexed]
    predictions: list[Prediction | None] = [None] * len(requests)
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for prediction in pool.map(score_one, indexed):
            predictions[prediction.item_index] = prediction
    return predictions  # type: ignore[return-value]

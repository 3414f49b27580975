"""Cross-experiment aggregation: min-max normalization, group means, ranking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from vqalab.errors import ConfigurationError
from vqalab.report import Report


@dataclass(frozen=True)
class MetricSeries:
    """One metric value per (model, label) pair."""

    models: tuple[str, ...]
    labels: tuple[str, ...]
    values: dict  # (model, label) -> float

    def __post_init__(self):
        for model in self.models:
            for label in self.labels:
                key = (model, label)
                if key not in self.values:
                    raise ConfigurationError(f"missing metric value for {key}")
                if not math.isfinite(self.values[key]):
                    raise ConfigurationError(f"non-finite metric value for {key}")

    def value(self, model: str, label: str) -> float:
        return self.values[(model, label)]


def min_max_normalize(values: Sequence[float]) -> list[float]:
    """Rescale to [0, 1]; a zero-spread series maps to all 0.5."""
    if len(values) == 0:
        raise ConfigurationError("cannot normalize an empty series")
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def normalize_series(series: MetricSeries) -> dict:
    """Per-model min-max normalization across labels (one scale per model)."""
    normalized = {}
    for model in series.models:
        row = [series.value(model, label) for label in series.labels]
        for label, value in zip(series.labels, min_max_normalize(row)):
            normalized[(model, label)] = value
    return normalized


def rank_groups(
    series: MetricSeries, grouping: Mapping[str, Sequence[str]]
) -> list[tuple[str, float]]:
    """Groups ordered from easiest to hardest by mean metric.

    The group mean is the unweighted mean over member labels, then over
    models. Ties break lexicographically by group name. No label may appear
    in two groups.
    """
    label_set = set(series.labels)
    seen: dict[str, str] = {}
    for group, members in grouping.items():
        if not members:
            raise ConfigurationError(f"group {group!r} has no members")
        for label in members:
            if label not in label_set:
                raise ConfigurationError(f"group {group!r} references unknown label {label!r}")
            if label in seen:
                raise ConfigurationError(
                    f"label {label!r} appears in groups {seen[label]!r} and {group!r}"
                )
            seen[label] = group
    means = []
    for group, members in grouping.items():
        per_model = [
            sum(series.value(model, label) for label in members) / len(members)
            for model in series.models
        ]
        means.append((group, sum(per_model) / len(per_model)))
    return sorted(means, key=lambda pair: (-pair[1], pair[0]))


def series_from_report(report: Report) -> MetricSeries:
    """Accuracy series over report entries, labeled exp01, exp02, ..."""
    if not report.entries:
        raise ConfigurationError("report has no entries to summarize")
    models = tuple(report.models_to_evaluate)
    labels = tuple(f"exp{i + 1:02d}" for i in range(len(report.entries)))
    values = {}
    for label, entry in zip(labels, report.entries):
        for model in models:
            values[(model, label)] = entry.results[model].accuracy
    return MetricSeries(models, labels, values)


def write_metrics_csv(
    series: MetricSeries,
    path,
    grouping: Mapping[str, Sequence[str]] | None = None,
) -> None:
    """Tabular summary: model, label, metric, normalized, group."""
    label_group = {}
    if grouping:
        for group, members in grouping.items():
            for label in members:
                label_group[label] = group
    normalized = normalize_series(series)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["model", "label", "metric", "normalized", "group"])
        for model in series.models:
            for label in series.labels:
                writer.writerow(
                    [
                        model,
                        label,
                        f"{series.value(model, label):.6f}",
                        f"{normalized[(model, label)]:.6f}",
                        label_group.get(label, ""),
                    ]
                )

#!/usr/bin/env python3
"""Reproduce the data-type-group ranking with accuracy-targeting mock models.

Builds one recognition experiment per group over a synthetic class world,
evaluates a biased mock model whose table is constructed to hit the reported
group-mean accuracies exactly (Style 0.74, Semantic 0.60, Pixel 0.59,
Geometric 0.56), and ranks the groups. Writes a CSV summary next to --out.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from vqalab.analysis import MetricSeries, rank_groups, write_metrics_csv  # noqa: E402
from vqalab.datasources import (  # noqa: E402
    Codebook,
    DataContext,
    DatasetManifest,
    ManifestClass,
    build_dataset,
)
from vqalab.evaluation import evaluate  # noqa: E402
from vqalab.report import Answer, Experiment  # noqa: E402
from vqalab.toolbox import ToolCall  # noqa: E402
from vqalab.wire import BiasTable, BiasedScoreClient, MockGenerationClient  # noqa: E402

GROUP_TARGETS = {
    "Style": (50, 37),
    "Semantic": (50, 30),
    "Pixel": (100, 59),
    "Geometric": (50, 28),
}


def group_experiment(group: str, seed: int) -> Experiment:
    n_choices, _ = GROUP_TARGETS[group]
    answers = tuple(
        Answer(
            f"class{i:03d}",
            ToolCall(
                "src.tools.select",
                "TextToImageGeneration",
                {"class_name": f"class{i:03d}", "image_type": "photo"},
            ),
            (ToolCall("src.tools.transform", "Identity", {}),),
        )
        for i in range(n_choices)
    )
    return Experiment(
        f"Which {group.lower()} data type is shown in the image?", answers, 1, seed
    )


def bias_entries(group: str) -> list[dict]:
    n_choices, n_correct = GROUP_TARGETS[group]
    question = f"Which {group.lower()} data type is shown in the image?"
    return [
        {
            "question": question,
            "truth_class": f"class{i:03d}",
            "choice": f"class{(i if i < n_correct else (i + 1) % n_choices):03d}",
            "log_likelihood": -0.1,
        }
        for i in range(n_choices)
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/group_ranking.csv")
    parser.add_argument("--seed", type=int, default=100)
    args = parser.parse_args()

    names = tuple(f"class{i:03d}" for i in range(128))
    manifest = DatasetManifest(
        tuple(ManifestClass(n, (), ()) for n in names), root=Path(".")
    )
    codebook = Codebook.from_manifest(manifest)
    ctx = DataContext(manifest, MockGenerationClient(codebook))
    table = BiasTable.from_json_obj(
        {"entries": [e for g in GROUP_TARGETS for e in bias_entries(g)]}
    )
    client = BiasedScoreClient("biased", table, codebook)

    measured = {}
    for i, group in enumerate(GROUP_TARGETS):
        dataset = build_dataset(group_experiment(group, args.seed + i), ctx)
        measured[group] = evaluate([client], dataset)["biased"].accuracy

    labels = tuple(GROUP_TARGETS)
    series = MetricSeries(("biased",), labels, {("biased", g): measured[g] for g in labels})
    ranking = rank_groups(series, {g: [g] for g in labels})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(series, out, {g: [g] for g in labels})

    print(f"{'rank':<6}{'group':<12}mean accuracy")
    for rank, (group, mean) in enumerate(ranking, start=1):
        print(f"{rank:<6}{group:<12}{mean:.2f}")
    print(f"\nsummary written to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

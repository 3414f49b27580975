"""Shim entry point: load hosted models from a config file and serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from modelshim.generation import build_generator
from modelshim.scoring import CheckpointLoadError, build_scorer
from modelshim.server import HostedModel, serve

DEFAULT_CONFIG = {
    "models": [
        {"name": "tiny-deterministic", "backend": "tiny", "seed": 0}
    ],
    "generator": {"backend": "procedural", "seed": 0},
}


def load_hosted(config: dict, length_normalize: str):
    models = {}
    for entry in config.get("models", []):
        scorer = build_scorer(
            entry.get("backend", "tiny"),
            checkpoint=entry.get("checkpoint", ""),
            quantization=entry.get("quantization", "none"),
            length_normalize=length_normalize,
            seed=int(entry.get("seed", 0)),
        )
        name = entry["name"]
        models[name] = HostedModel(
            name=name,
            scorer=scorer,
            checkpoint=entry.get("checkpoint", ""),
            quantization=entry.get("quantization", "none"),
        )
    if not models:
        raise CheckpointLoadError("no models configured")
    gen_cfg = config.get("generator", DEFAULT_CONFIG["generator"])
    generator = build_generator(
        gen_cfg.get("backend", "procedural"),
        checkpoint=gen_cfg.get("checkpoint", ""),
        seed=int(gen_cfg.get("seed", 0)),
    )
    return models, generator


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modelshim", description="Serve scoring and generation endpoints."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("serve")
    run.add_argument("--config", type=Path, default=None, help="JSON config file")
    run.add_argument("--port", type=int, default=8600)
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument(
        "--length-normalize",
        choices=["sum", "mean"],
        default="sum",
        help="per-answer log-likelihood: sum of token logprobs (default) or mean",
    )
    args = parser.parse_args(argv)

    config = DEFAULT_CONFIG
    if args.config is not None:
        config = json.loads(args.config.read_text())
    try:
        models, generator = load_hosted(config, args.length_normalize)
    except CheckpointLoadError as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1
    print(f"serving {sorted(models)} on {args.host}:{args.port}")
    serve(models, generator, port=args.port, host=args.host)
    return 0


if __name__ == "__main__":
    sys.exit(main())

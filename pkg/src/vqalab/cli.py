"""Command-line entry points: run sessions, inspect tools, render prompts, serve mocks.

Exit codes: 0 completed, 1 configuration error, 2 aborted session (a partial
report plus a machine-readable error record are written to the output
directory). Secrets are read only from named environment variables.
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from vqalab.analysis import series_from_report, write_metrics_csv
from vqalab.datasources import Codebook, DataContext, load_manifest
from vqalab.errors import (
    ConfigurationError,
    SessionAbortError,
    ToolValidationError,
    VqalabError,
)
from vqalab.images import load_image
from vqalab.orchestration import SessionBackends, SessionConfig, run_session
from vqalab.prompts import render_system_prompt
from vqalab.report import DEFAULT_MODEL_LIBRARY, ModelDescriptor, serialize
from vqalab.toolbox import TransformContext, apply_transform, default_registry, parse_tool_call
from vqalab.wire import (
    BiasTable,
    BiasedScoreClient,
    ChatBackendConfig,
    HTTPGenerationClient,
    HTTPScoreClient,
    MockGenerationClient,
    OracleScoreClient,
    RemoteChatBackend,
    ScriptedBackend,
    SeededRandomScoreClient,
    serve_mocks,
)

import numpy as np


@dataclass
class FileConfig:
    """Parsed config file: session settings, model library, endpoints."""

    session: SessionConfig
    manifest_path: Path | None
    generation_endpoint: str
    chat: ChatBackendConfig | None
    base_dir: Path


def load_config(path: Path | None, overrides: dict) -> FileConfig:
    raw = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file {path} does not exist")
        base_dir = path.parent
        if path.suffix == ".toml":
            try:
                import tomllib
            except ImportError:  # Python < 3.11
                import tomli as tomllib
            raw = tomllib.loads(path.read_text())
        else:
            raw = json.loads(path.read_text())

    session_raw = dict(raw.get("session", {}))
    for key in ("rng_seed", "samples_per_choice"):
        if overrides.get(key) is not None:
            session_raw[key] = overrides[key]
    models_raw = raw.get("models")
    if models_raw:
        library = tuple(
            ModelDescriptor(m["name"], m.get("description", m["name"]), m["endpoint"])
            for m in models_raw
        )
    else:
        library = DEFAULT_MODEL_LIBRARY
    try:
        session = SessionConfig(model_library=library, **session_raw)
    except TypeError as exc:
        raise ConfigurationError(f"bad [session] settings: {exc}") from None

    manifest_path = raw.get("manifest")
    chat_raw = raw.get("chat")
    chat = None
    if chat_raw:
        chat = ChatBackendConfig(
            base_url=chat_raw["base_url"],
            model=chat_raw.get("model", "gpt-3.5-turbo"),
            api_key_env=chat_raw.get("api_key_env", "CHAT_API_KEY"),
            timeout=float(chat_raw.get("timeout", 120.0)),
        )
    return FileConfig(
        session=session,
        manifest_path=(base_dir / manifest_path) if manifest_path else None,
        generation_endpoint=raw.get("generation", {}).get("endpoint", "mock://generator"),
        chat=chat,
        base_dir=base_dir,
    )


def _build_model_client(descriptor: ModelDescriptor, codebook: Codebook, base_dir: Path):
    parsed = urlparse(descriptor.endpoint)
    if parsed.scheme in ("http", "https"):
        return HTTPScoreClient(descriptor.name, descriptor.endpoint)
    if parsed.scheme != "mock":
        raise ConfigurationError(
            f"model {descriptor.name!r}: unsupported endpoint scheme {parsed.scheme!r}"
        )
    kind = parsed.netloc or parsed.path.lstrip("/")
    query = parse_qs(parsed.query)
    if kind == "oracle":
        return OracleScoreClient(descriptor.name, codebook)
    if kind == "random":
        seed = int(query.get("seed", ["0"])[0])
        return SeededRandomScoreClient(descriptor.name, seed)
    if kind == "biased":
        table_path = query.get("table", [None])[0]
        if table_path is None:
            raise ConfigurationError(
                f"model {descriptor.name!r}: mock://biased needs ?table=<path>"
            )
        return BiasedScoreClient(
            descriptor.name, BiasTable.load(base_dir / table_path), codebook
        )
    raise ConfigurationError(f"model {descriptor.name!r}: unknown mock kind {kind!r}")


def _build_generation_client(endpoint: str, codebook: Codebook):
    parsed = urlparse(endpoint)
    if parsed.scheme in ("http", "https"):
        return HTTPGenerationClient(endpoint)
    if parsed.scheme == "mock":
        return MockGenerationClient(codebook)
    raise ConfigurationError(f"unsupported generation endpoint scheme {parsed.scheme!r}")


def _assert_mock(flag_name: str, endpoints: list[str]) -> None:
    for endpoint in endpoints:
        if urlparse(endpoint).scheme != "mock":
            raise ConfigurationError(
                f"{flag_name} requires mock:// endpoints, found {endpoint!r}"
            )


def cmd_run(args) -> int:
    config = load_config(
        args.config,
        {"rng_seed": args.seed, "samples_per_choice": args.samples_per_choice},
    )
    if args.mock_all or args.mock_models:
        _assert_mock(
            "--mock-models", [m.endpoint for m in config.session.model_library]
        )
    if args.mock_all or args.mock_generator:
        _assert_mock("--mock-generator", [config.generation_endpoint])
    if args.scripted:
        chat = ScriptedBackend.load(args.scripted)
    elif args.mock_all:
        raise ConfigurationError("--mock-all needs a scripted orchestrator (--scripted)")
    elif config.chat is not None:
        chat = RemoteChatBackend(config.chat)
    else:
        raise ConfigurationError("no chat backend: pass --scripted or configure [chat]")

    if config.manifest_path is None:
        raise ConfigurationError("config must point at a dataset manifest")
    manifest = load_manifest(config.manifest_path)
    codebook = Codebook.from_manifest(manifest)
    generation = _build_generation_client(config.generation_endpoint, codebook)
    data = DataContext(manifest, generation)
    clients = {
        m.name: _build_model_client(m, codebook, config.base_dir)
        for m in config.session.model_library
    }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    if report_path.exists() and not args.force:
        raise ConfigurationError(f"{report_path} exists; pass --force to overwrite")

    backends = SessionBackends(chat=chat, data=data, model_clients=clients)
    try:
        report = run_session(args.query, config.session, backends)
    except SessionAbortError as exc:
        record = {"error": str(exc), **exc.record}
        (out_dir / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        if exc.partial_report is not None:
            (out_dir / "report.partial.json").write_bytes(serialize(exc.partial_report))
        print(f"session aborted: {exc}", file=sys.stderr)
        return 2

    report_path.write_bytes(serialize(report))
    (out_dir / "conclusions.txt").write_text((report.conclusions or "") + "\n")
    write_metrics_csv(series_from_report(report), out_dir / "metrics.csv")
    print(f"report written to {report_path}")
    return 0


def cmd_tools(args) -> int:
    registry = default_registry()
    if args.docstring:
        if args.docstring not in registry:
            suggestions = difflib.get_close_matches(args.docstring, registry.names(), n=3)
            hint = f"; did you mean: {', '.join(suggestions)}" if suggestions else ""
            print(f"unknown tool {args.docstring}{hint}", file=sys.stderr)
            return 1
        print(registry.prompt_entry(args.docstring))
        return 0
    if args.apply:
        if not args.input or not args.output:
            raise ConfigurationError("--apply needs --in and --out image paths")
        call = parse_tool_call(args.apply, registry)
        image = load_image(args.input)
        codebook = None
        if args.manifest:
            codebook = Codebook.from_manifest(load_manifest(args.manifest))
        ctx = TransformContext(
            rng=np.random.default_rng(args.seed),
            generation_client=MockGenerationClient(codebook) if codebook else None,
            sample_label=args.label,
        )
        result = apply_transform(call, image, ctx)
        Path(args.output).write_bytes(result.to_png_bytes())
        print(f"wrote {args.output}")
        return 0
    for name in registry.names():
        print(f"{name}: {registry.get(name).summary}")
    return 0


def cmd_render_prompt(args) -> int:
    config = load_config(args.config, {})
    text = render_system_prompt(default_registry(), config.session.model_library)
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def cmd_serve_mocks(args) -> int:
    manifest = load_manifest(args.manifest)
    script = ScriptedBackend.load(args.script) if args.script else None
    bias_table = BiasTable.load(args.bias_table) if args.bias_table else None
    try:
        handle = serve_mocks(
            manifest,
            args.port,
            script=script,
            bias_table=bias_table,
            random_seed=args.random_seed,
        )
    except OSError as exc:
        print(f"cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"mock services listening on {handle.base_url} (Ctrl-C to stop)")
    try:
        import time

        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        handle.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqalab",
        description="Design, run, and report automatic VQA benchmarking sessions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmarking session for a query")
    run.add_argument("--query", required=True)
    run.add_argument("--config", type=Path, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--scripted", type=Path, default=None, help="scripted backend file")
    run.add_argument("--mock-all", action="store_true")
    run.add_argument("--mock-models", action="store_true")
    run.add_argument("--mock-generator", action="store_true")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--samples-per-choice", type=int, default=None)
    run.add_argument("--force", action="store_true")
    run.set_defaults(func=cmd_run)

    tools = sub.add_parser("tools", help="list tools, print docstrings, apply transforms")
    tools.add_argument("--docstring", default=None, metavar="NAME")
    tools.add_argument("--apply", default=None, metavar="CALL")
    tools.add_argument("--in", dest="input", default=None)
    tools.add_argument("--out", dest="output", default=None)
    tools.add_argument("--seed", type=int, default=0)
    tools.add_argument("--label", default=None)
    tools.add_argument("--manifest", type=Path, default=None)
    tools.set_defaults(func=cmd_tools)

    render = sub.add_parser("render-prompt", help="write the assembled system prompt")
    render.add_argument("--config", type=Path, default=None)
    render.add_argument("--out", required=True)
    render.set_defaults(func=cmd_render_prompt)

    serve = sub.add_parser("serve-mocks", help="serve the deterministic mock services")
    serve.add_argument("--manifest", type=Path, required=True)
    serve.add_argument("--port", type=int, default=8601)
    serve.add_argument("--script", type=Path, default=None)
    serve.add_argument("--bias-table", type=Path, default=None)
    serve.add_argument("--random-seed", type=int, default=0)
    serve.set_defaults(func=cmd_serve_mocks)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ToolValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VqalabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

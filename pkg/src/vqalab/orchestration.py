"""The decision points, the self-heal policy, and the session loop.

Conversation state is rebuilt from the report at each decision point rather
than kept as a long chat; every decision is one structured-output call,
validated locally, with validator messages fed back verbatim for self-heal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np

from vqalab.datasources import DataContext, build_dataset
from vqalab.errors import (
    ConfigurationError,
    EvaluationError,
    HealExhaustedError,
    MalformedResponseError,
    ToolValidationError,
    TransportError,
    VqalabError,
    SessionAbortError,
)
from vqalab.evaluation import ModelClient, evaluate
from vqalab.prompts import PromptSet, default_prompts, render_system_prompt
from vqalab.report import (
    DEFAULT_MODEL_LIBRARY,
    Answer,
    Experiment,
    Findings,
    MAX_ENTRIES,
    ModelDescriptor,
    Report,
    ReportEntry,
    ResultSet,
    append_entry,
    experiment_to_json_obj,
    new_report,
    results_to_json_obj,
    serialize,
    with_conclusions,
    with_sufficiency,
)
from vqalab.toolbox import ToolRegistry, default_registry, parse_tool_call
from vqalab.wire import Message

MAX_REGENERATIONS = 3  # fresh experiment contexts after heal exhaustion


@dataclass(frozen=True)
class DecisionSchema:
    """Structured-output contract for one decision point."""

    name: str
    argument_schema: dict


_TOOL_CALL_SCHEMA = {
    "type": "object",
    "properties": {
        "module_path": {"type": "string"},
        "name": {"type": "string"},
        "kwargs": {"type": "object"},
    },
    "required": ["module_path", "name", "kwargs"],
}

INIT_REPORT = DecisionSchema(
    "InitReport",
    {
        "type": "object",
        "properties": {
            "models_to_evaluate": {
                "type": "array",
                "items": {"type": "string"},
                "minItems": 1,
            }
        },
        "required": ["models_to_evaluate"],
    },
)

DEFINE_EXPERIMENT = DecisionSchema(
    "DefineExperiment",
    {
        "type": "object",
        "properties": {
            "question": {"type": "string"},
            "answers": {
                "type": "array",
                "minItems": 2,
                "items": {
                    "type": "object",
                    "properties": {
                        "text": {"type": "string"},
                        "image_select_function": _TOOL_CALL_SCHEMA,
                        "image_transform_functions": {
                            "type": "array",
                            "items": _TOOL_CALL_SCHEMA,
                            "minItems": 1,
                        },
                    },
                    "required": ["text", "image_select_function", "image_transform_functions"],
                },
            },
        },
        "required": ["question", "answers"],
    },
)

DISCUSS = DecisionSchema(
    "Discuss",
    {
        "type": "object",
        "properties": {
            "findings": {"type": "string"},
            "open_questions": {"type": "string"},
        },
        "required": ["findings", "open_questions"],
    },
)

JUDGE_SUFFICIENCY = DecisionSchema(
    "JudgeSufficiency",
    {
        "type": "object",
        "properties": {"sufficient": {"type": "boolean"}},
        "required": ["sufficient"],
    },
)

CONCLUDE = DecisionSchema(
    "Conclude",
    {
        "type": "object",
        "properties": {"conclusions": {"type": "string"}},
        "required": ["conclusions"],
    },
)


class OrchestratorBackend(Protocol):
    def complete(self, messages: Sequence[Message], schema: DecisionSchema) -> dict:
        ...


@dataclass
class SessionConfig:
    max_experiments: int = MAX_ENTRIES
    max_heal_retries: int = 3
    samples_per_choice: int = 50
    rng_seed: int = 0
    model_library: tuple[ModelDescriptor, ...] = DEFAULT_MODEL_LIBRARY
    score_concurrency: int = 1

    def __post_init__(self):
        if not 1 <= self.max_experiments <= MAX_ENTRIES:
            raise ConfigurationError(
                f"max_experiments must be in [1, {MAX_ENTRIES}], got {self.max_experiments}"
            )
        if self.max_heal_retries < 0:
            raise ConfigurationError("max_heal_retries must be >= 0")
        if self.samples_per_choice < 1:
            raise ConfigurationError("samples_per_choice must be >= 1")
        if self.rng_seed < 0:
            raise ConfigurationError("rng_seed must be non-negative")
        if self.score_concurrency < 1:
            raise ConfigurationError("score_concurrency must be >= 1")
        if not self.model_library:
            raise ConfigurationError("model library is empty")


@dataclass
class SessionBackends:
    """Everything the session loop talks to, injected for hermetic tests."""

    chat: OrchestratorBackend
    data: DataContext
    model_clients: Mapping[str, ModelClient]


def experiment_seed(rng_seed: int, experiment_index: int) -> int:
    """Stable per-experiment seed derived from the session seed."""
    seq = np.random.SeedSequence([abs(int(rng_seed)), experiment_index])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)  # keep it positive


def with_self_heal(
    invoke: Callable[[list[str]], dict],
    validate: Callable[[dict], tuple[object, Optional[str]]],
    max_retries: int,
):
    """Run invoke/validate with bounded self-heal.

    invoke receives the list of validator messages produced so far; it must
    append them to the conversation as user-role messages. At most
    1 + max_retries calls are made; exhaustion raises HealExhaustedError
    carrying every message in order.
    """
    errors: list[str] = []
    for _ in range(1 + max_retries):
        try:
            payload = invoke(list(errors))
        except MalformedResponseError as exc:
            errors.append(str(exc))
            continue
        value, message = validate(payload)
        if message is None:
            return value
        errors.append(message)
    raise HealExhaustedError(errors)


def _decide(backend, schema, base_messages, validate, max_retries):
    def invoke(error_messages: list[str]) -> dict:
        messages = list(base_messages) + [Message("user", m) for m in error_messages]
        return backend.complete(messages, schema)

    return with_self_heal(invoke, validate, max_retries)


def _report_text(report: Report) -> str:
    return serialize(report).decode("utf-8")


# --- validators -------------------------------------------------------------


def _validate_init(payload, library):
    if not isinstance(payload, dict):
        return None, "/: payload must be a JSON object"
    models = payload.get("models_to_evaluate")
    if models is None:
        return None, "/models_to_evaluate: missing required field"
    if not isinstance(models, list) or not all(isinstance(m, str) for m in models):
        return None, "/models_to_evaluate: expected an array of model names"
    if not models:
        return None, "/models_to_evaluate: select at least one model"
    known = {m.name for m in library}
    for name in models:
        if name not in known:
            return None, (
                f"/models_to_evaluate: unknown model {name!r}; "
                f"available: {', '.join(sorted(known))}"
            )
    if len(set(models)) != len(models):
        return None, "/models_to_evaluate: model names must be unique"
    return list(models), None


def _experiment_validator(registry: ToolRegistry, samples_per_choice: int, seed: int):
    def validate(payload):
        if not isinstance(payload, dict):
            return None, "/: payload must be a JSON object"
        question = payload.get("question")
        if not isinstance(question, str) or not question.strip():
            return None, "/question: missing or empty"
        answers_raw = payload.get("answers")
        if not isinstance(answers_raw, list) or len(answers_raw) < 2:
            return None, "/answers: expected an array with at least two choices"
        answers = []
        for i, a in enumerate(answers_raw):
            if not isinstance(a, dict):
                return None, f"/answers/{i}: expected an object"
            text = a.get("text")
            if not isinstance(text, str) or not text.strip():
                return None, f"/answers/{i}/text: missing or empty"
            if "image_select_function" not in a:
                return None, f"/answers/{i}/image_select_function: missing required field"
            # accept the single-object form and normalize to a one-element chain
            chain_raw = a.get("image_transform_functions")
            if chain_raw is None and "image_transform_function" in a:
                chain_raw = [a["image_transform_function"]]
            if not isinstance(chain_raw, list) or not chain_raw:
                return None, (
                    f"/answers/{i}/image_transform_functions: expected a non-empty array "
                    "of transform calls"
                )
            try:
                select_call = parse_tool_call(a["image_select_function"], registry)
                if registry.get(select_call.full_name).category != "select":
                    return None, (
                        f"/answers/{i}/image_select_function: {select_call.full_name} "
                        "is not a select tool"
                    )
                chain = []
                for j, raw_call in enumerate(chain_raw):
                    call = parse_tool_call(raw_call, registry)
                    if registry.get(call.full_name).category != "transform":
                        return None, (
                            f"/answers/{i}/image_transform_functions/{j}: "
                            f"{call.full_name} is not a transform tool"
                        )
                    chain.append(call)
                answers.append(Answer(text, select_call, tuple(chain)))
            except (ToolValidationError, ConfigurationError) as exc:
                return None, f"/answers/{i}: {exc}"
        try:
            experiment = Experiment(question, tuple(answers), samples_per_choice, seed)
        except ConfigurationError as exc:
            return None, f"/: {exc}"
        return experiment, None

    return validate


def _validate_discuss(payload):
    if not isinstance(payload, dict):
        return None, "/: payload must be a JSON object"
    findings = payload.get("findings")
    if not isinstance(findings, str) or not findings.strip():
        return None, "/findings: missing or empty"
    open_questions = payload.get("open_questions")
    if open_questions is None:
        open_questions = "None"  # omitted by the backend -> normalized
    if not isinstance(open_questions, str):
        return None, "/open_questions: expected a string"
    return Findings(findings, open_questions or "None"), None


def _validate_sufficiency(payload):
    if not isinstance(payload, dict):
        return None, "/: payload must be a JSON object"
    value = payload.get("sufficient")
    if not isinstance(value, bool):
        return None, "/sufficient: expected a boolean"
    return value, None


def _validate_conclusions(payload):
    if not isinstance(payload, dict):
        return None, "/: payload must be a JSON object"
    text = payload.get("conclusions")
    if not isinstance(text, str) or not text.strip():
        return None, "/conclusions: missing or empty"
    return text, None


# --- decision points --------------------------------------------------------


def init_report(
    backend: OrchestratorBackend,
    prompts: PromptSet,
    query: str,
    config: SessionConfig,
    registry: ToolRegistry | None = None,
) -> Report:
    registry = registry or default_registry()
    system = render_system_prompt(registry, config.model_library, prompts)
    messages = [
        Message("system", system),
        Message("user", prompts.init),
        Message("user", query),
    ]
    models = _decide(
        backend,
        INIT_REPORT,
        messages,
        lambda payload: _validate_init(payload, config.model_library),
        config.max_heal_retries,
    )
    return new_report(query, models, config.model_library)


def propose_experiment(
    backend: OrchestratorBackend,
    prompts: PromptSet,
    report: Report,
    config: SessionConfig,
    registry: ToolRegistry | None = None,
) -> Experiment:
    """Design the next experiment, with regeneration on repeated heal failure.

    After max_heal_retries consecutive invalid payloads the exchange is
    discarded and the prompt is re-issued from a clean context; after
    MAX_REGENERATIONS failed regenerations the session aborts.
    """
    registry = registry or default_registry()
    system = render_system_prompt(registry, config.model_library, prompts)
    seed = experiment_seed(config.rng_seed, len(report.entries))
    validate = _experiment_validator(registry, config.samples_per_choice, seed)
    failures: list[HealExhaustedError] = []
    for _ in range(1 + MAX_REGENERATIONS):
        messages = [
            Message("system", system),
            Message("user", prompts.experiment),
            Message("user", _report_text(report)),
        ]
        try:
            return _decide(backend, DEFINE_EXPERIMENT, messages, validate, config.max_heal_retries)
        except HealExhaustedError as exc:
            failures.append(exc)
    raise SessionAbortError(
        f"experiment design failed after {MAX_REGENERATIONS} regenerations",
        record={
            "stage": "propose_experiment",
            "regenerations": MAX_REGENERATIONS,
            "validator_messages": [m for exc in failures for m in exc.messages],
        },
    )


def discuss(
    backend: OrchestratorBackend,
    prompts: PromptSet,
    experiment: Experiment,
    results: ResultSet,
    config: SessionConfig,
) -> Findings:
    messages = [
        Message("user", prompts.findings),
        Message("user", json.dumps(experiment_to_json_obj(experiment), indent=2)),
        Message("user", json.dumps(results_to_json_obj(results, sorted(results)), indent=2)),
    ]
    return _decide(backend, DISCUSS, messages, _validate_discuss, config.max_heal_retries)


def judge_sufficiency(
    backend: OrchestratorBackend,
    prompts: PromptSet,
    report: Report,
    config: SessionConfig,
) -> bool:
    if not report.entries:
        raise VqalabError("sufficiency is judged only after at least one entry")
    messages = [
        Message("user", prompts.sufficiency),
        Message("user", _report_text(report)),
    ]
    return _decide(
        backend, JUDGE_SUFFICIENCY, messages, _validate_sufficiency, config.max_heal_retries
    )


def conclude(
    backend: OrchestratorBackend,
    prompts: PromptSet,
    report: Report,
    config: SessionConfig,
) -> str:
    messages = [
        Message("user", prompts.conclusions),
        Message("user", _report_text(report)),
    ]
    return _decide(backend, CONCLUDE, messages, _validate_conclusions, config.max_heal_retries)


# --- session loop -----------------------------------------------------------


def run_session(
    query: str,
    config: SessionConfig,
    backends: SessionBackends,
    prompts: PromptSet | None = None,
    registry: ToolRegistry | None = None,
) -> Report:
    """Drive the full loop: init, then propose/build/evaluate/discuss/judge
    until sufficiency or the experiment cap, then conclude.

    Unrecoverable stage errors raise SessionAbortError carrying the partial
    report and a machine-readable record; the CLI persists both.
    """
    prompts = prompts or default_prompts()
    registry = registry or default_registry()
    report: Optional[Report] = None
    try:
        report = init_report(backends.chat, prompts, query, config, registry)
        clients = _clients_for(report, backends)
        while True:
            experiment = propose_experiment(backends.chat, prompts, report, config, registry)
            dataset = build_dataset(experiment, backends.data)
            results = evaluate(clients, dataset, concurrency=config.score_concurrency)
            findings = discuss(backends.chat, prompts, experiment, results, config)
            report = append_entry(report, ReportEntry(experiment, results, findings))
            sufficient = judge_sufficiency(backends.chat, prompts, report, config)
            report = with_sufficiency(report, sufficient)
            if sufficient or len(report.entries) >= config.max_experiments:
                break
        conclusions = conclude(backends.chat, prompts, report, config)
        return with_conclusions(report, conclusions)
    except SessionAbortError as exc:
        raise SessionAbortError(str(exc), partial_report=report, record=exc.record) from exc
    except (HealExhaustedError, TransportError, EvaluationError, VqalabError) as exc:
        raise SessionAbortError(
            f"{type(exc).__name__}: {exc}",
            partial_report=report,
            record={"stage": _stage_of(exc), "error": type(exc).__name__, "message": str(exc)},
        ) from exc


def _clients_for(report: Report, backends: SessionBackends) -> list[ModelClient]:
    clients = []
    for name in report.models_to_evaluate:
        client = backends.model_clients.get(name)
        if client is None:
            raise ConfigurationError(f"no scoring client configured for model {name!r}")
        clients.append(client)
    return clients


def _stage_of(exc) -> str:
    if isinstance(exc, EvaluationError):
        return "evaluate"
    if isinstance(exc, HealExhaustedError):
        return "decision"
    if isinstance(exc, TransportError):
        return "transport"
    return "session"

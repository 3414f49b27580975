"""The report document: schema, serialization, and append-only lifecycle.

The report is the loop's read-write buffer. Values are immutable snapshots;
appending produces a new value, so reports are safe to share across threads.
Serialized field order is fixed (schema order) to keep golden files stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from urllib.parse import urlparse

from vqalab.errors import ConfigurationError, LifecycleError, ReportParseError
from vqalab.toolbox import ToolCall

SCHEMA_VERSION = 1
MAX_ENTRIES = 5  # hard experiment cap
UNKNOWN_CHOICE = "Unknown"


def normalize_prose(text: str) -> str:
    """Collapse whitespace runs; LLM prose is not byte-stable."""
    return re.sub(r"\s+", " ", text).strip()


@dataclass(frozen=True)
class Query:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ConfigurationError("query text must be non-empty")


@dataclass(frozen=True)
class ModelDescriptor:
    name: str
    description: str
    endpoint: str

    def __post_init__(self):
        parsed = urlparse(self.endpoint)
        if not parsed.scheme or not (parsed.netloc or parsed.path):
            raise ConfigurationError(
                f"model {self.name!r}: endpoint {self.endpoint!r} is not an absolute URL"
            )


# The built-in library mirrors the three models whose descriptions ship in
# the system prompt; endpoints point at a locally hosted scoring service.
DEFAULT_MODEL_LIBRARY = (
    ModelDescriptor(
        "blip2-opt-2.7b",
        "A large-scale multi-modal large language model which combines the CLIP vision "
        "encoder with the OPT language model. It belongs to the BLIP family of models and "
        "consists of 2.7 billion parameters.",
        "http://127.0.0.1:8600/v1/score/blip2-opt-2.7b",
    ),
    ModelDescriptor(
        "idefics-9b-instruct",
        "A large-scale multi-modal large language model trained on interleaved data. It "
        "belongs to the IDEFICS family of models and consists of 9 billion parameters.",
        "http://127.0.0.1:8600/v1/score/idefics-9b-instruct",
    ),
    ModelDescriptor(
        "llava-1.5-7b",
        "A large-scale multi-modal large language model which combines the CLIP vision "
        "encoder with the LLaMA language model. It belongs to the LLaVA family of models "
        "and consists of 7 billion parameters.",
        "http://127.0.0.1:8600/v1/score/llava-1.5-7b",
    ),
)


@dataclass(frozen=True)
class Answer:
    """One choice: its text, the select call, and the ordered transform chain."""

    text: str
    select_call: ToolCall
    transform_calls: tuple[ToolCall, ...]

    def __post_init__(self):
        if not self.text.strip():
            raise ConfigurationError("answer text must be non-empty")
        if self.text.strip() == UNKNOWN_CHOICE:
            raise ConfigurationError(
                f"{UNKNOWN_CHOICE!r} is reserved for abstention and cannot be an answer"
            )
        if not self.transform_calls:
            raise ConfigurationError("answer needs at least one transform call")


@dataclass(frozen=True)
class Experiment:
    question: str
    answers: tuple[Answer, ...]
    samples_per_choice: int
    seed: int

    def __post_init__(self):
        if not self.question.strip():
            raise ConfigurationError("experiment question must be non-empty")
        if len(self.answers) < 2:
            raise ConfigurationError("experiment needs at least two answer choices")
        texts = [normalize_prose(a.text) for a in self.answers]
        if len(set(texts)) != len(texts):
            raise ConfigurationError("answer texts must be distinct")
        if self.samples_per_choice < 1:
            raise ConfigurationError("samples_per_choice must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("experiment seed must be non-negative")

    @property
    def choice_texts(self) -> tuple[str, ...]:
        return tuple(a.text for a in self.answers)


@dataclass(frozen=True)
class ModelResult:
    """Metrics for one model: accuracy, per-choice accuracy, abstention rate."""

    accuracy: float
    class_wise: dict[str, float]
    abstention_rate: float


ResultSet = dict[str, ModelResult]


@dataclass(frozen=True)
class Findings:
    findings: str
    open_questions: str = "None"

    def __post_init__(self):
        if not self.findings.strip():
            raise ConfigurationError("findings must be non-empty")
        if not self.open_questions.strip():
            object.__setattr__(self, "open_questions", "None")


@dataclass(frozen=True)
class ReportEntry:
    experiment: Experiment
    results: ResultSet
    findings: Findings


@dataclass(frozen=True)
class Report:
    query: Query
    models_to_evaluate: tuple[str, ...]
    entries: tuple[ReportEntry, ...] = ()
    sufficiency_history: tuple[bool, ...] = ()
    conclusions: str | None = None

    def __post_init__(self):
        if len(self.entries) > MAX_ENTRIES:
            raise LifecycleError(f"report exceeds the {MAX_ENTRIES}-experiment cap")

    @property
    def concluded(self) -> bool:
        return self.conclusions is not None


def new_report(query, models, library=DEFAULT_MODEL_LIBRARY) -> Report:
    """Empty report for a query, restricted to models known to the library."""
    if isinstance(query, str):
        query = Query(query)
    models = tuple(models)
    if not models:
        raise ConfigurationError("at least one model must be selected")
    if len(set(models)) != len(models):
        raise ConfigurationError("model names must be unique")
    known = {m.name for m in library}
    for name in models:
        if name not in known:
            raise ConfigurationError(
                f"unknown model {name!r}; available: {', '.join(sorted(known))}"
            )
    return Report(query=query, models_to_evaluate=models)


def append_entry(report: Report, entry: ReportEntry) -> Report:
    """New report with the entry appended; prior entries are untouched."""
    if report.concluded:
        raise LifecycleError("cannot append to a concluded report")
    if len(report.entries) >= MAX_ENTRIES:
        raise LifecycleError(f"experiment cap reached ({MAX_ENTRIES})")
    have = set(entry.results)
    want = set(report.models_to_evaluate)
    if have != want:
        raise ConfigurationError(
            f"entry results cover {sorted(have)}, report evaluates {sorted(want)}"
        )
    return replace(report, entries=report.entries + (entry,))


def with_sufficiency(report: Report, sufficient: bool) -> Report:
    return replace(report, sufficiency_history=report.sufficiency_history + (bool(sufficient),))


def with_conclusions(report: Report, conclusions: str) -> Report:
    if not conclusions.strip():
        raise ConfigurationError("conclusions must be non-empty")
    if report.concluded:
        raise LifecycleError("report already concluded")
    return replace(report, conclusions=conclusions)


# --- serialization ---------------------------------------------------------


def _tool_call_obj(call: ToolCall) -> dict:
    return call.to_json_obj()


def experiment_to_json_obj(exp: Experiment) -> dict:
    return {
        "question": exp.question,
        "answers": [
            {
                "text": a.text,
                "image_select_function": _tool_call_obj(a.select_call),
                "image_transform_functions": [_tool_call_obj(c) for c in a.transform_calls],
            }
            for a in exp.answers
        ],
        "samples_per_choice": exp.samples_per_choice,
        "seed": exp.seed,
    }


def results_to_json_obj(results: ResultSet, model_order) -> dict:
    out = {}
    for name in model_order:
        r = results[name]
        out[name] = {
            "accuracy": r.accuracy,
            "class_wise": dict(r.class_wise),
            "abstention_rate": r.abstention_rate,
        }
    return out


def to_json_obj(report: Report) -> dict:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "query": report.query.text,
        "models_to_evaluate": list(report.models_to_evaluate),
        "entries": [
            {
                "experiment": experiment_to_json_obj(e.experiment),
                "results": results_to_json_obj(e.results, report.models_to_evaluate),
                "findings": {
                    "findings": e.findings.findings,
                    "open_questions": e.findings.open_questions,
                },
            }
            for e in report.entries
        ],
        "sufficiency_history": list(report.sufficiency_history),
    }
    if report.conclusions is not None:
        obj["conclusions"] = report.conclusions
    return obj


def serialize(report: Report) -> bytes:
    return (json.dumps(to_json_obj(report), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _expect(obj: dict, key: str, types, path: str):
    if key not in obj:
        raise ReportParseError(f"{path}/{key}: missing required field")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types):
        raise ReportParseError(f"{path}/{key}: unexpected type {type(value).__name__}")
    return value


def _as_tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _parse_tool_call_obj(obj, path: str) -> ToolCall:
    if not isinstance(obj, dict):
        raise ReportParseError(f"{path}: expected an object")
    module_path = _expect(obj, "module_path", str, path)
    name = _expect(obj, "name", str, path)
    kwargs = obj.get("kwargs", {})
    if not isinstance(kwargs, dict):
        raise ReportParseError(f"{path}/kwargs: expected an object")
    return ToolCall(module_path, name, dict(kwargs))


def _parse_experiment(obj, path: str) -> Experiment:
    if not isinstance(obj, dict):
        raise ReportParseError(f"{path}: expected an object")
    question = _expect(obj, "question", str, path)
    answers_raw = _expect(obj, "answers", list, path)
    answers = []
    for i, a in enumerate(answers_raw):
        apath = f"{path}/answers/{i}"
        if not isinstance(a, dict):
            raise ReportParseError(f"{apath}: expected an object")
        text = _expect(a, "text", str, apath)
        select_call = _parse_tool_call_obj(
            _expect(a, "image_select_function", dict, apath),
            f"{apath}/image_select_function",
        )
        chain_raw = _expect(a, "image_transform_functions", list, apath)
        chain = tuple(
            _parse_tool_call_obj(c, f"{apath}/image_transform_functions/{j}")
            for j, c in enumerate(chain_raw)
        )
        answers.append(Answer(text, select_call, chain))
    samples = _expect(obj, "samples_per_choice", int, path)
    seed = _expect(obj, "seed", int, path)
    try:
        return Experiment(question, tuple(answers), samples, seed)
    except ConfigurationError as exc:
        raise ReportParseError(f"{path}: {exc}") from None


def _parse_results(obj, path: str) -> ResultSet:
    if not isinstance(obj, dict):
        raise ReportParseError(f"{path}: expected an object")
    results = {}
    for name, r in obj.items():
        rpath = f"{path}/{name}"
        if not isinstance(r, dict):
            raise ReportParseError(f"{rpath}: expected an object")
        accuracy = float(_expect(r, "accuracy", (int, float), rpath))
        class_wise = _expect(r, "class_wise", dict, rpath)
        abstention = float(_expect(r, "abstention_rate", (int, float), rpath))
        cw = {}
        for choice, value in class_wise.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ReportParseError(f"{rpath}/class_wise/{choice}: expected a number")
            cw[choice] = float(value)
        results[name] = ModelResult(accuracy, cw, abstention)
    return results


def parse(data: bytes | str) -> Report:
    """Parse report bytes; rejects missing fields with a path-qualified message."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ReportParseError(f"/: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ReportParseError("/: expected a JSON object")
    version = _expect(obj, "schema_version", int, "")
    if version != SCHEMA_VERSION:
        raise ReportParseError(f"/schema_version: unsupported version {version}")
    query = _expect(obj, "query", str, "")
    models = _expect(obj, "models_to_evaluate", list, "")
    if not all(isinstance(m, str) for m in models):
        raise ReportParseError("/models_to_evaluate: expected strings")
    entries_raw = _expect(obj, "entries", list, "")
    entries = []
    for i, e in enumerate(entries_raw):
        epath = f"/entries/{i}"
        if not isinstance(e, dict):
            raise ReportParseError(f"{epath}: expected an object")
        experiment = _parse_experiment(_expect(e, "experiment", dict, epath), f"{epath}/experiment")
        results = _parse_results(_expect(e, "results", dict, epath), f"{epath}/results")
        fobj = _expect(e, "findings", dict, epath)
        findings_text = _expect(fobj, "findings", str, f"{epath}/findings")
        open_questions = fobj.get("open_questions", "None")
        if not isinstance(open_questions, str):
            raise ReportParseError(f"{epath}/findings/open_questions: expected a string")
        try:
            findings = Findings(findings_text, open_questions)
        except ConfigurationError as exc:
            raise ReportParseError(f"{epath}/findings: {exc}") from None
        entries.append(ReportEntry(experiment, results, findings))
    history_raw = _expect(obj, "sufficiency_history", list, "")
    if not all(isinstance(h, bool) for h in history_raw):
        raise ReportParseError("/sufficiency_history: expected booleans")
    conclusions = obj.get("conclusions")
    if conclusions is not None and not isinstance(conclusions, str):
        raise ReportParseError("/conclusions: expected a string")
    try:
        return Report(
            query=Query(query),
            models_to_evaluate=tuple(models),
            entries=tuple(entries),
            sufficiency_history=tuple(history_raw),
            conclusions=conclusions,
        )
    except (ConfigurationError, LifecycleError) as exc:
        raise ReportParseError(f"/: {exc}") from None


# --- structural equality ---------------------------------------------------


def _normalized_obj(report: Report):
    obj = to_json_obj(report)
    obj["query"] = normalize_prose(obj["query"])
    for entry in obj["entries"]:
        exp = entry["experiment"]
        exp["question"] = normalize_prose(exp["question"])
        for answer in exp["answers"]:
            answer["text"] = normalize_prose(answer["text"])
        f = entry["findings"]
        f["findings"] = normalize_prose(f["findings"])
        f["open_questions"] = normalize_prose(f["open_questions"])
    if "conclusions" in obj:
        obj["conclusions"] = normalize_prose(obj["conclusions"])
    return obj


def reports_equal(a: Report, b: Report) -> bool:
    """Structural equality; insignificant whitespace in prose fields is ignored."""
    return _normalized_obj(a) == _normalized_obj(b)

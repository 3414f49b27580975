"""Exception hierarchy shared across the package."""

from __future__ import annotations


class VqalabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VqalabError):
    """Invalid configuration: unknown model names, bad manifest, bad flags."""


class LifecycleError(VqalabError):
    """Operation issued against a report in the wrong state (concluded / at cap)."""


class ReportParseError(VqalabError):
    """Report bytes violate the document schema; message is path-qualified."""


class ToolValidationError(VqalabError):
    """Tool call cannot be resolved or its arguments are invalid.

    The message text is fed verbatim to the orchestrator during self-heal,
    so it must stay actionable on its own.
    """


class ToolExecutionError(VqalabError):
    """A validated tool failed at apply time (missing label, no companion, ...)."""


class MalformedResponseError(VqalabError):
    """Chat backend reply was not exactly one well-formed tool call.

    Routed into the self-heal loop like any other validation failure.
    """


class HealExhaustedError(VqalabError):
    """Self-heal retries ran out; carries every validator message in order."""

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__(
            "self-heal exhausted after %d failures: %s"
            % (len(self.messages), self.messages[-1] if self.messages else "")
        )


class TransportError(VqalabError):
    """Network-level failure that survived the retry budget."""


class ProtocolError(VqalabError):
    """Endpoint answered, but the payload violates the wire contract."""


class DatasetBuildError(VqalabError):
    """Benchmark materialization failed; message carries (choice, repetition)."""


class EvaluationError(VqalabError):
    """One or more models failed during evaluation; carries partial results."""

    def __init__(self, message: str, partial: dict, failures: dict[str, str]):
        self.partial = partial
        self.failures = dict(failures)
        super().__init__(message)


class SessionAbortError(VqalabError):
    """Unrecoverable session failure; carries the partial report and a record."""

    def __init__(self, message: str, partial_report=None, record: dict | None = None):
        self.partial_report = partial_report
        self.record = record or {}
        super().__init__(message)

"""Argument schemas, execution context, and the tool base class."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, ClassVar, Optional, Protocol, runtime_checkable

import numpy as np

from vqalab.errors import ToolExecutionError, ToolValidationError
from vqalab.images import ImageBuffer

_REQUIRED = object()


@runtime_checkable
class GenerationHandle(Protocol):
    """Anything that can turn a text prompt into an image."""

    def generate_image(self, prompt: str, seed: int, width: int, height: int) -> ImageBuffer:
        ...


@dataclass(frozen=True)
class ArgSpec:
    """One argument in a tool's schema.

    kind is one of: int, float, str, bool, color, optional_str.
    A color canonicalizes to a list of three ints in [0, 255].
    """

    name: str
    kind: str
    default: object = _REQUIRED
    choices: tuple | None = None
    minimum: float | None = None
    maximum: float | None = None

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


def _coerce(spec: ArgSpec, value, path: str):
    if spec.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ToolValidationError(f"{path}: expected a number, got {type(value).__name__}")
        value = float(value)
    elif spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            else:
                raise ToolValidationError(
                    f"{path}: expected an integer, got {type(value).__name__}"
                )
    elif spec.kind == "str":
        if not isinstance(value, str):
            raise ToolValidationError(f"{path}: expected a string, got {type(value).__name__}")
    elif spec.kind == "optional_str":
        if value is not None and not isinstance(value, str):
            raise ToolValidationError(
                f"{path}: expected a string or null, got {type(value).__name__}"
            )
    elif spec.kind == "bool":
        if not isinstance(value, bool):
            raise ToolValidationError(f"{path}: expected a boolean, got {type(value).__name__}")
    elif spec.kind == "color":
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 3
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)
            or any(not 0 <= v <= 255 for v in value)
        ):
            raise ToolValidationError(
                f"{path}: expected an RGB triple of integers in [0, 255]"
            )
        value = [int(v) for v in value]
    else:  # pragma: no cover - registry construction bug
        raise AssertionError(f"unknown argument kind {spec.kind!r}")

    if spec.choices is not None and value not in spec.choices:
        allowed = ", ".join(repr(c) for c in spec.choices)
        raise ToolValidationError(f"{path}: expected one of {allowed}, got {value!r}")
    if spec.minimum is not None and isinstance(value, (int, float)) and value < spec.minimum:
        raise ToolValidationError(f"{path}: must be >= {spec.minimum}, got {value}")
    if spec.maximum is not None and isinstance(value, (int, float)) and value > spec.maximum:
        raise ToolValidationError(f"{path}: must be <= {spec.maximum}, got {value}")
    return value


def validate_kwargs(tool_name: str, args: tuple[ArgSpec, ...], kwargs: dict) -> dict:
    """Check kwargs against a tool schema and fill defaults.

    Error messages are argument-path-qualified because they are replayed to
    the orchestrator by the self-heal loop.
    """
    known = {spec.name: spec for spec in args}
    for key in kwargs:
        if key not in known:
            raise ToolValidationError(
                f"/kwargs/{key}: unexpected argument for {tool_name}"
            )
    canonical = {}
    for spec in args:
        if spec.name in kwargs:
            canonical[spec.name] = _coerce(spec, kwargs[spec.name], f"/kwargs/{spec.name}")
        elif spec.required:
            raise ToolValidationError(
                f"/kwargs/{spec.name}: missing required argument for {tool_name}"
            )
        else:
            canonical[spec.name] = spec.default
    return canonical


@dataclass
class TransformContext:
    """Everything a transform may touch besides its input pixels.

    All randomness must come from ``rng`` so that a (call, image, seed)
    triple maps to one output byte-for-byte.
    """

    rng: np.random.Generator
    generation_client: Optional[GenerationHandle] = None
    companion_sampler: Optional[Callable[[], ImageBuffer]] = None
    sample_label: Optional[str] = None

    def companion(self, tool_name: str) -> ImageBuffer:
        if self.companion_sampler is None:
            raise ToolExecutionError(f"{tool_name} requires a companion sampler in the context")
        return self.companion_sampler()

    def generator(self, tool_name: str) -> GenerationHandle:
        if self.generation_client is None:
            raise ToolExecutionError(f"{tool_name} requires a generation backend in the context")
        return self.generation_client

    def label(self, tool_name: str) -> str:
        if not self.sample_label:
            raise ToolExecutionError(f"{tool_name} requires the class label of the current sample")
        return self.sample_label


class Tool:
    """Base for select and transform tools.

    Subclasses carry the verbatim docstring exposed to the orchestrator and
    an ARGS schema used for validation; instantiation re-validates kwargs.
    """

    MODULE_PATH: ClassVar[str] = ""
    ARGS: ClassVar[tuple[ArgSpec, ...]] = ()

    def __init__(self, **kwargs):
        full_name = f"{self.MODULE_PATH}.{type(self).__name__}"
        for name, value in validate_kwargs(full_name, type(self).ARGS, kwargs).items():
            setattr(self, name, value)

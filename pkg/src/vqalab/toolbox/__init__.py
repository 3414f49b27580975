"""Tool registry, call parsing, and the image transform implementations.

Tool identity strings are fixed to the dotted paths ``src.tools.select.*``
and ``src.tools.transform.*`` because they appear in prompts, reports, and
session scripts; they do not mirror this package's module layout.
"""

from vqalab.toolbox.base import (
    ArgSpec,
    GenerationHandle,
    TransformContext,
    validate_kwargs,
)
from vqalab.toolbox.registry import (
    SELECT_MODULE,
    TRANSFORM_MODULE,
    ToolCall,
    ToolRegistry,
    ToolSpec,
    apply_transform,
    default_registry,
    docstring,
    parse_tool_call,
)

__all__ = [
    "ArgSpec",
    "GenerationHandle",
    "SELECT_MODULE",
    "TRANSFORM_MODULE",
    "ToolCall",
    "ToolRegistry",
    "ToolSpec",
    "TransformContext",
    "apply_transform",
    "default_registry",
    "docstring",
    "parse_tool_call",
    "validate_kwargs",
]

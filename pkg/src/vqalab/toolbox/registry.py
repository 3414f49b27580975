"""Tool registry, dotted-path call parsing, and docstring export."""

from __future__ import annotations

import ast
import inspect
from dataclasses import dataclass, field

from vqalab.errors import ToolValidationError
from vqalab.images import ImageBuffer
from vqalab.toolbox.base import ArgSpec, Tool, TransformContext, validate_kwargs
from vqalab.toolbox.select import SELECT_MODULE, SELECT_TOOLS
from vqalab.toolbox.transforms import TRANSFORM_MODULE, TRANSFORM_TOOLS


@dataclass(frozen=True)
class ToolCall:
    """A resolved tool invocation: dotted module path, name, canonical kwargs."""

    module_path: str
    name: str
    kwargs: dict = field(default_factory=dict)

    @property
    def full_name(self) -> str:
        return f"{self.module_path}.{self.name}"

    def to_json_obj(self) -> dict:
        return {"module_path": self.module_path, "name": self.name, "kwargs": dict(self.kwargs)}


@dataclass(frozen=True)
class ToolSpec:
    """Registry entry: identity, implementation, and argument schema."""

    full_name: str
    tool: type[Tool]
    args: tuple[ArgSpec, ...]
    category: str  # "select" | "transform"

    @property
    def docstring(self) -> str:
        doc = self.tool.__doc__ or ""
        return inspect.cleandoc(doc)

    @property
    def summary(self) -> str:
        return self.docstring.splitlines()[0] if self.docstring else ""


def docstring(spec: ToolSpec) -> str:
    """Verbatim docstring of a tool spec, exactly as rendered into prompts."""
    return spec.docstring


class ToolRegistry:
    """Ordered mapping of dotted tool names to specs."""

    def __init__(self):
        self._specs: dict[str, ToolSpec] = {}

    def register(self, cls: type[Tool]) -> None:
        category = "select" if cls.MODULE_PATH == SELECT_MODULE else "transform"
        full_name = f"{cls.MODULE_PATH}.{cls.__name__}"
        if full_name in self._specs:
            raise ToolValidationError(f"tool {full_name} registered twice")
        self._specs[full_name] = ToolSpec(full_name, cls, tuple(cls.ARGS), category)

    def names(self) -> list[str]:
        return list(self._specs)

    def select_names(self) -> list[str]:
        return [n for n, s in self._specs.items() if s.category == "select"]

    def transform_names(self) -> list[str]:
        return [n for n, s in self._specs.items() if s.category == "transform"]

    def __len__(self) -> int:
        return len(self._specs)

    def __contains__(self, full_name: str) -> bool:
        return full_name in self._specs

    def get(self, full_name: str) -> ToolSpec:
        try:
            return self._specs[full_name]
        except KeyError:
            available = ", ".join(self._specs)
            raise ToolValidationError(
                f"unknown tool {full_name}; available: {available}"
            ) from None

    def prompt_entry(self, full_name: str) -> str:
        spec = self.get(full_name)
        return f"{spec.full_name}: {spec.docstring}"

    def validate(self) -> None:
        """Every registered tool must expose a non-empty docstring."""
        if not self._specs:
            raise ToolValidationError("tool registry is empty")
        for name, spec in self._specs.items():
            if not spec.docstring.strip():
                raise ToolValidationError(f"tool {name} has an empty docstring")


def default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    for cls in SELECT_TOOLS:
        registry.register(cls)
    for cls in TRANSFORM_TOOLS:
        registry.register(cls)
    return registry


def parse_tool_call(raw, registry: ToolRegistry) -> ToolCall:
    """Canonicalize a tool call from object form or a compact call string.

    Object form: {"module_path": ..., "name": ..., "kwargs": {...}}.
    Compact form: 'src.tools.transform.OverlayColor([255, 0, 0])', positional
    arguments mapped in schema declaration order.

    Raises ToolValidationError with a self-heal-ready message on unknown tools
    or invalid arguments; defaults are filled in the returned call.
    """
    if isinstance(raw, str):
        module_path, name, kwargs = _parse_compact(raw, registry)
    elif isinstance(raw, dict):
        module_path = raw.get("module_path")
        name = raw.get("name")
        if not isinstance(module_path, str) or not module_path:
            raise ToolValidationError("/module_path: missing or not a string")
        if not isinstance(name, str) or not name:
            raise ToolValidationError("/name: missing or not a string")
        kwargs = raw.get("kwargs", {})
        if kwargs is None:
            kwargs = {}
        if not isinstance(kwargs, dict):
            raise ToolValidationError("/kwargs: expected an object")
        unknown = set(raw) - {"module_path", "name", "kwargs", "id"}
        if unknown:
            raise ToolValidationError(
                f"/{sorted(unknown)[0]}: unexpected field in tool call object"
            )
    else:
        raise ToolValidationError(
            f"tool call must be an object or a call string, got {type(raw).__name__}"
        )
    spec = registry.get(f"{module_path}.{name}")
    canonical = validate_kwargs(spec.full_name, spec.args, kwargs)
    return ToolCall(module_path, name, canonical)


def _parse_compact(text: str, registry: ToolRegistry):
    try:
        expr = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ToolValidationError(f"malformed tool call string {text!r}: {exc.msg}") from None
    if not isinstance(expr, ast.Call):
        raise ToolValidationError(f"malformed tool call string {text!r}: not a call")
    dotted = _dotted_name(expr.func)
    if dotted is None or "." not in dotted:
        raise ToolValidationError(
            f"malformed tool call string {text!r}: expected a dotted tool path"
        )
    module_path, name = dotted.rsplit(".", 1)
    # Resolve before mapping positionals: the schema defines their order.
    spec = registry.get(f"{module_path}.{name}")
    kwargs = {}
    if len(expr.args) > len(spec.args):
        raise ToolValidationError(
            f"{spec.full_name} takes at most {len(spec.args)} arguments, got {len(expr.args)}"
        )
    for arg_node, arg_spec in zip(expr.args, spec.args):
        kwargs[arg_spec.name] = _literal(arg_node, text)
    for kw in expr.keywords:
        if kw.arg is None:
            raise ToolValidationError(f"malformed tool call string {text!r}: **kwargs not allowed")
        if kw.arg in kwargs:
            raise ToolValidationError(f"/kwargs/{kw.arg}: argument given twice")
        kwargs[kw.arg] = _literal(kw.value, text)
    return module_path, name, kwargs


def _dotted_name(node) -> str | None:
    parts = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return ".".join(reversed(parts))
    return None


def _literal(node, text: str):
    try:
        value = ast.literal_eval(node)
    except (ValueError, SyntaxError):
        raise ToolValidationError(
            f"malformed tool call string {text!r}: arguments must be literals"
        ) from None
    if isinstance(value, tuple):
        value = list(value)
    return value


_DEFAULT_REGISTRY = default_registry()


def apply_transform(
    call: ToolCall,
    image: ImageBuffer,
    ctx: TransformContext,
    registry: ToolRegistry | None = None,
) -> ImageBuffer:
    """Run one validated transform call on an image; the input is never mutated."""
    spec = (registry or _DEFAULT_REGISTRY).get(call.full_name)
    if spec.category != "transform":
        raise ToolValidationError(f"{call.full_name} is not a transform tool")
    tool = spec.tool(**call.kwargs)
    return tool(image, ctx)

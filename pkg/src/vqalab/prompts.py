"""Prompt templates and system-prompt rendering.

The system prompt template ships as a text asset; the MODELS, SELECT TOOLS,
and TRANSFORM TOOLS sections are injected verbatim from the model library and
the tool registry, which keeps the full prompt auditable and golden-testable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from vqalab.errors import ConfigurationError
from vqalab.report import ModelDescriptor
from vqalab.toolbox import ToolRegistry

ASSETS_DIR = Path(__file__).parent / "assets"

MODELS_MARKER = "<<MODELS>>"
SELECT_TOOLS_MARKER = "<<SELECT_TOOLS>>"
TRANSFORM_TOOLS_MARKER = "<<TRANSFORM_TOOLS>>"


@dataclass(frozen=True)
class PromptSet:
    """The six prompt texts driving the decision points."""

    system: str
    init: str
    experiment: str
    findings: str
    sufficiency: str
    conclusions: str

    def __post_init__(self):
        for marker in (MODELS_MARKER, SELECT_TOOLS_MARKER, TRANSFORM_TOOLS_MARKER):
            if marker not in self.system:
                raise ConfigurationError(f"system template is missing the {marker} slot")


def _read_asset(name: str) -> str:
    return (ASSETS_DIR / name).read_text(encoding="utf-8")


def default_prompts() -> PromptSet:
    return PromptSet(
        system=_read_asset("system_prompt.txt"),
        init=_read_asset("prompt_init.txt").strip(),
        experiment=_read_asset("prompt_experiment.txt").strip(),
        findings=_read_asset("prompt_findings.txt").strip(),
        sufficiency=_read_asset("prompt_sufficiency.txt").strip(),
        conclusions=_read_asset("prompt_conclusions.txt").strip(),
    )


def render_system_prompt(
    registry: ToolRegistry,
    models: Sequence[ModelDescriptor],
    prompts: PromptSet | None = None,
) -> str:
    """Assemble the full system prompt with every docstring verbatim."""
    registry.validate()
    if not models:
        raise ConfigurationError("model library is empty")
    prompts = prompts or default_prompts()
    models_section = "\n\n".join(f"{m.name}: {m.description}" for m in models)
    select_section = "\n\n\n".join(
        registry.prompt_entry(name) for name in registry.select_names()
    )
    transform_section = "\n\n\n".join(
        registry.prompt_entry(name) for name in registry.transform_names()
    )
    text = prompts.system
    text = text.replace(MODELS_MARKER, models_section)
    text = text.replace(SELECT_TOOLS_MARKER, select_section)
    text = text.replace(TRANSFORM_TOOLS_MARKER, transform_section)
    return text

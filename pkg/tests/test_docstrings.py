"""Golden tests: tool docstrings are byte-stable."""

from __future__ import annotations

from pathlib import Path

import pytest

from vqalab.toolbox import default_registry

GOLDEN_DIR = Path(__file__).parent / "data" / "docstrings"
REG = default_registry()


@pytest.mark.parametrize("full_name", REG.names())
def test_docstring_matches_golden(full_name):
    golden = (GOLDEN_DIR / f"{full_name}.txt").read_text(encoding="utf-8")
    assert REG.prompt_entry(full_name) + "\n" == golden


def test_every_golden_has_a_tool():
    golden_names = {p.stem for p in GOLDEN_DIR.glob("*.txt")}
    assert golden_names == set(REG.names())


def test_expected_tool_count():
    assert len(REG.names()) == 20
    assert len(REG.select_names()) == 2
    assert len(REG.transform_names()) == 18

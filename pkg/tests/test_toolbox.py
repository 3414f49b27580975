"""Tool call parsing, argument validation, and registry behavior."""

from __future__ import annotations

import pytest

from vqalab.errors import ToolValidationError
from vqalab.toolbox import ToolRegistry, default_registry, docstring, parse_tool_call
from vqalab.toolbox.base import ArgSpec, Tool


@pytest.fixture(scope="module")
def reg():
    return default_registry()


class TestParseCompactForm:
    def test_overlay_color_fills_opacity_default(self, reg):
        call = parse_tool_call("src.tools.transform.OverlayColor([255, 0, 0])", reg)
        assert call.module_path == "src.tools.transform"
        assert call.name == "OverlayColor"
        assert call.kwargs == {"color": [255, 0, 0], "opacity": 1.0}

    def test_unknown_tool_lists_available(self, reg):
        with pytest.raises(ToolValidationError) as err:
            parse_tool_call("src.tools.transform.Rotate(90)", reg)
        message = str(err.value)
        assert message.startswith("unknown tool src.tools.transform.Rotate; available: ")
        assert "src.tools.transform.RotateImage" in message

    def test_positional_arguments_map_in_schema_order(self, reg):
        call = parse_tool_call(
            'src.tools.transform.PasteGeometricShapeAtRandomPosition("circle", 48, (0, 255, 0), False, 1)',
            reg,
        )
        assert call.kwargs == {
            "shape": "circle",
            "size": 48,
            "color": [0, 255, 0],
            "fill": False,
            "repeat": 1,
        }

    def test_keyword_arguments(self, reg):
        call = parse_tool_call("src.tools.transform.AddJPEGCompression(target_psnr=20.0)", reg)
        assert call.kwargs == {"target_psnr": 20.0}

    def test_tuple_color_canonicalizes_to_list(self, reg):
        call = parse_tool_call("src.tools.transform.OverlayColor((0, 0, 255), 0.5)", reg)
        assert call.kwargs == {"color": [0, 0, 255], "opacity": 0.5}

    def test_duplicate_argument_rejected(self, reg):
        with pytest.raises(ToolValidationError, match="twice"):
            parse_tool_call("src.tools.transform.RotateImage(90, angle=180)", reg)

    def test_too_many_positionals(self, reg):
        with pytest.raises(ToolValidationError, match="at most"):
            parse_tool_call("src.tools.transform.RotateImage(90, 180)", reg)

    def test_non_literal_argument(self, reg):
        with pytest.raises(ToolValidationError, match="literal"):
            parse_tool_call("src.tools.transform.RotateImage(angle=foo())", reg)

    def test_malformed_string(self, reg):
        with pytest.raises(ToolValidationError, match="malformed"):
            parse_tool_call("src.tools.transform.RotateImage(90", reg)

    def test_not_a_call(self, reg):
        with pytest.raises(ToolValidationError, match="not a call"):
            parse_tool_call("src.tools.transform.RotateImage", reg)


class TestParseObjectForm:
    def test_identity_object(self, reg):
        call = parse_tool_call(
            {"module_path": "src.tools.transform", "name": "Identity", "kwargs": {}}, reg
        )
        assert call.full_name == "src.tools.transform.Identity"
        assert call.kwargs == {}

    def test_kwargs_optional(self, reg):
        call = parse_tool_call({"module_path": "src.tools.transform", "name": "Identity"}, reg)
        assert call.kwargs == {}

    def test_defaults_filled(self, reg):
        call = parse_tool_call(
            {
                "module_path": "src.tools.select",
                "name": "TextToImageRetrieval",
                "kwargs": {"class_name": "random"},
            },
            reg,
        )
        assert call.kwargs == {"class_name": "random", "image_type": "photo"}

    def test_missing_required_argument_path(self, reg):
        with pytest.raises(ToolValidationError, match="/kwargs/orientation"):
            parse_tool_call({"module_path": "src.tools.transform", "name": "FlipImage"}, reg)

    def test_wrong_type_path(self, reg):
        with pytest.raises(ToolValidationError, match="/kwargs/angle"):
            parse_tool_call(
                {
                    "module_path": "src.tools.transform",
                    "name": "RotateImage",
                    "kwargs": {"angle": "ninety"},
                },
                reg,
            )

    def test_unexpected_argument_path(self, reg):
        with pytest.raises(ToolValidationError, match="/kwargs/degrees"):
            parse_tool_call(
                {
                    "module_path": "src.tools.transform",
                    "name": "RotateImage",
                    "kwargs": {"degrees": 90},
                },
                reg,
            )

    def test_out_of_range_value(self, reg):
        with pytest.raises(ToolValidationError, match="/kwargs/opacity"):
            parse_tool_call(
                {
                    "module_path": "src.tools.transform",
                    "name": "OverlayColor",
                    "kwargs": {"color": [1, 2, 3], "opacity": 1.5},
                },
                reg,
            )

    def test_bad_choice_value(self, reg):
        with pytest.raises(ToolValidationError, match="/kwargs/orientation"):
            parse_tool_call(
                {
                    "module_path": "src.tools.transform",
                    "name": "FlipImage",
                    "kwargs": {"orientation": "diagonal"},
                },
                reg,
            )


class TestDocstringOp:
    def test_gaussian_noise_doc(self, reg):
        text = docstring(reg.get("src.tools.transform.AddGaussianNoise"))
        assert "The factor to multiply the variance of the sample." in text

    def test_zoom_doc(self, reg):
        text = docstring(reg.get("src.tools.transform.ZoomAtRandomPosition"))
        assert "The zoom factor. Defaults to 2.0." in text

    def test_retrieval_fallback_doc(self, reg):
        text = docstring(reg.get("src.tools.select.TextToImageRetrieval"))
        assert "retrieval is replaced\nby generation" in text


class TestRegistry:
    def test_twenty_tools_registered(self, reg):
        assert len(reg) == 20
        assert len(reg.select_names()) == 2
        assert len(reg.transform_names()) == 18

    def test_empty_docstring_rejected_by_validation(self):
        class Undocumented(Tool):
            MODULE_PATH = "src.tools.transform"
            ARGS = (ArgSpec("x", "int"),)

        registry = ToolRegistry()
        registry.register(Undocumented)
        with pytest.raises(ToolValidationError, match="empty docstring"):
            registry.validate()

    def test_empty_registry_rejected(self):
        with pytest.raises(ToolValidationError, match="empty"):
            ToolRegistry().validate()

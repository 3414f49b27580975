"""Numeric contracts of the transform tools, checked against independent oracles."""

from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image
from skimage.metrics import peak_signal_noise_ratio as skimage_psnr

from conftest import make_textured_image
from vqalab.errors import ToolExecutionError
from vqalab.images import CANVAS_SIZE, ImageBuffer
from vqalab.toolbox import apply_transform, default_registry, parse_tool_call
from vqalab.toolbox.transforms import JPEG_QUALITY_LADDER, defocus_blur_search

REG = default_registry()


def run(call_text: str, image: ImageBuffer, ctx) -> ImageBuffer:
    return apply_transform(parse_tool_call(call_text, REG), image, ctx)


def ref_psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Independent PSNR reference (scikit-image), peak 255 on 8-bit data."""
    return skimage_psnr(a.pixels, b.pixels, data_range=255)


def ref_sharpness(image: ImageBuffer) -> float:
    """Independent Laplacian-variance focus measure (manual convolution)."""
    f = image.pixels.astype(np.float64) / 255.0
    y = f @ np.array([0.299, 0.587, 0.114])
    p = np.pad(y, 1, mode="symmetric")
    response = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * y
    return float(response.var())


class TestInvolutionsAndIdentities:
    def test_identity_byte_copy(self, textured_image, transform_ctx):
        out = run("src.tools.transform.Identity()", textured_image, transform_ctx())
        assert out == textured_image
        assert out is not textured_image

    @pytest.mark.parametrize("orientation", ["horizontal", "vertical"])
    def test_flip_is_involution(self, orientation, textured_image, transform_ctx):
        call = f'src.tools.transform.FlipImage("{orientation}")'
        once = run(call, textured_image, transform_ctx())
        twice = run(call, once, transform_ctx())
        assert once != textured_image
        assert twice == textured_image

    def test_horizontal_flip_mirrors_left_right(self, transform_ctx):
        pixels = np.zeros((512, 512, 3), dtype=np.uint8)
        pixels[:, :10] = 255  # bright strip on the left
        out = run('src.tools.transform.FlipImage("horizontal")', ImageBuffer(pixels), transform_ctx())
        assert out.pixels[:, -10:].min() == 255
        assert out.pixels[:, :10].max() == 0

    def test_rotate_90_four_times(self, textured_image, transform_ctx):
        image = textured_image
        for _ in range(4):
            image = run("src.tools.transform.RotateImage(90)", image, transform_ctx())
        assert image == textured_image

    def test_rotate_zero_is_identity(self, textured_image, transform_ctx):
        assert run("src.tools.transform.RotateImage(0)", textured_image, transform_ctx()) == textured_image

    def test_rotate_90_then_minus_90(self, textured_image, transform_ctx):
        right = run("src.tools.transform.RotateImage(90)", textured_image, transform_ctx())
        back = run("src.tools.transform.RotateImage(-90)", right, transform_ctx())
        assert back == textured_image

    def test_rotate_90_is_clockwise(self, transform_ctx):
        pixels = np.zeros((512, 512, 3), dtype=np.uint8)
        pixels[:10, :10] = 255  # top-left marker
        out = run("src.tools.transform.RotateImage(90)", ImageBuffer(pixels), transform_ctx())
        assert out.pixels[:10, -10:].min() == 255  # lands top-right

    def test_overlay_zero_opacity_is_identity(self, textured_image, transform_ctx):
        out = run("src.tools.transform.OverlayColor([10, 200, 30], 0.0)", textured_image, transform_ctx())
        diff = np.abs(out.pixels.astype(int) - textured_image.pixels.astype(int))
        assert diff.max() <= 1

    def test_overlay_full_opacity_is_constant(self, textured_image, transform_ctx):
        out = run("src.tools.transform.OverlayColor([10, 200, 30], 1.0)", textured_image, transform_ctx())
        assert np.array_equal(out.pixels[0, 0], [10, 200, 30])
        assert out.pixels.std(axis=(0, 1)).max() == 0.0

    def test_mixup_alpha_one_is_identity(self, textured_image, transform_ctx):
        ctx = transform_ctx(companion=make_textured_image(99))
        out = run("src.tools.transform.ApplyMixUp(1.0)", textured_image, ctx)
        assert out == textured_image

    def test_mixup_alpha_zero_is_companion(self, textured_image, transform_ctx):
        companion = make_textured_image(99)
        ctx = transform_ctx(companion=companion)
        out = run("src.tools.transform.ApplyMixUp(0.0)", textured_image, ctx)
        diff = np.abs(out.pixels.astype(int) - companion.pixels.astype(int))
        assert diff.max() <= 1

    def test_brightness_one_is_identity(self, textured_image, transform_ctx):
        assert run("src.tools.transform.ChangeBrightness(1.0)", textured_image, transform_ctx()) == textured_image

    def test_contrast_one_is_identity(self, textured_image, transform_ctx):
        out = run("src.tools.transform.ChangeContrast(1.0)", textured_image, transform_ctx())
        diff = np.abs(out.pixels.astype(int) - textured_image.pixels.astype(int))
        assert diff.max() <= 1


class TestBrightnessContrastEndpoints:
    def test_brightness_zero_gives_black(self, textured_image, transform_ctx):
        out = run("src.tools.transform.ChangeBrightness(0.0)", textured_image, transform_ctx())
        assert out.pixels.max() == 0

    def test_contrast_zero_gives_solid_gray(self, textured_image, transform_ctx):
        out = run("src.tools.transform.ChangeContrast(0.0)", textured_image, transform_ctx())
        assert out.pixels.std(axis=(0, 1)).max() == 0.0  # one flat value everywhere


class TestGaussianNoise:
    def test_variance_ratio_within_ten_percent(self, textured_image, transform_ctx):
        out = run("src.tools.transform.AddGaussianNoise(1.4)", textured_image, transform_ctx(7))
        delta = out.to_float() - textured_image.to_float()
        achieved = delta.var() / textured_image.to_float().var()
        assert 0.9 * 0.4 <= achieved <= 1.1 * 0.4

    def test_factor_one_adds_nothing(self, textured_image, transform_ctx):
        out = run("src.tools.transform.AddGaussianNoise(1.0)", textured_image, transform_ctx(7))
        assert out == textured_image


class TestJPEGCompression:
    def _returned_quality(self, image: ImageBuffer, target: float) -> int:
        # replicate the ladder decision with the independent PSNR oracle
        for quality in JPEG_QUALITY_LADDER:
            buf = io.BytesIO()
            image.to_pil().save(buf, format="JPEG", quality=quality)
            buf.seek(0)
            decoded = ImageBuffer.from_pil(Image.open(buf))
            if ref_psnr(image, decoded) <= target:
                return quality
        return 1

    def test_target_reached_and_one_step_higher_does_not(self, textured_image, transform_ctx):
        target = 26.0
        out = run("src.tools.transform.AddJPEGCompression(26.0)", textured_image, transform_ctx())
        assert ref_psnr(textured_image, out) <= target
        quality = self._returned_quality(textured_image, target)
        assert quality < 95
        step_up = JPEG_QUALITY_LADDER[JPEG_QUALITY_LADDER.index(quality) - 1]
        buf = io.BytesIO()
        textured_image.to_pil().save(buf, format="JPEG", quality=step_up)
        buf.seek(0)
        higher = ImageBuffer.from_pil(Image.open(buf))
        assert ref_psnr(textured_image, higher) > target

    def test_unreachable_target_returns_quality_one(self, transform_ctx):
        flat = ImageBuffer(np.full((512, 512, 3), 128, dtype=np.uint8))
        out = run("src.tools.transform.AddJPEGCompression(5.0)", flat, transform_ctx())
        # flat images survive JPEG almost losslessly; the tool must still return
        buf = io.BytesIO()
        flat.to_pil().save(buf, format="JPEG", quality=1)
        buf.seek(0)
        assert out == ImageBuffer.from_pil(Image.open(buf))


class TestDefocusBlur:
    def test_sharpness_target_and_previous_step(self, textured_image):
        initial = ref_sharpness(textured_image)
        out, sigma, previous = defocus_blur_search(textured_image, 10.0)
        assert ref_sharpness(out) <= initial / 10.0
        assert previous is not None
        assert ref_sharpness(previous) > initial / 10.0
        assert sigma <= 32.0

    def test_tool_matches_search(self, textured_image, transform_ctx):
        out = run("src.tools.transform.DefocusBlurImage(10.0)", textured_image, transform_ctx())
        expected, _, _ = defocus_blur_search(textured_image, 10.0)
        assert out == expected


class TestShuffle:
    @pytest.mark.parametrize("grid", [2, 4, 8])
    def test_tile_multiset_preserved(self, grid, textured_image, transform_ctx):
        out = run(
            f"src.tools.transform.CropRandomShuffleAndRecompose({grid})",
            textured_image,
            transform_ctx(3),
        )
        tile = CANVAS_SIZE // grid

        def tiles(image):
            return sorted(
                image.pixels[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile].tobytes()
                for r in range(grid)
                for c in range(grid)
            )

        assert tiles(out) == tiles(textured_image)

    def test_grid_one_is_identity(self, textured_image, transform_ctx):
        out = run("src.tools.transform.CropRandomShuffleAndRecompose(1)", textured_image, transform_ctx())
        assert out == textured_image


class TestCutMix:
    def test_pixels_come_from_input_or_companion(self, textured_image, transform_ctx):
        companion = make_textured_image(42)
        ctx = transform_ctx(seed=5, companion=companion)
        out = run("src.tools.transform.ApplyCutMix(1.0)", textured_image, ctx)
        matches_input = (out.pixels == textured_image.pixels).all(axis=-1)
        matches_companion = (out.pixels == companion.pixels).all(axis=-1)
        assert (matches_input | matches_companion).all()
        assert matches_companion.any()  # something was pasted

    def test_pasted_region_is_one_rectangle(self, transform_ctx):
        black = ImageBuffer(np.zeros((512, 512, 3), dtype=np.uint8))
        white = ImageBuffer(np.full((512, 512, 3), 255, dtype=np.uint8))
        ctx = transform_ctx(seed=2, companion=white)
        out = run("src.tools.transform.ApplyCutMix(1.0)", black, ctx)
        rows = np.where(out.pixels[:, :, 0].max(axis=1) == 255)[0]
        cols = np.where(out.pixels[:, :, 0].max(axis=0) == 255)[0]
        if rows.size:  # lambda can make the patch empty
            region = out.pixels[rows.min() : rows.max() + 1, cols.min() : cols.max() + 1, 0]
            assert (region == 255).all()


class TestPasteTools:
    def test_shape_outline_color_present(self, textured_image, transform_ctx):
        out = run(
            'src.tools.transform.PasteGeometricShapeAtRandomPosition("circle", 48, (0, 255, 0), False, 1)',
            textured_image,
            transform_ctx(4),
        )
        mask = (out.pixels == np.array([0, 255, 0])).all(axis=-1)
        assert mask.any()

    def test_filled_square_area(self, transform_ctx):
        base = ImageBuffer(np.zeros((512, 512, 3), dtype=np.uint8))
        out = run(
            'src.tools.transform.PasteGeometricShapeAtRandomPosition("square", 48, (255, 0, 0), True, 1)',
            base,
            transform_ctx(4),
        )
        mask = (out.pixels == np.array([255, 0, 0])).all(axis=-1)
        assert mask.sum() == 48 * 48

    def test_text_paste_uses_font_color(self, transform_ctx):
        base = ImageBuffer(np.zeros((512, 512, 3), dtype=np.uint8))
        out = run(
            'src.tools.transform.PasteTextAtRandomPosition("Hello, world!", 48, (0, 0, 255), 1)',
            base,
            transform_ctx(4),
        )
        mask = (out.pixels == np.array([0, 0, 255])).all(axis=-1)
        assert mask.any()

    def test_generated_object_paste(self, textured_image, transform_ctx):
        out = run(
            'src.tools.transform.PasteGeneratedObjectAtRandomPosition("car", 128, 2)',
            textured_image,
            transform_ctx(4),
        )
        assert out != textured_image

    def test_object_paste_without_label_or_class_fails(self, textured_image, transform_ctx):
        call = parse_tool_call(
            {
                "module_path": "src.tools.transform",
                "name": "PasteGeneratedObjectAtRandomPosition",
                "kwargs": {"class_name": None, "size": 64, "repeat": 1},
            },
            REG,
        )
        with pytest.raises(ToolExecutionError, match="PasteGeneratedObjectAtRandomPosition"):
            apply_transform(call, textured_image, transform_ctx())


class TestRegenerationTools:
    def test_style_requires_label(self, textured_image, transform_ctx):
        with pytest.raises(ToolExecutionError, match="EditImageStyle"):
            run('src.tools.transform.EditImageStyle("sketch")', textured_image, transform_ctx())

    def test_style_regenerates_labeled_class(self, textured_image, transform_ctx, codebook):
        from vqalab.datasources import decode_barcode

        out = run(
            'src.tools.transform.EditImageStyle("sketch")',
            textured_image,
            transform_ctx(seed=9, label="car"),
        )
        assert codebook.name_of(decode_barcode(out)) == "car"

    def test_weather_regenerates_labeled_class(self, textured_image, transform_ctx, codebook):
        from vqalab.datasources import decode_barcode

        out = run(
            'src.tools.transform.EditImageWeather("snowy")',
            textured_image,
            transform_ctx(seed=9, label="truck"),
        )
        assert codebook.name_of(decode_barcode(out)) == "truck"


class TestPurity:
    @pytest.mark.parametrize(
        "call_text",
        [
            "src.tools.transform.AddGaussianNoise(1.4)",
            "src.tools.transform.CropRandomShuffleAndRecompose(4)",
            "src.tools.transform.ZoomAtRandomPosition(2.0)",
            'src.tools.transform.PasteTextAtRandomPosition("hi", 24, (255, 255, 255), 2)',
        ],
    )
    def test_same_seed_same_bytes_and_input_untouched(self, call_text, textured_image, transform_ctx):
        before = textured_image.tobytes()
        a = run(call_text, textured_image, transform_ctx(11))
        b = run(call_text, textured_image, transform_ctx(11))
        c = run(call_text, textured_image, transform_ctx(12))
        assert a == b
        assert a != c  # different stream, different randomness
        assert textured_image.tobytes() == before

    def test_zoom_output_is_canvas_sized(self, textured_image, transform_ctx):
        out = run("src.tools.transform.ZoomAtRandomPosition(4.0)", textured_image, transform_ctx(1))
        assert (out.width, out.height) == (CANVAS_SIZE, CANVAS_SIZE)

    def test_arbitrary_rotation_keeps_canvas(self, textured_image, transform_ctx):
        out = run("src.tools.transform.RotateImage(37)", textured_image, transform_ctx())
        assert (out.width, out.height) == (CANVAS_SIZE, CANVAS_SIZE)

"""The eighteen transform tools.

Class docstrings are exposed verbatim to the orchestrator (and golden-tested),
so they describe the tools in sample-dict terms even though the apply methods
here operate on ImageBuffer values. Numeric contracts:

- pixel math in float64 on [0, 1], quantized once on output;
- every random draw comes from the context rng, in the documented order;
- inputs are never mutated.
"""

from __future__ import annotations

import math

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from vqalab.errors import ToolExecutionError
from vqalab.images import (
    CANVAS_SIZE,
    ImageBuffer,
    gaussian_blur,
    jpeg_roundtrip,
    laplacian_sharpness,
    luma,
    psnr,
)
from vqalab.toolbox.base import ArgSpec, Tool, TransformContext

TRANSFORM_MODULE = "src.tools.transform"

# JPEG search ladder: quality 95 down to 5 in steps of 5, then 1.
JPEG_QUALITY_LADDER = tuple(range(95, 0, -5)) + (1,)

# Defocus blur search schedule.
BLUR_SIGMA_START = 0.5
BLUR_SIGMA_GROWTH = 1.25
BLUR_SIGMA_CAP = 32.0

STYLE_PROMPT = "a {style} of a {label}"
WEATHER_PROMPT = "a photo of a {label} in {weather} weather"
OBJECT_PROMPT = "a photo of a {class_name} on a plain white background"


class TransformTool(Tool):
    MODULE_PATH = TRANSFORM_MODULE

    def __call__(self, image: ImageBuffer, ctx: TransformContext) -> ImageBuffer:
        raise NotImplementedError


class AddGaussianNoise(TransformTool):
    """Add Gaussian noise to the input sample.

    Args:
    ----
    variance_factor (float): The factor to multiply the variance of the sample.
    Defaults to 1.4.

    Examples:
    --------
    Add Gaussian noise to the sample:
    >>> noise = AddGaussianNoise()
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_noise = noise(sample)
    """

    ARGS = (ArgSpec("variance_factor", "float", default=1.4, minimum=1.0),)

    def __call__(self, image, ctx):
        # Output variance lands near variance_factor * input variance because
        # the variances of the image and of independent noise add.
        pixels = image.to_float()
        noise_var = (self.variance_factor - 1.0) * float(pixels.var())
        noisy = pixels + ctx.rng.normal(0.0, math.sqrt(noise_var), size=pixels.shape)
        return ImageBuffer.from_float(noisy)


class AddJPEGCompression(TransformTool):
    """Iteratively compress the sample until its peak signal-to-noise ratio reaches a target.

    Args:
    ----
    target_psnr (float): The target PSNR. Defaults to 26.0.

    Examples:
    --------
    Apply JPEG compression to the sample:
    >>> jpeg = AddJPEGCompression()
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_jpeg = jpeg(sample)
    """

    ARGS = (ArgSpec("target_psnr", "float", default=26.0, minimum=0.0),)

    def __call__(self, image, ctx):
        result = None
        for quality in JPEG_QUALITY_LADDER:
            result = jpeg_roundtrip(image, quality)
            if psnr(image, result) <= self.target_psnr:
                return result
        return result  # even quality 1 stayed above the target


class ApplyCutMix(TransformTool):
    """Paste on the input sample a random region of another sample.

    Args:
    ----
    alpha (float): Beta distribution parameter. Defaults to 1.0.

    Examples:
    --------
    Paste a random region of another sample on the sample:
    >>> cutmix = ApplyCutMix()
    >>> sample = {"_parent": src.data.ImageDataset(), "images_tensor": torch.rand(3, 256, 256)}
    >>> sample_cutmix = cutmix(sample)
    """

    ARGS = (ArgSpec("alpha", "float", default=1.0, minimum=1e-6),)

    def __call__(self, image, ctx):
        # Draw order: mixing ratio, companion sample, then patch center.
        lam = float(ctx.rng.beta(self.alpha, self.alpha))
        side = int(round(CANVAS_SIZE * math.sqrt(1.0 - lam)))
        companion = ctx.companion("ApplyCutMix")
        cx = int(ctx.rng.integers(0, CANVAS_SIZE))
        cy = int(ctx.rng.integers(0, CANVAS_SIZE))
        if side <= 0:
            return image.copy()
        x1 = max(cx - side // 2, 0)
        y1 = max(cy - side // 2, 0)
        x2 = min(cx - side // 2 + side, CANVAS_SIZE)
        y2 = min(cy - side // 2 + side, CANVAS_SIZE)
        out = np.array(image.pixels)
        out[y1:y2, x1:x2] = companion.pixels[y1:y2, x1:x2]
        return ImageBuffer(out)


class ApplyMixUp(TransformTool):
    """Mix the input sample with another sample randomly chosen from the dataset.

    Args:
    ----
    alpha (float): The mixing coefficient. Defaults to 0.7.

    Examples:
    --------
    Mix the sample with another sample:
    >>> mixup = ApplyMixUp()
    >>> sample = {"_parent": src.data.ImageDataset(), "images_tensor": torch.rand(3, 256, 256)}
    >>> sample_mixup = mixup(sample)
    """

    ARGS = (ArgSpec("alpha", "float", default=0.7, minimum=0.0, maximum=1.0),)

    def __call__(self, image, ctx):
        companion = ctx.companion("ApplyMixUp")
        mixed = self.alpha * image.to_float() + (1.0 - self.alpha) * companion.to_float()
        return ImageBuffer.from_float(mixed)


class ChangeBrightness(TransformTool):
    """Adjust the brightness of the input sample.

    Args:
    ----
    brightness_factor (float): How much to adjust the brightness. Can be any non-negative
    number. 0 gives a black image, 1 gives the original image while 2 increases the
    brightness by a factor of 2.

    Examples:
    --------
    Increase the brightness of the sample:
    >>> bright = ChangeBrightness(1.5)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_bright = bright(sample)

    Decrease the brightness of the sample:
    >>> bright = ChangeBrightness(0.5)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_bright = bright(sample)
    """

    ARGS = (ArgSpec("brightness_factor", "float", minimum=0.0),)

    def __call__(self, image, ctx):
        return ImageBuffer.from_float(self.brightness_factor * image.to_float())


class ChangeContrast(TransformTool):
    """Adjust the contrast of the input sample.

    Args:
    ----
    contrast_factor (float): How much to adjust the contrast. Can be any non-negative number.
    0 gives a solid gray image, 1 gives the original image while 2 increases the contrast
    by a factor of 2.

    Examples:
    --------
    Increase the contrast of the sample:
    >>> contrast = ChangeContrast(1.5)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_contrast = contrast(sample)

    Decrease the contrast of the sample:
    >>> contrast = ChangeContrast(0.5)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_contrast = contrast(sample)
    """

    ARGS = (ArgSpec("contrast_factor", "float", minimum=0.0),)

    def __call__(self, image, ctx):
        pixels = image.to_float()
        gray = float(luma(pixels).mean())
        return ImageBuffer.from_float(gray + self.contrast_factor * (pixels - gray))


class CropRandomShuffleAndRecompose(TransformTool):
    """Crop the sample into a grid of patches and randomly shuffle them spatially.

    Args:
    ----
    grid_size (int): The size of the grid. Defaults to 2.

    Examples:
    --------
    Crop the sample into a 3x3 grid and reshuffle the patches:
    >>> patch = CropRandomShuffleAndRecompose(3)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> img_patch = patch(img)
    """

    ARGS = (ArgSpec("grid_size", "int", default=2, minimum=1, maximum=8),)

    def __call__(self, image, ctx):
        # Equal tiles of side 512 // grid_size; for grid sizes that do not
        # divide the canvas, the residual right/bottom strip stays in place.
        g = self.grid_size
        tile = CANVAS_SIZE // g
        out = np.array(image.pixels)  # residual strip (if any) stays in place
        perm = ctx.rng.permutation(g * g)
        tiles = [
            image.pixels[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile]
            for r in range(g)
            for c in range(g)
        ]
        for slot, src_idx in enumerate(perm):
            r, c = divmod(slot, g)
            out[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile] = tiles[src_idx]
        return ImageBuffer(out)


class DefocusBlurImage(TransformTool):
    """Blur the input sample using a Gaussian filter.

    Args:
    ----
    blur_factor (float): Estimate the target blur level as the initial sharpness level divided
    by the blur factor. Defaults to 10.0.

    Examples:
    --------
    Apply gaussian blur to the sample:
    >>> blur = DefocusBlurImage()
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_blur = blur(sample)
    """

    ARGS = (ArgSpec("blur_factor", "float", default=10.0, minimum=1e-6),)

    def __call__(self, image, ctx):
        result, _, _ = defocus_blur_search(image, self.blur_factor)
        return result


def defocus_blur_search(image: ImageBuffer, blur_factor: float):
    """Search the blur schedule until sharpness drops to initial / blur_factor.

    Sharpness is the Laplacian-variance focus measure. Sigma starts at 0.5 and
    multiplies by 1.25 per step, capped at 32. Returns (output, sigma used,
    previous coarser candidate or None when the first sigma already sufficed).
    """
    target = laplacian_sharpness(image) / blur_factor
    sigma = BLUR_SIGMA_START
    previous = None
    while True:
        candidate = gaussian_blur(image, sigma)
        if laplacian_sharpness(candidate) <= target or sigma >= BLUR_SIGMA_CAP:
            return candidate, sigma, previous
        previous = candidate
        sigma = min(sigma * BLUR_SIGMA_GROWTH, BLUR_SIGMA_CAP)


class EditImageStyle(TransformTool):
    """Regenerate an image with the input sample label and a specific style.

    Args:
    ----
    style (str): The visual style to apply to the sample.

    Examples:
    --------
    Generate an image given a label name in the style of a sculpture:
    >>> style = EditImageStyle("sculpture")
    >>> sample = {"labels_class_name": "cat"}
    >>> sample_style = style(sample)

    Generate an image given a label name in the style of a tattoo:
    >>> style = EditImageStyle("tattoo")
    >>> sample = {"labels_class_name": "dog"}
    >>> sample_style = style(sample)
    """

    ARGS = (ArgSpec("style", "str"),)

    def __call__(self, image, ctx):
        prompt = STYLE_PROMPT.format(style=self.style, label=ctx.label("EditImageStyle"))
        seed = int(ctx.rng.integers(0, 2**63))
        return ctx.generator("EditImageStyle").generate_image(
            prompt, seed, CANVAS_SIZE, CANVAS_SIZE
        )


class EditImageWeather(TransformTool):
    """Regenerate an image with the input sample label and a specific weather.

    Args:
    ----
    weather (str): The weather to apply to the sample.

    Examples:
    --------
    Generate an image given a label name in a rainy weather:
    >>> weather = EditImageWeather("rainy")
    >>> sample = {"labels_class_name": "cat"}
    >>> sample_weather = weather(sample)

    Generate an image given a label name in a snowy weather:
    >>> weather = EditImageWeather("snowy")
    >>> sample = {"labels_class_name": "dog"}
    >>> sample_weather = weather(sample)
    """

    ARGS = (ArgSpec("weather", "str"),)

    def __call__(self, image, ctx):
        prompt = WEATHER_PROMPT.format(
            label=ctx.label("EditImageWeather"), weather=self.weather
        )
        seed = int(ctx.rng.integers(0, 2**63))
        return ctx.generator("EditImageWeather").generate_image(
            prompt, seed, CANVAS_SIZE, CANVAS_SIZE
        )


class FlipImage(TransformTool):
    """Flip the input sample.

    Args:
    ----
    orientation ("horizontal" | "vertical"): The orientation of the flip.

    Examples:
    --------
    Flip the sample horizontally:
    >>> flip = FlipImage("horizontal")
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_flip = flip(sample)

    Flip the sample vertically:
    >>> flip = FlipImage("vertical")
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_flip = flip(sample)
    """

    ARGS = (ArgSpec("orientation", "str", choices=("horizontal", "vertical")),)

    def __call__(self, image, ctx):
        if self.orientation == "horizontal":
            return ImageBuffer(image.pixels[:, ::-1])  # mirror left-right
        return ImageBuffer(image.pixels[::-1, :])  # mirror top-bottom


class Identity(TransformTool):
    """Do not apply any transform and return the input sample.

    Args:
    ----
    None

    Examples:
    --------
    Apply the identity transformation to the sample:
    >>> identity = Identity()
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_identity = identity(sample)
    """

    ARGS = ()

    def __call__(self, image, ctx):
        return image.copy()


class OverlayColor(TransformTool):
    """Overlay a color on the input sample.

    Args:
    ----
    color (tuple[int, int, int]): The RGB color to apply to the sample.
    opacity (float): The opacity of the color, between 0 and 1.

    Examples:
    --------
    Add a red color with 50
    >>> color = OverlayColor((255, 0, 0), 0.5)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_color = color(sample)

    Add a blue color with 100
    >>> color = OverlayColor((0, 0, 255))
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_color = color(sample)
    """

    ARGS = (
        ArgSpec("color", "color"),
        ArgSpec("opacity", "float", default=1.0, minimum=0.0, maximum=1.0),
    )

    def __call__(self, image, ctx):
        tint = np.array(self.color, dtype=np.float64) / 255.0
        blended = (1.0 - self.opacity) * image.to_float() + self.opacity * tint
        return ImageBuffer.from_float(blended)


class PasteGeneratedObjectAtRandomPosition(TransformTool):
    """Paste a generated object on a random region of the input sample.

    Args:
    ----
    class_name (str | None): The name of the object to paste on the sample.
    size (int): The size of the object.
    repeat (int): The number of objects to paste.

    Examples:
    --------
    Paste one cat object on the sample:
    >>> paste_object = PasteGeneratedObjectAtRandomPosition("cat", 256, 1)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_paste_object = paste_object(sample)

    Paste two dogs on the sample:
    >>> paste_object = PasteGeneratedObjectAtRandomPosition("dog", 256, 2)
    >>> sample = {"_parent": src.data.ImageDataset(), "images_tensor": torch.rand(3, 256, 256)}
    >>> sample_paste_object = paste_object(sample)
    """

    ARGS = (
        ArgSpec("class_name", "optional_str", default=None),
        ArgSpec("size", "int", minimum=1, maximum=CANVAS_SIZE),
        ArgSpec("repeat", "int", minimum=1),
    )

    def __call__(self, image, ctx):
        name = self.class_name or ctx.sample_label
        if not name:
            raise ToolExecutionError(
                "PasteGeneratedObjectAtRandomPosition requires class_name or a labeled sample"
            )
        seed = int(ctx.rng.integers(0, 2**63))
        obj = ctx.generator("PasteGeneratedObjectAtRandomPosition").generate_image(
            OBJECT_PROMPT.format(class_name=name), seed, self.size, self.size
        )
        out = np.array(image.pixels)
        for _ in range(self.repeat):
            x = int(ctx.rng.integers(0, CANVAS_SIZE - self.size + 1))
            y = int(ctx.rng.integers(0, CANVAS_SIZE - self.size + 1))
            out[y : y + self.size, x : x + self.size] = obj.pixels
        return ImageBuffer(out)


class PasteGeometricShapeAtRandomPosition(TransformTool):
    """Paste a shape on a random region of the input sample.

    Args:
    ----
    shape ("circle", "square", "triangle"): The shape to paste on the sample.
    size (int): The size of the object.
    color (tuple[int, int, int]): The RGB color of the object.
    fill (bool): Whether to fill the object.
    repeat (int): The number of shapes to paste.

    Examples:
    --------
    Paste a green circle on the sample:
    >>> paste_shape = PasteGeometricShapeAtRandomPosition("circle", 48, (0, 255, 0), False, 1)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_paste_shape = paste_shape(sample)

    Paste three red square on the sample:
    >>> paste_shape = PasteGeometricShapeAtRandomPosition("square", 48, (255, 0, 0), False, 3)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_paste_shape = paste_shape(sample)
    """

    ARGS = (
        ArgSpec("shape", "str", choices=("circle", "square", "triangle")),
        ArgSpec("size", "int", minimum=2, maximum=CANVAS_SIZE),
        ArgSpec("color", "color"),
        ArgSpec("fill", "bool"),
        ArgSpec("repeat", "int", minimum=1),
    )

    def __call__(self, image, ctx):
        pil = image.to_pil()
        draw = ImageDraw.Draw(pil)
        color = tuple(self.color)
        stroke = max(1, self.size // 16)
        for _ in range(self.repeat):
            x = int(ctx.rng.integers(0, CANVAS_SIZE - self.size + 1))
            y = int(ctx.rng.integers(0, CANVAS_SIZE - self.size + 1))
            box = (x, y, x + self.size - 1, y + self.size - 1)
            if self.shape == "circle":
                if self.fill:
                    draw.ellipse(box, fill=color)
                else:
                    draw.ellipse(box, outline=color, width=stroke)
            elif self.shape == "square":
                if self.fill:
                    draw.rectangle(box, fill=color)
                else:
                    draw.rectangle(box, outline=color, width=stroke)
            else:  # triangle, point up
                points = [
                    (x + self.size // 2, y),
                    (x, y + self.size - 1),
                    (x + self.size - 1, y + self.size - 1),
                ]
                if self.fill:
                    draw.polygon(points, fill=color)
                else:
                    draw.line(points + [points[0]], fill=color, width=stroke)
        return ImageBuffer.from_pil(pil)


class PasteTextAtRandomPosition(TransformTool):
    """Paste text on a random region of the input sample.

    Args:
    ----
    text (str): The text to paste on the sample.
    font_size (int): The font size of the text.
    font_color (tuple[int, int, int]): The RGB color of the text.
    repeat (int): The number of text to paste.

    Examples:
    --------
    Paste a blue "Hello, world!" text once on the sample:
    >>> paste_text = PasteTextAtRandomPosition("Hello, world!", 48, (0, 0, 255), 1)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_paste_text = paste_text(sample)
    """

    ARGS = (
        ArgSpec("text", "str"),
        ArgSpec("font_size", "int", minimum=4, maximum=CANVAS_SIZE),
        ArgSpec("font_color", "color"),
        ArgSpec("repeat", "int", minimum=1),
    )

    def __call__(self, image, ctx):
        mask = _render_text_mask(self.text, self.font_size)
        th, tw = mask.shape
        out = np.array(image.pixels)
        color = np.array(self.font_color, dtype=np.uint8)
        for _ in range(self.repeat):
            x = int(ctx.rng.integers(0, max(CANVAS_SIZE - tw, 0) + 1))
            y = int(ctx.rng.integers(0, max(CANVAS_SIZE - th, 0) + 1))
            region = out[y : y + th, x : x + tw]
            clipped = mask[: region.shape[0], : region.shape[1]]
            region[clipped] = color
        return ImageBuffer(out)


def _render_text_mask(text: str, font_size: int) -> np.ndarray:
    """Rasterize text with the embedded bitmap font, nearest-scaled to font_size."""
    font = ImageFont.load_default()
    raw = font.getmask(text, mode="L")
    if raw.size[0] == 0 or raw.size[1] == 0:
        raise ToolExecutionError("PasteTextAtRandomPosition cannot render empty text")
    base = Image.frombytes("L", raw.size, bytes(raw))
    scale = font_size / base.height
    width = max(1, min(int(round(base.width * scale)), CANVAS_SIZE))
    scaled = base.resize((width, font_size), Image.NEAREST)
    return np.asarray(scaled) > 127


class RotateImage(TransformTool):
    """Rotate the input sample.

    Args:
    ----
    angle (int): The angle of rotation.

    Examples:
    --------
    Rotate the sample to the right:
    >>> rotate = RotateImage(90)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_rotate = rotate(sample)

    Rotate the sample to the left:
    >>> rotate = RotateImage(-90)
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_rotate = rotate(sample)
    """

    ARGS = (ArgSpec("angle", "int"),)

    def __call__(self, image, ctx):
        # Positive angle rotates clockwise. Multiples of 90 rotate exactly on
        # the square canvas; other angles use bilinear sampling, black fill.
        if self.angle % 90 == 0:
            quarter_turns = (self.angle // 90) % 4
            return ImageBuffer(np.rot90(image.pixels, k=-quarter_turns))
        rotated = image.to_pil().rotate(
            -self.angle, resample=Image.BILINEAR, fillcolor=(0, 0, 0)
        )
        return ImageBuffer.from_pil(rotated)


class ZoomAtRandomPosition(TransformTool):
    """Zoom on a random region of the input sample.

    Args:
    ----
    zoom_factor (float): The zoom factor. Defaults to 2.0.

    Examples:
    --------
    Zoom on a random region of the sample:
    >>> zoom = ZoomAtRandomPosition()
    >>> sample = {"images_tensor": torch.rand(3, 256, 256)}
    >>> sample_zoom = zoom(sample)
    """

    ARGS = (ArgSpec("zoom_factor", "float", default=2.0, minimum=1.0, maximum=CANVAS_SIZE),)

    def __call__(self, image, ctx):
        window = max(1, int(round(CANVAS_SIZE / self.zoom_factor)))
        x = int(ctx.rng.integers(0, CANVAS_SIZE - window + 1))
        y = int(ctx.rng.integers(0, CANVAS_SIZE - window + 1))
        crop = image.to_pil().crop((x, y, x + window, y + window))
        return ImageBuffer.from_pil(crop.resize((CANVAS_SIZE, CANVAS_SIZE), Image.BILINEAR))


TRANSFORM_TOOLS = (
    AddGaussianNoise,
    AddJPEGCompression,
    ApplyCutMix,
    ApplyMixUp,
    ChangeBrightness,
    ChangeContrast,
    CropRandomShuffleAndRecompose,
    DefocusBlurImage,
    EditImageStyle,
    EditImageWeather,
    FlipImage,
    Identity,
    OverlayColor,
    PasteGeneratedObjectAtRandomPosition,
    PasteGeometricShapeAtRandomPosition,
    PasteTextAtRandomPosition,
    RotateImage,
    ZoomAtRandomPosition,
)

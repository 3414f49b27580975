"""Fixed-size RGB raster type and the pixel math shared by the transform tools.

Every image that crosses a module boundary is a 512x512, 8-bit, 3-channel
buffer. Pixel math happens in float64 on a [0, 1] scale and is re-quantized
with round-half-away clipping on the way out.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image
from scipy import ndimage

CANVAS_SIZE = 512
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])  # Rec. 601
LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


class ImageBuffer:
    """Immutable row-major RGB image, 8 bits per channel."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.array(pixels, dtype=np.uint8, copy=True, order="C")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixel array, got shape {arr.shape}")
        arr.setflags(write=False)
        self._pixels = arr

    @property
    def pixels(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self._pixels)

    def to_float(self) -> np.ndarray:
        """Writable float64 copy scaled to [0, 1]."""
        return self._pixels.astype(np.float64) / 255.0

    @classmethod
    def from_float(cls, arr: np.ndarray) -> "ImageBuffer":
        quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
        return cls(quantized)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self._pixels, mode="RGB")

    @classmethod
    def from_pil(cls, img: Image.Image) -> "ImageBuffer":
        return cls(np.asarray(img.convert("RGB")))

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.to_pil().save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "ImageBuffer":
        return cls.from_pil(Image.open(io.BytesIO(data)))

    def tobytes(self) -> bytes:
        return self._pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and np.array_equal(
            self._pixels, other._pixels
        )

    def __hash__(self):
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height})"


def standardize(img: Image.Image | ImageBuffer) -> ImageBuffer:
    """Center-crop to square and resize to the 512x512 canvas.

    Images that are already canvas-sized pass through untouched so that
    pixel-exact fixtures survive loading.
    """
    if isinstance(img, ImageBuffer):
        if img.width == CANVAS_SIZE and img.height == CANVAS_SIZE:
            return img.copy()
        pil = img.to_pil()
    else:
        pil = img.convert("RGB")
        if pil.size == (CANVAS_SIZE, CANVAS_SIZE):
            return ImageBuffer.from_pil(pil)
    w, h = pil.size
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    pil = pil.crop((left, top, left + side, top + side))
    pil = pil.resize((CANVAS_SIZE, CANVAS_SIZE), Image.BILINEAR)
    return ImageBuffer.from_pil(pil)


def load_image(path) -> ImageBuffer:
    with Image.open(path) as img:
        return standardize(img)


def psnr(reference: ImageBuffer, candidate: ImageBuffer) -> float:
    """Peak signal-to-noise ratio, peak value 255 on 8-bit data."""
    a = reference.pixels.astype(np.float64)
    b = candidate.pixels.astype(np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)


def luma(float_pixels: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of a [0, 1] float image."""
    return float_pixels @ LUMA_WEIGHTS


def laplacian_sharpness(image: ImageBuffer) -> float:
    """Variance of the 3x3 Laplacian response on luma (standard focus measure)."""
    response = ndimage.convolve(luma(image.to_float()), LAPLACIAN_KERNEL, mode="reflect")
    return float(response.var())


def gaussian_blur(image: ImageBuffer, sigma: float) -> ImageBuffer:
    arr = ndimage.gaussian_filter(image.to_float(), sigma=(sigma, sigma, 0), mode="reflect")
    return ImageBuffer.from_float(arr)


def jpeg_roundtrip(image: ImageBuffer, quality: int) -> ImageBuffer:
    buf = io.BytesIO()
    image.to_pil().save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    return ImageBuffer.from_pil(Image.open(buf))

"""Class manifest, select tools execution, mock generator, and dataset builder.

The manifest indexes a local image corpus by class name and metaclass group.
The mock generator is the hermetic stand-in for the text-to-image backend: it
paints a class-coded image whose bottom-right corner carries a decodable
"barcode" so tests can recover ground truth end to end.
"""

from __future__ import annotations

import colorsys
import json
import logging
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from vqalab.errors import ConfigurationError, DatasetBuildError, ToolValidationError
from vqalab.images import CANVAS_SIZE, ImageBuffer, load_image
from vqalab.report import Experiment
from vqalab.toolbox import (
    GenerationHandle,
    ToolCall,
    TransformContext,
    apply_transform,
)
from vqalab.toolbox.select import SELECT_MODULE

logger = logging.getLogger(__name__)

GENERATION_PROMPT = "a {image_type} of a {class_name}"
RANDOM_KEYWORD = "random"


def normalize_class_name(name: str) -> str:
    return " ".join(name.strip().lower().split())


@dataclass(frozen=True)
class ImageRecord:
    path: str
    image_type: str = "photo"


@dataclass(frozen=True)
class ManifestClass:
    name: str
    metaclasses: tuple[str, ...]
    images: tuple[ImageRecord, ...]


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple[ManifestClass, ...]
    root: Path

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def lookup(self, name: str) -> Optional[ManifestClass]:
        name = normalize_class_name(name)
        for cls in self.classes:
            if cls.name == name:
                return cls
        return None

    @property
    def metaclasses(self) -> dict[str, tuple[str, ...]]:
        """Metaclass group -> member class names, derived from per-class tags."""
        groups: dict[str, list[str]] = {}
        for cls in self.classes:
            for tag in cls.metaclasses:
                groups.setdefault(tag, []).append(cls.name)
        return {g: tuple(members) for g, members in sorted(groups.items())}

    def retrieval_pool(self) -> tuple[str, ...]:
        """Classes that have at least one usable image on disk."""
        return tuple(c.name for c in self.classes if c.images)


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest file.

    Class names are normalized (lowercase, trimmed, collapsed whitespace) and
    must be unique. Unreadable image paths are logged and dropped; a class
    whose declared images all vanish stays addressable for generation but
    leaves the retrieval pool.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot load manifest {path}: {exc}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("classes"), list):
        raise ConfigurationError(f"manifest {path}: expected an object with a 'classes' list")
    root = path.parent
    classes = []
    seen = set()
    for i, c in enumerate(obj["classes"]):
        if not isinstance(c, dict) or not isinstance(c.get("name"), str):
            raise ConfigurationError(f"manifest {path}: classes[{i}] needs a string 'name'")
        name = normalize_class_name(c["name"])
        if name in seen:
            raise ConfigurationError(f"manifest {path}: duplicate class name {name!r}")
        seen.add(name)
        meta = tuple(normalize_class_name(m) for m in c.get("metaclasses", []))
        records = []
        for j, img in enumerate(c.get("images", [])):
            if not isinstance(img, dict) or not isinstance(img.get("path"), str):
                raise ConfigurationError(
                    f"manifest {path}: classes[{i}].images[{j}] needs a string 'path'"
                )
            img_path = root / img["path"]
            if not img_path.exists():
                logger.warning("manifest %s: dropping unreadable image %s", path, img_path)
                continue
            records.append(ImageRecord(str(img_path), img.get("image_type", "photo")))
        classes.append(ManifestClass(name, meta, tuple(records)))
    if not classes:
        raise ConfigurationError(f"manifest {path}: no classes defined")
    return DatasetManifest(tuple(classes), root)


# --- mock generator and its barcode ----------------------------------------

BARCODE_SIZE = 64
BARCODE_GRID = 4
BARCODE_CELL = BARCODE_SIZE // BARCODE_GRID
UNKNOWN_CLASS_INDEX = 255

# Fixed marker cells, (row, col) -> bit. The corner pattern rejects every
# rotation and reflection except the transpose, which the (0,1)/(1,0) pair
# kills; orientation is therefore resolved structurally, independent of data.
_BARCODE_MARKERS = {
    (0, 0): 1,
    (0, 1): 1,
    (1, 0): 0,
    (0, 3): 0,
    (3, 0): 0,
    (3, 3): 0,
}
_BARCODE_DATA_CELLS = ((0, 2), (1, 1), (1, 2), (1, 3), (2, 0), (2, 1), (2, 2), (2, 3))
_BARCODE_CHECK_CELLS = ((3, 1), (3, 2))


class Codebook:
    """Stable class-name <-> index mapping used by the mock generator."""

    def __init__(self, class_names):
        names = sorted({normalize_class_name(n) for n in class_names})
        if len(names) > UNKNOWN_CLASS_INDEX:
            raise ConfigurationError(
                f"mock codebook supports at most {UNKNOWN_CLASS_INDEX} classes, got {len(names)}"
            )
        self._names = tuple(names)
        self._index = {n: i for i, n in enumerate(self._names)}

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> "Codebook":
        return cls(manifest.class_names)

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def index_of(self, class_name: str) -> int:
        return self._index.get(normalize_class_name(class_name), UNKNOWN_CLASS_INDEX)

    def name_of(self, index: int) -> Optional[str]:
        if 0 <= index < len(self._names):
            return self._names[index]
        return None


def _barcode_check(index: int) -> int:
    return (bin(index & 0xFF).count("1") + 1) % 4


def _cell_grid(index: int) -> dict[tuple[int, int], int]:
    cells = dict(_BARCODE_MARKERS)
    for i, pos in enumerate(_BARCODE_DATA_CELLS):
        cells[pos] = (index >> (7 - i)) & 1
    check = _barcode_check(index)
    cells[_BARCODE_CHECK_CELLS[0]] = (check >> 1) & 1
    cells[_BARCODE_CHECK_CELLS[1]] = check & 1
    return cells


def barcode_tile(index: int) -> np.ndarray:
    """64x64 RGB block encoding an 8-bit index: markers, data, checksum cells."""
    tile = np.zeros((BARCODE_SIZE, BARCODE_SIZE, 3), dtype=np.uint8)
    for (r, c), bit in _cell_grid(index).items():
        value = 0 if bit else 255  # bit 1 = black cell
        tile[
            r * BARCODE_CELL : (r + 1) * BARCODE_CELL,
            c * BARCODE_CELL : (c + 1) * BARCODE_CELL,
        ] = value
    return tile


def _read_cells(block: np.ndarray) -> Optional[dict[tuple[int, int], int]]:
    bits = {}
    for r in range(BARCODE_GRID):
        for c in range(BARCODE_GRID):
            region = block[
                r * BARCODE_CELL : (r + 1) * BARCODE_CELL,
                c * BARCODE_CELL : (c + 1) * BARCODE_CELL,
            ].astype(np.float64)
            if region.std() > 8.0:
                return None
            mean = region.mean()
            if mean < 64.0:
                bits[(r, c)] = 1
            elif mean > 192.0:
                bits[(r, c)] = 0
            else:
                return None
    return bits


def _bits_to_index(bits: dict[tuple[int, int], int]) -> Optional[int]:
    for pos, expected in _BARCODE_MARKERS.items():
        if bits[pos] != expected:
            return None
    data = 0
    for pos in _BARCODE_DATA_CELLS:
        data = (data << 1) | bits[pos]
    check = (bits[_BARCODE_CHECK_CELLS[0]] << 1) | bits[_BARCODE_CHECK_CELLS[1]]
    if check != _barcode_check(data):
        return None
    return data


def decode_barcode(image: ImageBuffer) -> Optional[int]:
    """Recover the encoded class index, scanning all four corners in both reflections.

    Returns None when no corner yields a consistent reading (destructive
    transforms) or when readings disagree.
    """
    px = image.pixels
    s = BARCODE_SIZE
    corners = (
        px[-s:, -s:],
        px[-s:, :s],
        px[:s, -s:],
        px[:s, :s],
    )
    candidates = set()
    for corner in corners:
        for k in range(4):
            rotated = np.rot90(corner, k)
            for block in (rotated, rotated[:, ::-1]):
                bits = _read_cells(block)
                if bits is None:
                    continue
                index = _bits_to_index(bits)
                if index is not None:
                    candidates.add(index)
    if len(candidates) == 1:
        return candidates.pop()
    return None


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def mock_generate(
    codebook: Codebook, class_name: str, image_type: str = "photo", seed: int = 0
) -> ImageBuffer:
    """Deterministic stand-in for the diffusion backend.

    Background hue derives from the class index; the bottom-right corner holds
    the class barcode. Unknown classes get the reserved index 255.
    """
    index = codebook.index_of(class_name)
    rng = np.random.default_rng(
        [index, _stable_hash(normalize_class_name(image_type)), abs(int(seed))]
    )
    hue = ((index * 37) % 256) / 256.0
    type_shift = (_stable_hash(normalize_class_name(image_type)) % 83) / 830.0
    r, g, b = colorsys.hsv_to_rgb((hue + type_shift) % 1.0, 0.45, 0.88)
    canvas = np.empty((CANVAS_SIZE, CANVAS_SIZE, 3), dtype=np.uint8)
    canvas[..., 0] = int(r * 255)
    canvas[..., 1] = int(g * 255)
    canvas[..., 2] = int(b * 255)
    # a few flat shapes so different seeds give visibly different images
    for _ in range(3):
        sr, sg, sb = colorsys.hsv_to_rgb(
            (hue + float(rng.uniform(0.25, 0.75))) % 1.0, 0.6, 0.75
        )
        side = int(rng.integers(48, 160))
        x = int(rng.integers(0, CANVAS_SIZE - side))
        y = int(rng.integers(0, CANVAS_SIZE - side))
        canvas[y : y + side, x : x + side] = (int(sr * 255), int(sg * 255), int(sb * 255))
    canvas[-BARCODE_SIZE:, -BARCODE_SIZE:] = barcode_tile(index)
    return ImageBuffer(canvas)


_PROMPT_RE = re.compile(r"an? (?P<image_type>.+?) of an? (?P<rest>.+)", re.DOTALL)
_OBJECT_SUFFIX = " on a plain white background"
_WEATHER_RE = re.compile(r"(?P<cls>.+) in (?P<weather>.+) weather$")


def parse_generation_prompt(prompt: str) -> tuple[str, str]:
    """Best-effort (class_name, image_type) split of the fixed prompt templates.

    Unrecognized prompts map the whole text to the class slot, which the mock
    codebook resolves to the reserved unknown index.
    """
    m = _PROMPT_RE.fullmatch(prompt.strip())
    if not m:
        return prompt.strip(), "photo"
    image_type = m.group("image_type")
    rest = m.group("rest")
    if rest.endswith(_OBJECT_SUFFIX):
        rest = rest[: -len(_OBJECT_SUFFIX)]
    w = _WEATHER_RE.fullmatch(rest)
    if w:
        rest = w.group("cls")
        image_type = f"{image_type}, {w.group('weather')} weather"
    return rest.strip(), image_type.strip()


# --- samples and the benchmark builder -------------------------------------


@dataclass(frozen=True)
class DatasetSample:
    image: ImageBuffer
    class_name: Optional[str] = None
    image_type: str = "photo"
    provenance: str = "retrieval"  # retrieval | generation | mock


@dataclass(frozen=True)
class DatasetItem:
    sample: DatasetSample
    truth_index: int


@dataclass(frozen=True)
class LabeledDataset:
    question: str
    choices: tuple[str, ...]
    items: tuple[DatasetItem, ...]

    def __post_init__(self):
        for item in self.items:
            if not 0 <= item.truth_index < len(self.choices):
                raise ConfigurationError(
                    f"truth index {item.truth_index} out of range for {len(self.choices)} choices"
                )


@dataclass
class DataContext:
    """Read-only environment for select and build operations."""

    manifest: DatasetManifest
    generation_client: GenerationHandle
    codebook: Codebook = field(init=False)

    def __post_init__(self):
        self.codebook = Codebook.from_manifest(self.manifest)


def _generate_sample(
    ctx: DataContext, class_name: str, image_type: str, rng: np.random.Generator
) -> DatasetSample:
    prompt = GENERATION_PROMPT.format(image_type=image_type, class_name=class_name)
    seed = int(rng.integers(0, 2**63))
    image = ctx.generation_client.generate_image(prompt, seed, CANVAS_SIZE, CANVAS_SIZE)
    provenance = getattr(ctx.generation_client, "kind", "generation")
    return DatasetSample(image, normalize_class_name(class_name), image_type, provenance)


def select(call: ToolCall, ctx: DataContext, rng: np.random.Generator) -> DatasetSample:
    """Produce one base sample from a select tool call.

    Retrieval matches normalized class names first, then metaclass groups
    (uniform member pick); anything unmatched, or a class with no usable
    image of the requested type, falls back to generation. The "random"
    keyword picks a class uniformly.
    """
    if call.module_path != SELECT_MODULE:
        raise ToolValidationError(f"{call.full_name} is not a select tool")
    class_name = normalize_class_name(call.kwargs["class_name"])
    image_type = call.kwargs.get("image_type", "photo").strip()

    if call.name == "TextToImageGeneration":
        if class_name == RANDOM_KEYWORD:
            names = ctx.codebook.names
            class_name = names[int(rng.integers(0, len(names)))]
        return _generate_sample(ctx, class_name, image_type, rng)

    if call.name != "TextToImageRetrieval":
        raise ToolValidationError(f"unsupported select tool {call.full_name}")

    if class_name == RANDOM_KEYWORD:
        pool = ctx.manifest.retrieval_pool()
        if not pool:
            names = ctx.codebook.names
            return _generate_sample(
                ctx, names[int(rng.integers(0, len(names)))], image_type, rng
            )
        class_name = pool[int(rng.integers(0, len(pool)))]

    cls = ctx.manifest.lookup(class_name)
    if cls is None:
        groups = ctx.manifest.metaclasses
        if class_name in groups:
            members = groups[class_name]
            cls = ctx.manifest.lookup(members[int(rng.integers(0, len(members)))])
        else:
            return _generate_sample(ctx, class_name, image_type, rng)

    records = [r for r in cls.images if normalize_class_name(r.image_type) == normalize_class_name(image_type)]
    if not records:
        return _generate_sample(ctx, cls.name, image_type, rng)
    record = records[int(rng.integers(0, len(records)))]
    return DatasetSample(load_image(record.path), cls.name, record.image_type, "retrieval")


def item_rng(experiment_seed: int, choice_index: int, repetition: int) -> np.random.Generator:
    """Independent, deterministically derived stream for one dataset item."""
    return np.random.default_rng([abs(int(experiment_seed)), choice_index, repetition])


def build_dataset(experiment: Experiment, ctx: DataContext) -> LabeledDataset:
    """Materialize the benchmark: select then transform, balanced per choice.

    Item order is choice-major then repetition. Each item gets its own rng
    stream derived from (experiment seed, choice index, repetition), so the
    build is reproducible and schedule-independent.
    """
    items = []
    for choice_index, answer in enumerate(experiment.answers):
        for repetition in range(experiment.samples_per_choice):
            try:
                items.append(
                    DatasetItem(
                        _build_item(answer, ctx, experiment.seed, choice_index, repetition),
                        choice_index,
                    )
                )
            except Exception as exc:
                raise DatasetBuildError(
                    f"choice {choice_index} ({answer.text!r}), repetition {repetition}: {exc}"
                ) from exc
    return LabeledDataset(experiment.question, experiment.choice_texts, tuple(items))


def _build_item(answer, ctx: DataContext, seed: int, choice_index: int, repetition: int):
    rng = item_rng(seed, choice_index, repetition)
    sample = select(answer.select_call, ctx, rng)
    transform_ctx = TransformContext(
        rng=rng,
        generation_client=ctx.generation_client,
        companion_sampler=lambda: select(answer.select_call, ctx, rng).image,
        sample_label=sample.class_name,
    )
    image = sample.image
    for call in answer.transform_calls:
        image = apply_transform(call, image, transform_ctx)
    return DatasetSample(image, sample.class_name, sample.image_type, sample.provenance)

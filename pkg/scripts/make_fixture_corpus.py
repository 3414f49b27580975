#!/usr/bin/env python3
"""Regenerate the committed test corpus under tests/data/corpus/.

The corpus is a tiny procedurally generated image set: two 512x512 images per
class (barcode-stamped, so the oracle mock can recover ground truth from
retrieval samples too) plus one odd-sized image to exercise standardization.
Deterministic: running this twice produces identical bytes.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vqalab.datasources import Codebook, mock_generate  # noqa: E402

CORPUS = {
    "dog": ["domestic animals"],
    "cat": ["domestic animals"],
    "siamese cat": ["domestic animals"],
    "car": ["vehicles"],
    "truck": ["vehicles"],
    "apple": ["fruits"],
    "banana": ["fruits"],
    "tree": ["plants"],
    "flower": ["plants"],
    "chair": ["furniture"],
    "scenery": [],
}
IMAGES_PER_CLASS = 2


def main() -> None:
    root = Path(__file__).resolve().parents[1] / "tests" / "data" / "corpus"
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    codebook = Codebook(CORPUS.keys())

    manifest = {"classes": []}
    for name, metaclasses in CORPUS.items():
        slug = name.replace(" ", "_")
        records = []
        if name == "scenery":
            # one non-square image; standardization center-crops and resizes it
            img = mock_generate(codebook, name, "photo", seed=0).to_pil()
            img = img.resize((640, 480), Image.BILINEAR)
            path = images_dir / f"{slug}_wide.png"
            img.save(path)
            records.append({"path": f"images/{path.name}", "image_type": "photo"})
        else:
            for k in range(IMAGES_PER_CLASS):
                img = mock_generate(codebook, name, "photo", seed=k)
                path = images_dir / f"{slug}_{k}.png"
                path.write_bytes(img.to_png_bytes())
                records.append({"path": f"images/{path.name}", "image_type": "photo"})
        manifest["classes"].append(
            {"name": name, "metaclasses": metaclasses, "images": records}
        )

    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    total = sum(len(c["images"]) for c in manifest["classes"])
    print(f"wrote {total} images and manifest.json under {root}")


if __name__ == "__main__":
    main()

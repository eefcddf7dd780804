"""
From a painting to sixty-four pixels
====================================

Every image contributes five training samples per epoch: four corner
crops and a center crop, each 90% of the side, resized bilinearly to
64x64 and scaled to [-1, 1].
"""
import tempfile
from pathlib import Path

import numpy as np

from canforge.data import (
    CROP_NAMES,
    crop_boxes,
    denormalize,
    load_manifest,
    load_raw_image,
    make_batches,
    preprocess,
    write_synthetic_corpus,
)
from canforge.generation import make_collage, save_png

root = Path(tempfile.mkdtemp())
write_synthetic_corpus(root, 6, seed=1, size=(120, 90), styles=["Baroque", "Rococo", "Cubism"])
manifest = load_manifest(root)
print(f"{len(manifest)} images, {manifest.num_samples} samples per epoch")
print("per style:", dict(manifest.counts))

raw = load_raw_image(manifest.entries[0].path)
print("raw shape:", raw.shape)
for name, box in zip(CROP_NAMES, crop_boxes(*raw.shape[:2])):
    print(f"  {name:>2}: top={box[0]} left={box[1]} size={box[2]}x{box[3]}")

tiles = [denormalize(preprocess(raw, i).permute(1, 2, 0).numpy()) for i in range(5)]
save_png(make_collage(tiles, 1, 5), "five_crops.png")

# Batches are a pure function of (seed, epoch).
x1, y1 = next(make_batches(manifest, 8, seed=3, epoch=0))
x2, y2 = next(make_batches(manifest, 8, seed=3, epoch=0))
print("same seed, same batch:", bool((x1 == x2).all() and (y1 == y2).all()))
print("value range:", float(x1.min()), float(x1.max()))
print("wrote five_crops.png")

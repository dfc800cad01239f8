"""Small disjoint image corpora cut from the scikit-image sample images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from skimage import data

from panpretrain.io import write_pnm

CORPUS_A = ("astronaut", "coffee", "rocket", "immunohistochemistry")
# one dense outdoor scene stands in for a single unseen instrument
CORPUS_B = ("stereo_motorcycle",)
MIN_STD = 0.04


def _rgb(name: str) -> np.ndarray:
    img = getattr(data, name)()
    if isinstance(img, tuple):  # stereo pairs: keep the left view
        img = img[0]
    img = img[..., :3]
    return np.moveaxis(img.astype(np.float32) / 255.0, -1, 0)


def textured_tiles(name: str, size: int, stride: int, limit: int) -> list[tuple[str, np.ndarray]]:
    """Up to ``limit`` tiles whose mean per-band std exceeds MIN_STD, spread over the image."""
    img = _rgb(name)
    _, h, w = img.shape
    tiles = []
    for y in range(0, h - size + 1, stride):
        for x in range(0, w - size + 1, stride):
            t = img[:, y : y + size, x : x + size]
            if t.std(axis=(1, 2)).mean() > MIN_STD:
                tiles.append((f"{name}_{y:04d}_{x:04d}.ppm", t))
    if len(tiles) > limit:
        pick = np.linspace(0, len(tiles) - 1, limit).round().astype(int)
        tiles = [tiles[i] for i in pick]
    return tiles


def write_corpus(out, names, size: int, stride: int, per_image: int) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name in names:
        # rank prefix interleaves the source images in sorted order
        for rank, (fname, tile) in enumerate(textured_tiles(name, size, stride, per_image)):
            write_pnm(out / f"{rank:03d}_{fname}", tile)
    return out

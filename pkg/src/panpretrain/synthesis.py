"""Simulated multispectral bands and simulated panchromatic images.

Extra bands are random convex combinations of the source channels, appended
after the originals.  The PAN image is a random convex combination of a
random subset (at least two) of the multispectral bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandIndexError, NothingToSynthesize, TooFewBands
from .rng import RngStream
from .tensor_core import out_dtype

DEFAULT_C_MAX = 8


@dataclass(frozen=True)
class PanWeights:
    subset: tuple[int, ...]
    weights: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"subset": list(self.subset), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "PanWeights":
        return cls(tuple(int(i) for i in d["subset"]), tuple(float(w) for w in d["weights"]))


def _normalized_uniforms(rng: RngStream, n: int) -> np.ndarray:
    raw = np.array([rng.random() for _ in range(n)], dtype=np.float64)
    total = raw.sum()
    if total == 0.0:
        return np.full(n, 1.0 / n)
    return raw / total


def sample_mix_matrix(c: int, c_max: int, rng: RngStream) -> np.ndarray:
    """Draw the ``(c_max - c, c)`` row-stochastic mixing matrix, row by row."""
    if c < 1:
        raise ValueError("need at least one source channel")
    if c >= c_max:
        raise NothingToSynthesize(f"source already has {c} >= c_max={c_max} bands")
    return np.stack([_normalized_uniforms(rng, c) for _ in range(c_max - c)])


def synthesize_ms(img: np.ndarray, c_max: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Return the ``c_max``-band image and the mixing matrix that produced it.

    The first ``C`` bands are the input bands, copied verbatim.  An input that
    already has ``c_max`` bands passes through with an empty ``(0, C)`` matrix.
    """
    c = img.shape[0]
    if c > c_max:
        raise ValueError(f"image has {c} bands, more than c_max={c_max}")
    if c == c_max:
        return img.copy(), np.zeros((0, c))
    mix = sample_mix_matrix(c, c_max, rng)
    extra = np.tensordot(mix, img.astype(np.float64), axes=(1, 0))
    return np.concatenate([img, extra.astype(out_dtype(img))], axis=0), mix


def sample_pan_weights(c: int, rng: RngStream) -> PanWeights:
    """Subset size uniform on {2..c}, subset without replacement, normalized weights."""
    if c < 2:
        raise TooFewBands(f"PAN synthesis needs at least 2 bands, got {c}")
    size = 2 + rng.choice(c - 1)
    subset = sorted(rng.permutation(c)[:size])
    weights = _normalized_uniforms(rng, size)
    return PanWeights(tuple(subset), tuple(float(w) for w in weights))


def synthesize_pan(ms: np.ndarray, weights: PanWeights) -> np.ndarray:
    c = ms.shape[0]
    for idx in weights.subset:
        if not 0 <= idx < c:
            raise BandIndexError(f"band index {idx} out of range for {c}-band image")
    pan = np.zeros(ms.shape[1:], dtype=np.float64)
    for idx, w in zip(weights.subset, weights.weights):
        pan += w * ms[idx]
    # a convex combination can overshoot [0, 1] by an ulp after rounding
    return np.clip(pan, 0.0, 1.0)[None].astype(out_dtype(ms))

"""Spatial and spectral augmentation of (MS, PAN, GT) triples.

Shuffle and colour jitter act on the clean MS before it becomes the target,
so they are carried into GT.  Channel masking zeroes bands of the degraded
network input only.  High-pass filters and the PAN jitter touch PAN only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .degradation import gaussian_kernel
from .rng import RngStream
from .tensor_core import clamp01, convolve2d, out_dtype

HIGHPASS_KINDS = ("laplacian", "dog", "sobel", "canny")
AUGMENT_OPS = ("flip_h", "flip_v", "rotate", "shuffle", "mask", "highpass", "jitter_ms", "jitter_pan")
JITTER_RANGE = (0.8, 1.2)
HUE_RANGE = (-0.05, 0.05)
CANNY_LOW = 0.04
CANNY_HIGH = 0.10

LAPLACIAN3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
SOBEL_NORM = np.sqrt(32.0)


def dog_kernel() -> np.ndarray:
    small = np.zeros((7, 7))
    small[2:5, 2:5] = gaussian_kernel(0.5, 3)
    return small - gaussian_kernel(2.0, 7)


@dataclass(frozen=True)
class Highpass:
    kind: str
    low: float = CANNY_LOW
    high: float = CANNY_HIGH


@dataclass(frozen=True)
class Jitter:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue: float = 0.0


@dataclass(frozen=True)
class AugmentSpec:
    flip_h: bool = False
    flip_v: bool = False
    rot_quarter: int = 0
    shuffle: tuple[int, ...] | None = None
    mask: tuple[int, ...] | None = None
    pan_highpass: Highpass | None = None
    jitter_ms: Jitter | None = None
    jitter_pan: Jitter | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("shuffle", "mask"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(
            flip_h=bool(d["flip_h"]),
            flip_v=bool(d["flip_v"]),
            rot_quarter=int(d["rot_quarter"]),
            shuffle=None if d["shuffle"] is None else tuple(d["shuffle"]),
            mask=None if d["mask"] is None else tuple(d["mask"]),
            pan_highpass=None if d["pan_highpass"] is None else Highpass(**d["pan_highpass"]),
            jitter_ms=None if d["jitter_ms"] is None else Jitter(**d["jitter_ms"]),
            jitter_pan=None if d["jitter_pan"] is None else Jitter(**d["jitter_pan"]),
        )


def default_probs(p: float = 0.5) -> dict[str, float]:
    return {op: p for op in AUGMENT_OPS}


def sample_augment_spec(rng: RngStream, c_max: int, probs: dict[str, float] | None = None) -> AugmentSpec:
    """Each op is present independently with its probability (default 0.5).

    One inclusion uniform is drawn per op, in ``AUGMENT_OPS`` order, followed by
    that op's parameters when it is present.
    """
    p = default_probs()
    if probs:
        unknown = set(probs) - set(AUGMENT_OPS)
        if unknown:
            raise ValueError(f"unknown augmentation ops: {sorted(unknown)}")
        p.update(probs)

    def on(op):
        return rng.random() < p[op]

    flip_h = on("flip_h")
    flip_v = on("flip_v")
    rot = rng.choice(4) if on("rotate") else 0
    shuffle = tuple(rng.permutation(c_max)) if on("shuffle") else None
    mask = None
    if on("mask") and c_max > 1:
        size = 1 + rng.choice(c_max - 1)
        mask = tuple(sorted(rng.permutation(c_max)[:size]))
    highpass = Highpass(HIGHPASS_KINDS[rng.choice(len(HIGHPASS_KINDS))]) if on("highpass") else None
    jitter_ms = None
    if on("jitter_ms"):
        jitter_ms = Jitter(
            brightness=rng.uniform(*JITTER_RANGE),
            contrast=rng.uniform(*JITTER_RANGE),
            saturation=rng.uniform(*JITTER_RANGE),
            hue=rng.uniform(*HUE_RANGE),
        )
    jitter_pan = None
    if on("jitter_pan"):
        jitter_pan = Jitter(brightness=rng.uniform(*JITTER_RANGE), contrast=rng.uniform(*JITTER_RANGE))
    return AugmentSpec(flip_h, flip_v, rot, shuffle, mask, highpass, jitter_ms, jitter_pan)


# ---------------------------------------------------------------------------
# spatial


def spatial_transform(img: np.ndarray, flip_h: bool, flip_v: bool, rot_quarter: int) -> np.ndarray:
    out = img
    if flip_h:
        out = out[..., :, ::-1]
    if flip_v:
        out = out[..., ::-1, :]
    if rot_quarter % 4:
        out = np.rot90(out, rot_quarter % 4, axes=(-2, -1))
    return np.ascontiguousarray(out)


def spatial_augment(ms, pan, gt, spec: AugmentSpec):
    if not (ms.shape[-2:] == pan.shape[-2:] == gt.shape[-2:]):
        raise ValueError("spatial augmentation needs MS, PAN and GT on one grid")
    args = (spec.flip_h, spec.flip_v, spec.rot_quarter)
    return spatial_transform(ms, *args), spatial_transform(pan, *args), spatial_transform(gt, *args)


# ---------------------------------------------------------------------------
# spectral


def channel_shuffle(ms: np.ndarray, gt: np.ndarray, perm) -> tuple[np.ndarray, np.ndarray]:
    perm = list(perm)
    if sorted(perm) != list(range(ms.shape[0])):
        raise ValueError(f"{perm} is not a permutation of {ms.shape[0]} bands")
    return ms[perm].copy(), gt[perm].copy()


def channel_mask(ms_deg: np.ndarray, mask_set) -> np.ndarray:
    out = ms_deg.copy()
    if mask_set:
        idx = list(mask_set)
        if len(set(idx)) >= ms_deg.shape[0]:
            raise ValueError("refusing to mask every band")
        out[idx] = 0.0
    return out


def canny(pan: np.ndarray, low: float = CANNY_LOW, high: float = CANNY_HIGH) -> np.ndarray:
    """Binary Canny edge map of a single-band image, values in {0, 1}.

    Gaussian presmoothing (sigma 1, 5x5), Sobel gradients, non-maximum
    suppression over four directions, double threshold on the magnitude
    divided by sqrt(32), hysteresis via 8-connected components.
    """
    x = np.asarray(pan, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        if x.shape[0] != 1:
            raise ValueError("canny expects a single-band image")
        x = x[0]
    smooth = convolve2d(x[None], gaussian_kernel(1.0, 5), "replicate")[0]
    # correlation-form gradients: gx > 0 where intensity rises to the right
    gx = -convolve2d(smooth[None], SOBEL_X, "replicate")[0]
    gy = -convolve2d(smooth[None], SOBEL_Y, "replicate")[0]
    mag = np.hypot(gx, gy) / SOBEL_NORM

    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((angle + 22.5) / 45.0).astype(np.int64)) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    padded = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros_like(mag, dtype=bool)
    for sec, (dy, dx) in offsets.items():
        fwd = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        back = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        # strict on one side only, so a symmetric ridge keeps exactly one pixel
        keep |= (sector == sec) & (mag > back) & (mag >= fwd)
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    weak = nms >= low
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n:
        connected = np.zeros(n + 1, dtype=bool)
        connected[np.unique(labels[strong])] = True
        connected[0] = False
        edges = connected[labels]
    else:
        edges = np.zeros_like(weak)
    out = edges.astype(out_dtype(np.asarray(pan)))
    return out[None] if squeeze else out


def highpass_pan(pan: np.ndarray, kind: str | Highpass) -> np.ndarray:
    hp = kind if isinstance(kind, Highpass) else Highpass(kind)
    if hp.kind == "laplacian":
        return clamp01(convolve2d(pan, LAPLACIAN3, "replicate") + 0.5)
    if hp.kind == "dog":
        return clamp01(convolve2d(pan, dog_kernel(), "replicate") + 0.5)
    if hp.kind == "sobel":
        gx = convolve2d(pan, SOBEL_X, "replicate").astype(np.float64)
        gy = convolve2d(pan, SOBEL_Y, "replicate").astype(np.float64)
        return clamp01((np.sqrt(gx * gx + gy * gy) / SOBEL_NORM).astype(out_dtype(pan)))
    if hp.kind == "canny":
        return canny(pan, hp.low, hp.high)
    raise ValueError(f"unknown high-pass filter {hp.kind!r}")


# ---------------------------------------------------------------------------
# colour jitter


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[0], rgb[1], rgb[2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v])


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[0], hsv[1], hsv[2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def color_jitter(img: np.ndarray, factors: Jitter) -> np.ndarray:
    """Hue, saturation, contrast, then brightness; clamped after every stage.

    Hue and saturation need an RGB triple and only touch bands 0-2; images
    with fewer than three bands skip them.
    """
    dt = out_dtype(img)
    x = np.clip(img.astype(np.float64), 0.0, 1.0)
    if x.shape[0] >= 3 and (factors.hue != 0.0 or factors.saturation != 1.0):
        hsv = rgb_to_hsv(x[:3])
        hsv[0] = (hsv[0] + factors.hue) % 1.0
        hsv[1] = np.clip(hsv[1] * factors.saturation, 0.0, 1.0)
        x = x.copy()
        x[:3] = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    if factors.contrast != 1.0:
        mean = x.mean(axis=(-2, -1), keepdims=True)
        x = np.clip(mean + factors.contrast * (x - mean), 0.0, 1.0)
    if factors.brightness != 1.0:
        x = np.clip(x * factors.brightness, 0.0, 1.0)
    return x.astype(dt)

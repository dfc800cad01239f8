"""Image tensor primitives: convolution, resampling, median filtering.

Images are numpy arrays laid out channel-major, ``(C, H, W)``, normally
float32 with nominal range [0, 1].  The resampling and convolution routines
operate on the last two axes, so a leading batch axis ``(N, C, H, W)`` works
as well.  Float64 inputs stay float64 (the gradient checks rely on this);
everything else is returned as float32.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ImageTooSmall, InvalidKernel, InvalidRange

BORDER_MODES = {"replicate": "edge", "reflect": "reflect", "zero": "constant"}
INTERP_METHODS = ("nearest", "bilinear", "bicubic", "area")
BICUBIC_A = -0.5


def out_dtype(x: np.ndarray):
    return np.float64 if x.dtype == np.float64 else np.float32


def as_image(data) -> np.ndarray:
    """Coerce to a float32 (C, H, W) array; a 2-D input becomes one channel."""
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=out_dtype(arr))


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).astype(out_dtype(img), copy=False)


def check_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidKernel(f"kernel must be square 2-D, got shape {k.shape}")
    if k.shape[0] % 2 == 0:
        raise InvalidKernel(f"kernel size must be odd, got {k.shape[0]}")
    return k


def pad_image(img: np.ndarray, r: int, border: str = "replicate") -> np.ndarray:
    if border not in BORDER_MODES:
        raise ValueError(f"unknown border mode {border!r}")
    width = [(0, 0)] * (img.ndim - 2) + [(r, r), (r, r)]
    mode = BORDER_MODES[border]
    if mode == "reflect" and min(img.shape[-2:]) <= r:
        # numpy reflect needs the image to be wider than the pad
        mode = "symmetric"
    return np.pad(img, width, mode=mode)


def convolve2d(img: np.ndarray, kernel, border: str = "replicate") -> np.ndarray:
    """True 2-D convolution of every channel with ``kernel``; output has the input shape.

    No clamping is done here so the operation stays linear.
    """
    k = check_kernel(kernel)
    size = k.shape[0]
    r = size // 2
    flipped = k[::-1, ::-1]
    padded = pad_image(np.asarray(img, dtype=np.float64), r, border)
    h, w = img.shape[-2:]
    out = np.zeros(img.shape, dtype=np.float64)
    for i in range(size):
        for j in range(size):
            wt = flipped[i, j]
            if wt != 0.0:
                out += wt * padded[..., i : i + h, j : j + w]
    return out.astype(out_dtype(np.asarray(img)))


def median_filter(img: np.ndarray, k: int) -> np.ndarray:
    if k < 1 or k % 2 == 0:
        raise InvalidKernel(f"median window must be odd, got {k}")
    r = k // 2
    padded = pad_image(np.asarray(img), r, "replicate")
    windows = sliding_window_view(padded, (k, k), axis=(-2, -1))
    return np.median(windows, axis=(-2, -1)).astype(out_dtype(np.asarray(img)))


# ---------------------------------------------------------------------------
# resampling: each method is a pair of (out, in) weight matrices applied
# separably along H then W.


def _cubic(t: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def resample_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """Weights ``M`` with ``out = M @ in`` along one axis (align_corners=False)."""
    if n_in < 1 or n_out < 1:
        raise ImageTooSmall(f"cannot resample {n_in} -> {n_out} pixels")
    if method not in INTERP_METHODS:
        raise ValueError(f"unknown interpolation method {method!r}")
    scale = n_in / n_out
    m = np.zeros((n_out, n_in), dtype=np.float64)
    dst = np.arange(n_out)
    rows = dst[:, None]

    if method == "nearest":
        src = np.minimum(np.floor((dst + 0.5) * scale).astype(np.int64), n_in - 1)
        m[dst, src] = 1.0
    elif method == "bilinear":
        src = np.clip((dst + 0.5) * scale - 0.5, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        np.add.at(m, (dst, lo), 1.0 - frac)
        np.add.at(m, (dst, hi), frac)
    elif method == "bicubic":
        src = (dst + 0.5) * scale - 0.5
        base = np.floor(src).astype(np.int64)
        taps = base[:, None] + np.arange(-1, 3)[None, :]
        wts = _cubic(src[:, None] - taps)
        np.add.at(m, (np.broadcast_to(rows, taps.shape), np.clip(taps, 0, n_in - 1)), wts)
    else:  # area: exact overlap of each output box with the source pixels
        start = dst * scale
        stop = (dst + 1) * scale
        edges = np.arange(n_in)
        overlap = np.minimum(stop[:, None], edges[None, :] + 1.0) - np.maximum(start[:, None], edges[None, :])
        m = np.clip(overlap, 0.0, None) / scale
    return m


def resample(img: np.ndarray, out_h: int, out_w: int, method: str = "bilinear") -> np.ndarray:
    """Resize the last two axes to ``(out_h, out_w)`` and clamp to [0, 1]."""
    if out_h < 1 or out_w < 1:
        raise InvalidRange(f"output size must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if (h, w) == (out_h, out_w) and method == "nearest":
        return img.astype(out_dtype(img), copy=True)
    my = resample_matrix(h, out_h, method)
    mx = resample_matrix(w, out_w, method)
    out = np.matmul(np.matmul(my, img.astype(np.float64)), mx.T)
    return clamp01(out.astype(out_dtype(img)))

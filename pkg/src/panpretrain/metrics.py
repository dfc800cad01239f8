"""Reduced-resolution and no-reference quality metrics for fused images.

Reduced resolution (prediction vs. reference): PSNR, SSIM, SAM, ERGAS, CC,
MAE.  Full resolution (no reference): D_lambda, D_S and QNR, built on the
universal image quality index Q.

All functions take ``(C, H, W)`` arrays with data in [0, 1] and compute in
float64.  Degenerate inputs (zero vectors, zero-variance bands, flat Q
windows) are handled by fixed rules so every metric is total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NotApplicable

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
Q_WINDOW = 32

REDUCED_METRICS = ("PSNR", "SSIM", "SAM", "ERGAS", "CC", "MAE")
FULL_METRICS = ("D_lambda", "D_S", "QNR")
# reporting order of the summary table
TABLE_ORDER = ("PSNR", "SAM", "ERGAS", "D_lambda", "D_S", "QNR", "SSIM", "CC", "MAE")


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if p.ndim == 2:
        p, g = p[None], g[None]
    return p, g


def psnr(pred, gt) -> float:
    p, g = _pair(pred, gt)
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def mae(pred, gt) -> float:
    p, g = _pair(pred, gt)
    return float(np.mean(np.abs(p - g)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    size = g.size
    rows = sliding_window_view(x, size, axis=-2) @ g
    return sliding_window_view(rows, size, axis=-1) @ g


def ssim(pred, gt, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean over bands of the Gaussian-windowed SSIM map (valid region only).

    Images smaller than the window use the largest odd window that fits.
    """
    p, g = _pair(pred, gt)
    size = min(window, p.shape[-2], p.shape[-1])
    if size % 2 == 0:
        size -= 1
    w = _gaussian_window(size, sigma)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_p = _filter_valid(p, w)
    mu_g = _filter_valid(g, w)
    spp = _filter_valid(p * p, w) - mu_p**2
    sgg = _filter_valid(g * g, w) - mu_g**2
    spg = _filter_valid(p * g, w) - mu_p * mu_g
    num = (2 * mu_p * mu_g + c1) * (2 * spg + c2)
    den = (mu_p**2 + mu_g**2 + c1) * (spp + sgg + c2)
    per_band = (num / den).mean(axis=(-2, -1))
    return float(per_band.mean())


def sam(pred, gt, eps: float = 1e-8) -> float:
    """Mean spectral angle in radians over pixels where both vectors are non-zero.

    Uses ``2 * atan2(|a/|a| - b/|b||, |a/|a| + b/|b||)``, which is exact for
    identical vectors and well conditioned near 0 and pi.
    """
    p, g = _pair(pred, gt)
    c = p.shape[0]
    pv = p.reshape(c, -1)
    gv = g.reshape(c, -1)
    np_ = np.sqrt((pv * pv).sum(axis=0))
    ng = np.sqrt((gv * gv).sum(axis=0))
    valid = (np_ > eps) & (ng > eps)
    if not valid.any():
        return 0.0
    a = pv[:, valid] / np_[valid]
    b = gv[:, valid] / ng[valid]
    diff = np.sqrt(((a - b) ** 2).sum(axis=0))
    summ = np.sqrt(((a + b) ** 2).sum(axis=0))
    return float(np.mean(2.0 * np.arctan2(diff, summ)))


def ergas(pred, gt, ratio: float = 4.0, eps: float = 1e-8) -> float:
    p, g = _pair(pred, gt)
    mse = ((p - g) ** 2).mean(axis=(-2, -1))
    mu = g.mean(axis=(-2, -1))
    keep = mu >= eps
    if not keep.any():
        return 0.0
    return float(100.0 / ratio * math.sqrt(np.mean(mse[keep] / mu[keep] ** 2)))


def cc(pred, gt) -> float:
    """Mean Pearson correlation over bands; bands with zero variance are skipped."""
    p, g = _pair(pred, gt)
    c = p.shape[0]
    dp = p.reshape(c, -1) - p.reshape(c, -1).mean(axis=1, keepdims=True)
    dg = g.reshape(c, -1) - g.reshape(c, -1).mean(axis=1, keepdims=True)
    vp = (dp * dp).mean(axis=1)
    vg = (dg * dg).mean(axis=1)
    cov = (dp * dg).mean(axis=1)
    keep = (vp > 0) & (vg > 0)
    if not keep.any():
        return 0.0
    return float(np.mean(cov[keep] / np.sqrt(vp[keep] * vg[keep])))


def q_index(a, b, window: int = Q_WINDOW) -> float:
    """Universal image quality index averaged over non-overlapping square blocks.

    The block side is ``min(window, H, W)``; partial blocks at the right and
    bottom edges are dropped.  A block with a zero denominator scores 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        a, b = a[0], b[0]
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    h, w = a.shape
    s = min(window, h, w)
    nh, nw = h // s, w // s
    ba = a[: nh * s, : nw * s].reshape(nh, s, nw, s)
    bb = b[: nh * s, : nw * s].reshape(nh, s, nw, s)
    mu_a = ba.mean(axis=(1, 3), keepdims=True)
    mu_b = bb.mean(axis=(1, 3), keepdims=True)
    da, db = ba - mu_a, bb - mu_b
    # a flat block has zero spread exactly; the float mean would leave residue
    da *= np.ptp(ba, axis=(1, 3), keepdims=True) > 0
    db *= np.ptp(bb, axis=(1, 3), keepdims=True) > 0
    var_a = (da * da).mean(axis=(1, 3))
    var_b = (db * db).mean(axis=(1, 3))
    cov = (da * db).mean(axis=(1, 3))
    mu_a, mu_b = mu_a[:, 0, :, 0], mu_b[:, 0, :, 0]
    num = 4.0 * cov * mu_a * mu_b
    den = (var_a + var_b) * (mu_a**2 + mu_b**2)
    q = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(q.mean())


def d_lambda(fused, lrms, window: int = Q_WINDOW, p: float = 1.0) -> float:
    fused = np.asarray(fused, dtype=np.float64)
    lrms = np.asarray(lrms, dtype=np.float64)
    c = fused.shape[0]
    if c < 2:
        raise NotApplicable("D_lambda needs at least two bands")
    if lrms.shape[0] != c:
        raise ValueError("fused and LRMS band counts differ")
    total = 0.0
    for i in range(c):
        for j in range(i + 1, c):
            diff = abs(q_index(fused[i], fused[j], window) - q_index(lrms[i], lrms[j], window))
            total += 2.0 * diff**p
    return (total / (c * (c - 1))) ** (1.0 / p)


def d_s(fused, pan, lrms, lrpan, window: int = Q_WINDOW, q: float = 1.0) -> float:
    fused = np.asarray(fused, dtype=np.float64)
    lrms = np.asarray(lrms, dtype=np.float64)
    pan = np.asarray(pan, dtype=np.float64).reshape(fused.shape[-2:])
    lrpan = np.asarray(lrpan, dtype=np.float64).reshape(lrms.shape[-2:])
    c = fused.shape[0]
    total = 0.0
    for i in range(c):
        total += abs(q_index(fused[i], pan, window) - q_index(lrms[i], lrpan, window)) ** q
    return (total / c) ** (1.0 / q)


def qnr(dl: float, ds: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    return (1.0 - dl) ** alpha * (1.0 - ds) ** beta


def reduced_metrics(pred, gt, ratio: float = 4.0) -> dict[str, float]:
    return {
        "PSNR": psnr(pred, gt),
        "SSIM": ssim(pred, gt),
        "SAM": sam(pred, gt),
        "ERGAS": ergas(pred, gt, ratio),
        "CC": cc(pred, gt),
        "MAE": mae(pred, gt),
    }


def full_metrics(fused, lrms, pan, lrpan, window: int = Q_WINDOW) -> dict[str, float]:
    dl = d_lambda(fused, lrms, window)
    ds = d_s(fused, pan, lrms, lrpan, window)
    return {"D_lambda": dl, "D_S": ds, "QNR": qnr(dl, ds)}


@dataclass
class MetricReport:
    resolution: str
    records: list[dict] = field(default_factory=list)

    def add(self, image_id: str, values: dict[str, float]) -> None:
        self.records.append({"id": image_id, **values})

    @property
    def metric_names(self) -> list[str]:
        names = []
        for rec in self.records:
            for k in rec:
                if k != "id" and k not in names:
                    names.append(k)
        return [m for m in TABLE_ORDER if m in names] + [m for m in names if m not in TABLE_ORDER]

    @property
    def count(self) -> int:
        return len(self.records)

    def aggregate(self) -> dict[str, float]:
        return {m: float(np.mean([r[m] for r in self.records if m in r])) for m in self.metric_names}

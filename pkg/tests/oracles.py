"""Independent brute-force reference implementations used by the tests.

Everything here is written with plain Python loops (or the most literal numpy
expression) and shares no code with the package.
"""

from __future__ import annotations

import math

import numpy as np

M64 = (1 << 64) - 1


class SplitMix64:
    """Scalar re-implementation of the generator from its published constants."""

    def __init__(self, seed):
        self.s = seed & M64

    @staticmethod
    def mix(z):
        z &= M64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        return z ^ (z >> 31)

    def next(self):
        self.s = (self.s + 0x9E3779B97F4A7C15) & M64
        return self.mix(self.s)

    def unit(self):
        return (self.next() >> 11) / float(1 << 53)

    def child(self, label, index=0):
        return SplitMix64(self.mix(self.s ^ ((label + index) & M64)))


def clamp_index(i, n):
    return min(max(i, 0), n - 1)


def conv_direct(img, kernel):
    """Replicate-border true convolution by quadruple loop."""
    c, h, w = img.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros((c, h, w))
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for i in range(k):
                    for j in range(k):
                        yy = clamp_index(y + r - i, h)
                        xx = clamp_index(x + r - j, w)
                        acc += kernel[i, j] * img[ch, yy, xx]
                out[ch, y, x] = acc
    return out


def median_direct(img, k):
    c, h, w = img.shape
    r = k // 2
    out = np.zeros((c, h, w))
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                vals = sorted(
                    float(img[ch, clamp_index(y + dy, h), clamp_index(x + dx, w)])
                    for dy in range(-r, r + 1)
                    for dx in range(-r, r + 1)
                )
                out[ch, y, x] = vals[len(vals) // 2]
    return out


def _interp1(n_in, n_out, method):
    """Per-output list of (index, weight) taps computed one pixel at a time."""
    scale = n_in / n_out
    taps = []
    for o in range(n_out):
        if method == "nearest":
            taps.append([(min(int(math.floor((o + 0.5) * scale)), n_in - 1), 1.0)])
        elif method == "bilinear":
            s = min(max((o + 0.5) * scale - 0.5, 0.0), n_in - 1)
            i0 = int(math.floor(s))
            i1 = min(i0 + 1, n_in - 1)
            taps.append([(i0, 1.0 - (s - i0)), (i1, s - i0)])
        elif method == "bicubic":
            s = (o + 0.5) * scale - 0.5
            base = math.floor(s)
            row = []
            for t in range(base - 1, base + 3):
                d = abs(s - t)
                a = -0.5
                if d <= 1:
                    wgt = (a + 2) * d**3 - (a + 3) * d**2 + 1
                elif d < 2:
                    wgt = a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a
                else:
                    wgt = 0.0
                row.append((clamp_index(t, n_in), wgt))
            taps.append(row)
        else:
            lo, hi = o * scale, (o + 1) * scale
            row = []
            for i in range(n_in):
                ov = min(hi, i + 1) - max(lo, i)
                if ov > 0:
                    row.append((i, ov / scale))
            taps.append(row)
    return taps


def resample_direct(img, out_h, out_w, method):
    c, h, w = img.shape
    ty, tx = _interp1(h, out_h, method), _interp1(w, out_w, method)
    out = np.zeros((c, out_h, out_w))
    for ch in range(c):
        for y in range(out_h):
            for x in range(out_w):
                out[ch, y, x] = sum(wy * wx * img[ch, iy, ix] for iy, wy in ty[y] for ix, wx in tx[x])
    return np.clip(out, 0.0, 1.0)


# -- metrics ---------------------------------------------------------------


def psnr_direct(p, g):
    mse = sum((float(a) - float(b)) ** 2 for a, b in zip(p.ravel(), g.ravel())) / p.size
    return 100.0 if mse == 0 else min(100.0, 10 * math.log10(1 / mse))


def mae_direct(p, g):
    return sum(abs(float(a) - float(b)) for a, b in zip(p.ravel(), g.ravel())) / p.size


def sam_direct(p, g):
    c, h, w = p.shape
    angles = []
    for y in range(h):
        for x in range(w):
            a = [float(v) for v in p[:, y, x]]
            b = [float(v) for v in g[:, y, x]]
            na = math.sqrt(sum(v * v for v in a))
            nb = math.sqrt(sum(v * v for v in b))
            if na <= 1e-8 or nb <= 1e-8:
                continue
            cos = sum(u * v for u, v in zip(a, b)) / (na * nb)
            angles.append(math.acos(max(-1.0, min(1.0, cos))))
    return sum(angles) / len(angles) if angles else 0.0


def ergas_direct(p, g, ratio):
    c = p.shape[0]
    acc = 0.0
    for b in range(c):
        mse = float(np.mean((p[b].astype(float) - g[b]) ** 2))
        mu = float(np.mean(g[b], dtype=float))
        acc += mse / mu**2
    return 100.0 / ratio * math.sqrt(acc / c)


def cc_direct(p, g):
    vals = []
    for b in range(p.shape[0]):
        x = p[b].ravel().astype(float)
        y = g[b].ravel().astype(float)
        mx, my = x.mean(), y.mean()
        num = sum((u - mx) * (v - my) for u, v in zip(x, y))
        den = math.sqrt(sum((u - mx) ** 2 for u in x) * sum((v - my) ** 2 for v in y))
        vals.append(num / den)
    return sum(vals) / len(vals)


def ssim_direct(p, g, win=11, sigma=1.5):
    """Valid-region Gaussian SSIM with explicit window loops."""
    c, h, w = p.shape
    win = min(win, h, w)
    if win % 2 == 0:
        win -= 1
    ax = [i - (win - 1) / 2 for i in range(win)]
    g1 = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in ax]
    s = sum(g1)
    g1 = [v / s for v in g1]
    c1, c2 = 0.01**2, 0.03**2
    means = []
    for b in range(c):
        vals = []
        for y in range(h - win + 1):
            for x in range(w - win + 1):
                mp = mg = spp = sgg = spg = 0.0
                for i in range(win):
                    for j in range(win):
                        wt = g1[i] * g1[j]
                        a = float(p[b, y + i, x + j])
                        q = float(g[b, y + i, x + j])
                        mp += wt * a
                        mg += wt * q
                        spp += wt * a * a
                        sgg += wt * q * q
                        spg += wt * a * q
                spp -= mp * mp
                sgg -= mg * mg
                spg -= mp * mg
                vals.append((2 * mp * mg + c1) * (2 * spg + c2) / ((mp * mp + mg * mg + c1) * (spp + sgg + c2)))
        means.append(sum(vals) / len(vals))
    return sum(means) / len(means)


def q_direct(a, b, window):
    h, w = a.shape
    s = min(window, h, w)
    qs = []
    for by in range(h // s):
        for bx in range(w // s):
            x = a[by * s : (by + 1) * s, bx * s : (bx + 1) * s].ravel().astype(float)
            y = b[by * s : (by + 1) * s, bx * s : (bx + 1) * s].ravel().astype(float)
            mx, my = x.mean(), y.mean()
            vx = ((x - mx) ** 2).mean()
            vy = ((y - my) ** 2).mean()
            cxy = ((x - mx) * (y - my)).mean()
            den = (vx + vy) * (mx * mx + my * my)
            qs.append(4 * cxy * mx * my / den if den > 0 else 0.0)
    return sum(qs) / len(qs)

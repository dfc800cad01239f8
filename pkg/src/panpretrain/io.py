"""File formats: PFT tensors, PPM/PGM ingestion, checkpoints, reports, plots.

PFT record (little-endian)::

    b"PFT1" | u32 channels | u32 height | u32 width | channels*height*width f32

A ``.pft`` file holds one or more records back to back (a dataset sample
stores LRMS, PAN and GT in that order).

Checkpoint (little-endian)::

    b"PFCK" | u32 version | u32 c_max | u32 hidden | u64 seed | u64 config_hash
    | u32 epoch | parameter groups as f32 in declaration order
    | u32 has_optimizer [ | u64 step | f64 beta1 beta2 eps weight_decay
                          | m groups f32 | v groups f32 ]
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .metrics import TABLE_ORDER, MetricReport
from .model import GROUPS, ModelParams, group_shapes
from .optim import AdamWState

PFT_MAGIC = b"PFT1"
CKPT_MAGIC = b"PFCK"
CKPT_VERSION = 1
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pft")


# ---------------------------------------------------------------------------
# atomic writes / hashing


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def config_hash(cfg_dict: dict) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON form."""
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# PFT


def encode_pft(*tensors: np.ndarray) -> bytes:
    out = bytearray()
    for t in tensors:
        t = np.asarray(t)
        if t.ndim == 2:
            t = t[None]
        if t.ndim != 3:
            raise ValueError(f"PFT stores (C, H, W) tensors, got {t.shape}")
        out += PFT_MAGIC + struct.pack("<III", *t.shape)
        out += np.ascontiguousarray(t, dtype="<f4").tobytes()
    return bytes(out)


def decode_pft(data: bytes) -> list[np.ndarray]:
    tensors = []
    pos = 0
    if not data:
        raise FormatError("empty PFT file", 0)
    while pos < len(data):
        if data[pos : pos + 4] != PFT_MAGIC:
            raise FormatError("bad PFT magic", pos)
        if pos + 16 > len(data):
            raise FormatError("truncated PFT header", pos)
        c, h, w = struct.unpack_from("<III", data, pos + 4)
        n = c * h * w
        start = pos + 16
        end = start + 4 * n
        if end > len(data):
            raise FormatError(f"truncated PFT payload: need {4 * n} bytes", start)
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=start).reshape(c, h, w)
        tensors.append(arr.astype(np.float32))
        pos = end
    return tensors


def write_pft(path, *tensors: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pft(*tensors))


def read_pft(path) -> list[np.ndarray]:
    return decode_pft(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# PPM / PGM


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of header", start)
    return data[start:pos], pos


def decode_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"not a binary PGM/PPM file (magic {magic!r})", 0)
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"bad header field {tok!r}", pos - len(tok)) from None
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only 8-bit maxval 255 is supported, got {maxval}", pos - len(str(maxval)))
    if width < 1 or height < 1:
        raise FormatError("image has no pixels", pos)
    pos += 1  # single whitespace byte before the raster
    need = width * height * channels
    if len(data) - pos < need:
        raise FormatError(f"truncated raster: need {need} bytes, have {len(data) - pos}", len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    img = raster.reshape(height, width, channels).transpose(2, 0, 1)
    return (img.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise ValueError("PNM needs 1 or 3 channels")
    u8 = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    head = f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode()
    return head + u8.transpose(1, 2, 0).tobytes()


def write_pnm(path, img: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pnm(img))


def read_corpus_image(path) -> np.ndarray:
    """Load a PPM (P6), PGM (P5) or PFT file as a (C, H, W) float32 image in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == PFT_MAGIC:
        return decode_pft(data)[0]
    return decode_pnm(data)


def list_corpus(corpus_dir) -> list[Path]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: ModelParams
    seed: int = 0
    config_hash: str = "0" * 16
    epoch: int = 0
    optimizer: AdamWState | None = None


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    buf = _io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<III", CKPT_VERSION, p.c_max, p.hidden))
    buf.write(struct.pack("<QQI", ckpt.seed & 0xFFFFFFFFFFFFFFFF, int(ckpt.config_hash, 16), ckpt.epoch))
    for g in GROUPS:
        buf.write(np.ascontiguousarray(p[g], dtype="<f4").tobytes())
    opt = ckpt.optimizer
    buf.write(struct.pack("<I", 0 if opt is None else 1))
    if opt is not None:
        buf.write(struct.pack("<Qdddd", opt.step, opt.beta1, opt.beta2, opt.eps, opt.weight_decay))
        for moments in (opt.m, opt.v):
            for g in GROUPS:
                buf.write(np.ascontiguousarray(moments[g], dtype="<f4").tobytes())
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[:4] != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    pos = 4
    try:
        version, c_max, hidden = struct.unpack_from("<III", data, pos)
        pos += 12
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", 4)
        seed, chash, epoch = struct.unpack_from("<QQI", data, pos)
        pos += 20
        shapes = group_shapes(c_max, hidden)

        def read_groups():
            nonlocal pos
            out = {}
            for g in GROUPS:
                n = int(np.prod(shapes[g]))
                if pos + 4 * n > len(data):
                    raise FormatError(f"truncated group {g}", pos)
                out[g] = np.frombuffer(data, "<f4", n, pos).reshape(shapes[g]).astype(np.float32)
                pos += 4 * n
            return out

        arrays = read_groups()
        (has_opt,) = struct.unpack_from("<I", data, pos)
        pos += 4
        opt = None
        if has_opt:
            step, b1, b2, eps, wd = struct.unpack_from("<Qdddd", data, pos)
            pos += 40
            m = read_groups()
            v = read_groups()
            opt = AdamWState(m=m, v=v, step=step, beta1=b1, beta2=b2, eps=eps, weight_decay=wd)
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}", pos) from None
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint", pos)
    return Checkpoint(ModelParams(c_max, hidden, arrays), seed, f"{chash:016x}", epoch, opt)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# reports


def meta_line(meta: dict | None) -> str:
    if not meta:
        return ""
    return " ".join(f"{k}={meta[k]}" for k in sorted(meta))


def report_csv(report: MetricReport, meta: dict | None = None) -> str:
    """One row per (image, metric), after an optional ``# key=value`` comment line."""
    out = _io.StringIO()
    if meta:
        out.write(f"# {meta_line(meta)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["resolution", "image", "metric", "value"])
    for rec in report.records:
        for m in report.metric_names:
            if m in rec:
                writer.writerow([report.resolution, rec["id"], m, repr(float(rec[m]))])
    return out.getvalue()


def _fmt(metric: str, value: float) -> str:
    if metric == "SAM":
        return f"{value * 100.0:.2f}"
    if metric in ("PSNR", "ERGAS"):
        return f"{value:.2f}"
    return f"{value:.4f}"


def _header(metric: str) -> str:
    return "SAM (x1e-2 rad)" if metric == "SAM" else metric


def markdown_table(rows: dict[str, dict[str, float]], metrics: list[str] | None = None) -> str:
    """Summary table, one row per condition, columns in reporting order."""
    if metrics is None:
        present = {m for r in rows.values() for m in r}
        metrics = [m for m in TABLE_ORDER if m in present]
    lines = ["| condition | " + " | ".join(_header(m) for m in metrics) + " |"]
    lines.append("|---" * (len(metrics) + 1) + "|")
    for name, vals in rows.items():
        cells = [_fmt(m, vals[m]) if m in vals else "-" for m in metrics]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report_markdown(report: MetricReport, title: str = "", meta: dict | None = None) -> str:
    head = f"## {title}\n\n" if title else ""
    if meta:
        head += f"<!-- {meta_line(meta)} -->\n\n"
    return head + markdown_table({f"{report.resolution} mean (n={report.count})": report.aggregate()})


def write_report(report: MetricReport, path, fmt: str = "csv", meta: dict | None = None) -> None:
    if fmt == "csv":
        atomic_write_text(path, report_csv(report, meta))
    elif fmt == "markdown":
        atomic_write_text(path, report_markdown(report, meta=meta))
    else:
        raise ValueError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# plots

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def svg_plot(
    curves: dict[str, list[float]],
    ylabel: str = "validation PSNR (dB)",
    xlabel: str = "epoch",
    meta: dict | None = None,
) -> str:
    """Static SVG line chart, one polyline per named curve."""
    width, height = 640, 400
    left, right, top, bottom = 70, 150, 20, 50
    pw, ph = width - left - right, height - top - bottom
    values = [v for c in curves.values() for v in c]
    n = max((len(c) for c in curves.values()), default=0)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5

    def xy(i, v):
        x = left + (pw * (i / (n - 1)) if n > 1 else pw / 2)
        y = top + ph * (1.0 - (v - lo) / (hi - lo))
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<!-- {meta_line(meta)} -->" if meta else "<!-- -->",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="15" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 15 {top + ph / 2})">{ylabel}</text>',
        f'<text x="{left - 5}" y="{top + 4}" text-anchor="end" font-size="11">{hi:.2f}</text>',
        f'<text x="{left - 5}" y="{top + ph + 4}" text-anchor="end" font-size="11">{lo:.2f}</text>',
        f'<text x="{left}" y="{top + ph + 16}" text-anchor="middle" font-size="11">1</text>',
        f'<text x="{left + pw}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{max(n, 1)}</text>',
    ]
    for k, (name, curve) in enumerate(curves.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(xy(i, v) for i, v in enumerate(curve))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = top + 15 + 18 * k
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="12">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_plot(curves: dict[str, list[float]], path, **kw) -> None:
    atomic_write_text(path, svg_plot(curves, **kw))

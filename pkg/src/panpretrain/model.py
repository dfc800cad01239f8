"""Reference fusion network with a hand-written backward pass.

Architecture (all convolutions 3x3, stride 1, replicate padding)::

    up   = bicubic_upsample(zero_pad(lrms, c_max), pan.shape)
    x    = concat(up, pan)                         # c_max + 1 channels
    h1   = relu(conv1(x))                          # hidden channels
    h2   = relu(conv2(h1))                         # hidden channels
    pred = up + conv_out(h2)                       # c_max channels

``conv_out`` starts at zero, so an untrained network returns the upsampled
input exactly.  Freeze-tuning updates only ``conv_out``.  The upsampled input
is treated as data: no gradient flows into the resampler.

Internally activations are kept channels-last, ``(N, H, W, C)``, so im2col
columns and matmul outputs need no transposes.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, StaleTape
from .rng import LABEL_INIT, RngStream
from .tensor_core import clamp01, resample

HIDDEN = 32
GROUPS = ("conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv_out.weight", "conv_out.bias")
HEAD_GROUPS = ("conv_out.weight", "conv_out.bias")


class TuneMode(str, enum.Enum):
    FULL = "full"
    FREEZE = "freeze"


def group_shapes(c_max: int, hidden: int = HIDDEN) -> dict[str, tuple[int, ...]]:
    return {
        "conv1.weight": (hidden, c_max + 1, 3, 3),
        "conv1.bias": (hidden,),
        "conv2.weight": (hidden, hidden, 3, 3),
        "conv2.bias": (hidden,),
        "conv_out.weight": (c_max, hidden, 3, 3),
        "conv_out.bias": (c_max,),
    }


@dataclass
class ModelParams:
    c_max: int
    hidden: int
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.c_max, self.hidden, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.c_max, self.hidden, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def count(self, groups=GROUPS) -> int:
        return int(sum(self.arrays[g].size for g in groups))

    def fingerprint(self) -> int:
        crc = 0
        for g in GROUPS:
            crc = zlib.crc32(np.ascontiguousarray(self.arrays[g]).tobytes(), crc)
        return crc

    def equal(self, other: "ModelParams", groups=GROUPS) -> bool:
        return all(np.array_equal(self.arrays[g], other.arrays[g]) for g in groups)


def init_params(c_max: int, rng: RngStream, hidden: int = HIDDEN) -> ModelParams:
    """He-normal hidden convolutions, zero biases, zero output layer."""
    stream = rng.derive(LABEL_INIT)
    shapes = group_shapes(c_max, hidden)
    arrays = {}
    for name in GROUPS:
        shape = shapes[name]
        if name.endswith("weight") and not name.startswith("conv_out"):
            fan_in = shape[1] * shape[2] * shape[3]
            sd = np.sqrt(2.0 / fan_in)
            arrays[name] = stream.normal_array(int(np.prod(shape)), 0.0, sd).reshape(shape).astype(np.float32)
        else:
            arrays[name] = np.zeros(shape, dtype=np.float32)
    return ModelParams(c_max, hidden, arrays)


def trainable_groups(mode: TuneMode | str) -> tuple[str, ...]:
    return GROUPS if TuneMode(mode) is TuneMode.FULL else HEAD_GROUPS


def trainable_count(params: ModelParams, mode: TuneMode | str) -> int:
    return params.count(trainable_groups(mode))


def summary(params: ModelParams, mode: TuneMode | str) -> str:
    total = params.count()
    tunable = trainable_count(params, mode)
    return (
        f"c_max={params.c_max} hidden={params.hidden} mode={TuneMode(mode).value} "
        f"total={total} tunable={tunable} ({tunable / 1000:.2f}K, {100.0 * tunable / total:.1f}%)"
    )


# ---------------------------------------------------------------------------
# input preparation


def upsample_input(lrms: np.ndarray, height: int, width: int, c_max: int) -> np.ndarray:
    """Zero-pad ``lrms`` to ``c_max`` bands and bicubically resize to ``height x width``."""
    c, h, w = lrms.shape[-3:]
    if c > c_max:
        raise ShapeError(f"{c} input bands exceed c_max={c_max}")
    if h * width != w * height:
        raise ShapeError(f"LRMS {h}x{w} and PAN {height}x{width} differ in aspect ratio")
    if c < c_max:
        pad = [(0, 0)] * (lrms.ndim - 3) + [(0, c_max - c), (0, 0), (0, 0)]
        lrms = np.pad(lrms, pad)
    return resample(lrms, height, width, "bicubic")


# ---------------------------------------------------------------------------
# conv helpers (channels-last)


def _im2col(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="edge")
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (n, h, w, c, 3, 3)
    return win.reshape(n * h * w, c * 9)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    n, h, w, c = shape
    d = dcols.reshape(n, h, w, c, 3, 3)
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + w, :] += d[..., i, j]
    # fold the replicated border back onto the edge pixels
    dxp[:, 1, :, :] += dxp[:, 0, :, :]
    dxp[:, h, :, :] += dxp[:, h + 1, :, :]
    dxp = dxp[:, 1 : h + 1]
    dxp[:, :, 1, :] += dxp[:, :, 0, :]
    dxp[:, :, w, :] += dxp[:, :, w + 1, :]
    return dxp[:, :, 1 : w + 1]


def _wmat(weight: np.ndarray) -> np.ndarray:
    return weight.reshape(weight.shape[0], -1)


def _conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, _ = x.shape
    cols = _im2col(x)
    y = cols @ _wmat(weight).T + bias
    return y.reshape(n, h, w, weight.shape[0]), cols


# ---------------------------------------------------------------------------
# forward / backward


def forward_prepared(params: ModelParams, up: np.ndarray, pan: np.ndarray):
    """Forward pass on already-upsampled input.

    ``up`` is ``(N, c_max, H, W)``, ``pan`` is ``(N, 1, H, W)``.  Returns the
    unclamped prediction ``(N, c_max, H, W)`` and the tape for :func:`backward`.
    """
    if up.ndim != 4 or pan.ndim != 4:
        raise ShapeError("forward_prepared expects batched 4-D inputs")
    if up.shape[1] != params.c_max or pan.shape[1] != 1 or up.shape[2:] != pan.shape[2:]:
        raise ShapeError(f"bad input shapes {up.shape} and {pan.shape}")
    dt = params["conv1.weight"].dtype
    x = np.concatenate([up, pan], axis=1).transpose(0, 2, 3, 1).astype(dt)
    z1, cols1 = _conv(x, params["conv1.weight"], params["conv1.bias"])
    a1 = np.maximum(z1, 0)
    z2, cols2 = _conv(a1, params["conv2.weight"], params["conv2.bias"])
    a2 = np.maximum(z2, 0)
    res, cols3 = _conv(a2, params["conv_out.weight"], params["conv_out.bias"])
    pred = up.astype(dt) + res.transpose(0, 3, 1, 2)
    tape = {
        "fingerprint": params.fingerprint(),
        "shape": a1.shape,
        "cols": (cols1, cols2, cols3),
        "masks": (z1 > 0, z2 > 0),
    }
    return pred, tape


def forward(params: ModelParams, lrms: np.ndarray, pan: np.ndarray):
    """Full forward pass from low-resolution MS and full-resolution PAN.

    Accepts single images ``(C, h, w)`` / ``(1, H, W)`` or batches with a
    leading axis.  Returns ``(pred, tape)``; ``pred`` is unclamped.
    """
    single = pan.ndim == 3
    if single:
        lrms, pan = lrms[None], pan[None]
    if pan.shape[-3] != 1:
        raise ShapeError(f"PAN must have one band, got {pan.shape[-3]}")
    up = upsample_input(lrms, pan.shape[-2], pan.shape[-1], params.c_max)
    pred, tape = forward_prepared(params, up, pan)
    return (pred[0] if single else pred), tape


def predict(params: ModelParams, lrms: np.ndarray, pan: np.ndarray) -> np.ndarray:
    """Clamped prediction for evaluation."""
    return clamp01(forward(params, lrms, pan)[0])


def l1_loss(pred: np.ndarray, gt: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} vs gt {gt.shape}")
    diff = pred.astype(np.float64) - gt.astype(np.float64)
    n = diff.size
    loss = float(np.abs(diff).mean())
    grad = (np.sign(diff) / n).astype(pred.dtype)
    return loss, grad


def backward(params: ModelParams, tape: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of all parameter groups."""
    if tape["fingerprint"] != params.fingerprint():
        raise StaleTape("parameters changed since this tape was recorded")
    if dpred.ndim == 3:
        dpred = dpred[None]
    n, h, w, hid = tape["shape"]
    cols1, cols2, cols3 = tape["cols"]
    mask1, mask2 = tape["masks"]
    dt = params["conv1.weight"].dtype

    grads = {}
    dy = dpred.astype(dt).transpose(0, 2, 3, 1).reshape(n * h * w, -1)
    grads["conv_out.weight"] = (dy.T @ cols3).reshape(params["conv_out.weight"].shape)
    grads["conv_out.bias"] = dy.sum(axis=0)

    da2 = _col2im(dy @ _wmat(params["conv_out.weight"]), (n, h, w, hid))
    dz2 = (da2 * mask2).reshape(n * h * w, hid)
    grads["conv2.weight"] = (dz2.T @ cols2).reshape(params["conv2.weight"].shape)
    grads["conv2.bias"] = dz2.sum(axis=0)

    da1 = _col2im(dz2 @ _wmat(params["conv2.weight"]), (n, h, w, hid))
    dz1 = (da1 * mask1).reshape(n * h * w, hid)
    grads["conv1.weight"] = (dz1.T @ cols1).reshape(params["conv1.weight"].shape)
    grads["conv1.bias"] = dz1.sum(axis=0)
    return {g: grads[g].astype(dt) for g in GROUPS}
